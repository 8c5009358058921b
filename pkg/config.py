"""
KONTRAKTOR v1.0 - Configuration Module
======================================
Centralna konfiguracja kompilatora kerneli tensorowych
"""

import json
import logging
from pathlib import Path
from typing import Dict, Any, List, Optional
from dataclasses import dataclass, field, asdict

logger = logging.getLogger(__name__)

# Wersja aplikacji
APP_VERSION = "1.0.0"
APP_NAME = "KONTRAKTOR"
APP_DESCRIPTION = "Kompilator małych kerneli tensorowych z uwzględnieniem rzadkości"

# Ścieżki domyślne
DEFAULT_PATHS = {
    'data_dir': Path.home() / '.kontraktor' / 'data',
    'logs_dir': Path.home() / '.kontraktor' / 'logs',
    'output_dir': Path('build'),
}

SUPPORTED_PRECISIONS = ['double', 'single']
SUPPORTED_ALIGNMENTS = [1, 2, 4, 8, 16]
LAYOUT_POLICIES = ['auto', 'dense', 'bbox', 'aligned', 'csc']


# Ustawienia kompilacji
@dataclass
class CompilerSettings:
    """Konfiguracja etapów kompilacji"""
    precision: str = 'double'
    use_eqspp: bool = True
    prefetch: bool = True
    workers: int = 4


# Ustawienia układów pamięci
@dataclass
class LayoutSettings:
    """Konfiguracja układów pamięci"""
    alignment: int = 1
    default_policy: str = 'auto'  # auto, dense, bbox, aligned
    auto_csc: bool = True
    csc_density_threshold: float = 0.4
    overrides: Dict[str, str] = field(default_factory=dict)


# Ustawienia backendów
@dataclass
class BackendSettings:
    """Lista priorytetów backendów i format wyjścia"""
    priority: List[str] = field(default_factory=lambda: ['portable'])
    emit: str = 'c99'  # c99, none


# Ustawienia raportu
@dataclass
class ReportSettings:
    """Konfiguracja raportów"""
    json_report: bool = True
    excel_report: bool = False


# Limity skali "na biurko"
@dataclass
class LimitSettings:
    """Twarde limity rozmiarów"""
    max_rank: int = 7
    max_elements: int = 2 ** 20
    max_operands: int = 7
    brute_force_points: int = 2 ** 20
    oracle_max_operands: int = 7
    oracle_max_letters: int = 10
    configuration_oracle_max: int = 200000


# Główna klasa konfiguracji
class AppConfig:
    """Centralna konfiguracja aplikacji"""

    SECTIONS = ('compiler', 'layout', 'backend', 'report', 'limits')

    def __init__(self, config_file: Optional[Path] = None):
        self.compiler = CompilerSettings()
        self.layout = LayoutSettings()
        self.backend = BackendSettings()
        self.report = ReportSettings()
        self.limits = LimitSettings()
        self.config_file = config_file or DEFAULT_PATHS['data_dir'] / 'config.json'
        self._load_user_config()

    def _load_user_config(self):
        """Ładuje konfigurację użytkownika z pliku JSON"""
        if self.config_file.exists():
            try:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    user_config = json.load(f)
                    self._apply_user_config(user_config)
            except Exception as e:
                logger.warning(f"⚠️ Błąd wczytywania konfiguracji użytkownika: {e}")

    def _apply_user_config(self, config: Dict[str, Any]):
        """Aplikuje ustawienia użytkownika"""
        for section, settings in config.items():
            if section in self.SECTIONS and isinstance(settings, dict):
                section_obj = getattr(self, section)
                for key, value in settings.items():
                    if hasattr(section_obj, key):
                        setattr(section_obj, key, value)
                    else:
                        logger.warning(f"Nieznany klucz konfiguracji: {section}.{key}")

    def save_user_config(self):
        """Zapisuje bieżącą konfigurację"""
        self.config_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_file, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    def to_dict(self) -> Dict[str, Any]:
        return {section: asdict(getattr(self, section)) for section in self.SECTIONS}


# Singleton konfiguracji
CONFIG = AppConfig()


@dataclass
class PipelineConfig:
    """Niezmienne ustawienia jednego przebiegu kompilacji"""
    precision: str = 'double'
    alignment: int = 1
    default_policy: str = 'auto'
    auto_csc: bool = True
    csc_density_threshold: float = 0.4
    layout_overrides: Dict[str, str] = field(default_factory=dict)
    backend_priority: List[str] = field(default_factory=lambda: ['portable'])
    emit: str = 'c99'
    use_eqspp: bool = True
    prefetch: bool = True
    workers: int = 1
    json_report: bool = True
    excel_report: bool = False
    output_dir: Optional[Path] = None
    limits: LimitSettings = field(default_factory=LimitSettings)

    def __post_init__(self):
        if self.precision not in SUPPORTED_PRECISIONS:
            raise ValueError(f"Nieobsługiwana precyzja: {self.precision}")
        if self.alignment not in SUPPORTED_ALIGNMENTS:
            raise ValueError(f"Nieobsługiwane wyrównanie: {self.alignment}")
        if self.default_policy not in LAYOUT_POLICIES or self.default_policy == 'csc':
            raise ValueError(f"Nieobsługiwana polityka układu: {self.default_policy}")
        for name, policy in self.layout_overrides.items():
            if policy not in LAYOUT_POLICIES:
                raise ValueError(f"Nieobsługiwana polityka układu dla {name}: {policy}")
        if self.workers < 1:
            raise ValueError("Liczba wątków musi być dodatnia")

    @classmethod
    def from_app_config(cls, app: Optional[AppConfig] = None, **overrides) -> 'PipelineConfig':
        """Buduje konfigurację przebiegu z ustawień aplikacji"""
        app = app or CONFIG
        values = dict(
            precision=app.compiler.precision,
            alignment=app.layout.alignment,
            default_policy=app.layout.default_policy,
            auto_csc=app.layout.auto_csc,
            csc_density_threshold=app.layout.csc_density_threshold,
            layout_overrides=dict(app.layout.overrides),
            backend_priority=list(app.backend.priority),
            emit=app.backend.emit,
            use_eqspp=app.compiler.use_eqspp,
            prefetch=app.compiler.prefetch,
            workers=app.compiler.workers,
            json_report=app.report.json_report,
            excel_report=app.report.excel_report,
            limits=LimitSettings(**asdict(app.limits)),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
