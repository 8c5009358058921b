"""
KONTRAKTOR v1.0 - Precision Configuration
=========================================
Profile precyzji: typy C i numpy, tolerancje, literały
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np


@dataclass(frozen=True)
class PrecisionProfile:
    """Profil precyzji ze wszystkimi ustawieniami"""
    name: str
    ctype: str
    dtype: type
    element_bytes: int
    tolerance: float
    literal_suffix: str

    def cast(self, value: float):
        """Konwersja wartości na typ obliczeń interpretera"""
        if self.dtype is np.float64:
            return float(value)
        return self.dtype(value)

    def c_literal(self, text: str) -> str:
        if self.literal_suffix:
            return f"(({self.ctype}) {text})"
        return text


# Definicje precyzji
PRECISION_PROFILES: Dict[str, PrecisionProfile] = {
    'double': PrecisionProfile(
        name='double',
        ctype='double',
        dtype=np.float64,
        element_bytes=8,
        tolerance=1e-12,
        literal_suffix='',
    ),
    'single': PrecisionProfile(
        name='single',
        ctype='float',
        dtype=np.float32,
        element_bytes=4,
        tolerance=1e-5,
        literal_suffix='f',
    ),
}


def get_precision_profile(precision: str) -> PrecisionProfile:
    """Pobiera profil dla danej precyzji"""
    try:
        return PRECISION_PROFILES[precision]
    except KeyError:
        raise ValueError(f"Nieobsługiwana precyzja: {precision}") from None
