"""
KONTRAKTOR v1.0 - wspólne fikstury testów
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from config import PipelineConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def quiet_config():
    """Przebieg bez emisji plików"""
    return PipelineConfig(emit='none', json_report=False, excel_report=False)


def make_config(**overrides) -> PipelineConfig:
    values = dict(emit='none', json_report=False, excel_report=False)
    values.update(overrides)
    return PipelineConfig(**values)
