"""
KONTRAKTOR v1.0 - Utility Functions
===================================
Funkcje pomocnicze: litery indeksów, numeryka, pliki
"""

import re
import string
import logging
from itertools import permutations
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)


class IndexUtils:
    """Operacje na literach indeksów"""

    ALPHABET = string.ascii_lowercase + string.ascii_uppercase

    @staticmethod
    def is_valid_letter(letter: str) -> bool:
        return len(letter) == 1 and letter in IndexUtils.ALPHABET

    @staticmethod
    def letter_key(letter: str) -> int:
        """Kolejność liter: a..z, potem A..Z"""
        return IndexUtils.ALPHABET.index(letter)

    @staticmethod
    def word_key(word: str) -> Tuple[int, ...]:
        return tuple(IndexUtils.letter_key(c) for c in word)

    @staticmethod
    def sort_letters(letters: Iterable[str]) -> str:
        return ''.join(sorted(set(letters), key=IndexUtils.letter_key))

    @staticmethod
    def permutations_of(letters: str) -> List[str]:
        """Wszystkie permutacje ciągu liter, w porządku leksykograficznym"""
        words = {''.join(p) for p in permutations(letters)}
        return sorted(words, key=IndexUtils.word_key)

    @staticmethod
    def transpose_axes(source: str, target: str) -> Tuple[int, ...]:
        """Osie dla np.transpose, które przestawiają `source` na `target`"""
        return tuple(source.index(c) for c in target)


class NumericUtils:
    """Operacje numeryczne"""

    @staticmethod
    def relative_frobenius(actual: np.ndarray, expected: np.ndarray) -> float:
        """Względny błąd w normie Frobeniusa"""
        reference = float(np.linalg.norm(np.asarray(expected, dtype=np.float64)))
        difference = float(np.linalg.norm(np.asarray(actual, dtype=np.float64)
                                          - np.asarray(expected, dtype=np.float64)))
        if reference == 0.0:
            return difference
        return difference / reference

    @staticmethod
    def format_literal(value: float) -> str:
        """Literał zmiennoprzecinkowy odtwarzalny bit w bit"""
        text = repr(float(value))
        if 'e' not in text and '.' not in text and 'n' not in text:
            text += '.0'
        return text


class FileUtils:
    """Narzędzia do pracy z plikami"""

    @staticmethod
    def sanitize_identifier(name: str) -> str:
        """Zamienia nazwę na poprawny identyfikator C"""
        clean = re.sub(r'[^A-Za-z0-9_]', '_', name)
        if not clean or clean[0].isdigit():
            clean = '_' + clean
        return clean

    @staticmethod
    def write_text(path: Union[str, Path], text: str) -> Path:
        """Zapisuje plik tekstowy (tworzy katalogi, stałe końce linii)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logger.debug(f"Zapisano {path}")
        return path
