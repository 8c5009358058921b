"""
KONTRAKTOR v1.0 - Errors
========================
Wyjątki kompilatora kerneli tensorowych
"""

from typing import Optional, Tuple

Location = Tuple[int, int]


class KontraktorError(Exception):
    """Bazowy wyjątek kompilatora"""

    code = 'error'

    def __init__(self, message: str, location: Optional[Location] = None):
        super().__init__(message)
        self.message = message
        self.location = location

    def __str__(self) -> str:
        if self.location:
            line, column = self.location
            return f"{self.message} (linia {line}, kolumna {column})"
        return self.message


class SizeMismatch(KontraktorError):
    """Jedna litera indeksu odpowiada dwóm różnym rozmiarom"""
    code = 'size_mismatch'


class DuplicateIndexInTensor(KontraktorError):
    """Litera powtórzona w jednym ciągu indeksów"""
    code = 'duplicate_index'


class IndexMismatch(KontraktorError):
    """Niezgodne zbiory indeksów (Add, przypisanie, długość ciągu)"""
    code = 'index_mismatch'


class FreeIndexNotInTarget(KontraktorError):
    """Indeks swobodny nie występuje w celu przypisania"""
    code = 'free_index_not_in_target'


class SizeLimitExceeded(KontraktorError):
    """Przekroczony limit rozmiaru (wyrocznie, rząd, liczba elementów)"""
    code = 'size_limit'


class AlphabetExhausted(IndexMismatch):
    """Więcej różnych liter niż 52 litery alfabetu indeksów"""
    code = 'alphabet_exhausted'


class CscRankError(KontraktorError):
    """Format CSC dozwolony tylko dla macierzy"""
    code = 'csc_rank'


class OutOfBox(KontraktorError):
    """Indeks poza pudełkiem układu pamięci"""
    code = 'out_of_box'


class UnboundSlot(KontraktorError):
    """Kernel uruchomiony bez podpiętego tensora"""
    code = 'unbound_slot'


class KernelSyntaxError(KontraktorError):
    """Błąd składni pliku z kernelami"""
    code = 'syntax'


class SppFormatError(KontraktorError):
    """Błędny plik wzorca rzadkości"""
    code = 'spp_format'


class PipelineError(KontraktorError):
    """Błąd wewnętrzny potoku kompilacji"""
    code = 'internal'
