"""
KONTRAKTOR v1.0 - Kernel Corpus
===============================
Rodziny kerneli z praktyki: ADER-DG na czworościanach (SeisSol),
ADER-DG-SEM na siatce prostokątnej (LinA) i analiza wielorozdzielcza (MRA)
"""

import logging
from math import comb, factorial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ast_nodes import Kernel, KernelFamily, accumulate
from parsers import export_family
from sparsity import SparsityPattern, derive_spp
from tensor_core import Coefficient, Tensor, random_values

logger = logging.getLogger(__name__)

QUANTITIES = 9
FACES = 4
ROTATIONS = 3


# ===================== Funkcje bazowe =====================

def basis_size(degree: int) -> int:
    """Liczba funkcji bazowych stopnia <= degree na czworościanie"""
    return comb(degree + 3, 3)


def face_basis_size(degree: int) -> int:
    return comb(degree + 2, 2)


def basis_degree(index: int) -> int:
    """Stopień funkcji bazowej o numerze index (bazy uporządkowane stopniami)"""
    degree = 0
    while basis_size(degree) <= index:
        degree += 1
    return degree


def _pattern(shape: Tuple[int, int], rule: Callable[[int, int], bool]) -> SparsityPattern:
    return SparsityPattern.from_coords(shape, [(i, j) for i in range(shape[0])
                                               for j in range(shape[1]) if rule(i, j)])


def stiffness_pattern(degree: int) -> SparsityPattern:
    """Macierz sztywności: tylko pierwsze kolumny, schodki po stopniach"""
    size, columns = basis_size(degree), face_basis_size(degree)
    return _pattern((size, size),
                    lambda k, l: l < columns and basis_degree(l) <= basis_degree(k))


def derivative_pattern(degree: int) -> SparsityPattern:
    """Pochodna obniża stopień: niezerowe tylko dla d(k) < d(l)"""
    size = basis_size(degree)
    return _pattern((size, size), lambda k, l: basis_degree(k) < basis_degree(l))


def star_pattern() -> SparsityPattern:
    """Jakobian sprężystości: naprężenia <-> prędkości (ten sam dla każdego kierunku)"""
    stresses, velocities = range(6), range(6, QUANTITIES)
    return _pattern((QUANTITIES, QUANTITIES),
                    lambda p, q: (p in stresses and q in velocities) or (p in velocities and q in stresses))


def _constant(name: str, pattern: SparsityPattern, rng: np.random.Generator,
              policy: Optional[str] = None) -> Tensor:
    return Tensor(name, pattern.extents, spp=pattern, values=random_values(pattern, rng), policy=policy)


# ===================== SeisSol =====================

SEISSOL_KERNELS = ('derivative', 'time_integral', 'volume', 'local_flux', 'neighbour_flux')


def seissol_family(order: int = 4, simulations: int = 1, kernels: Sequence[str] = SEISSOL_KERNELS,
                   seed: int = 0) -> KernelFamily:
    """
    Kernele ADER-DG dla sprężystości: pochodne czasowe (Cauchy-Kowalewska),
    całka czasowa, człon objętościowy, strumień lokalny i sąsiedni.
    Przy simulations > 1 tensory stopni swobody dostają wiodący indeks `s`.
    """
    if order < 2:
        raise ValueError(f"Rząd zbieżności musi być >= 2, podano {order}")
    if simulations < 1:
        raise ValueError("Liczba symulacji musi być dodatnia")
    unknown = set(kernels) - set(SEISSOL_KERNELS)
    if unknown:
        raise ValueError(f"Nieznane kernele SeisSol: {sorted(unknown)}")

    degree = order - 1
    size, face = basis_size(degree), face_basis_size(degree)
    rng = np.random.default_rng(seed)
    multi = simulations > 1

    def dof_letters(letters: str) -> str:
        return 's' + letters if multi else letters

    def dof(name: str, pattern: Optional[SparsityPattern] = None) -> Tensor:
        shape = (simulations, size, QUANTITIES) if multi else (size, QUANTITIES)
        return Tensor(name, shape, spp=pattern)

    kp, lq = dof_letters('kp'), dof_letters('lq')
    Q = dof('Q')
    I = dof('I')
    stiffness = [_constant(f"k{axis}", stiffness_pattern(degree), rng, policy='bbox')
                 for axis in ('Xi', 'Eta', 'Zeta')]
    derivative = [_constant(f"kDiv{axis}", derivative_pattern(degree), rng)
                  for axis in ('Xi', 'Eta', 'Zeta')]
    stars = [Tensor(f"star{axis}", (QUANTITIES, QUANTITIES), spp=star_pattern())
             for axis in 'ABC']

    family = KernelFamily(f"seissol_o{order}" + (f"_s{simulations}" if multi else ''))

    # pochodne D1..DN, wzorce wyprowadzone z poprzednich
    derivatives = [Q]
    if 'derivative' in kernels or 'time_integral' in kernels:
        for delta in range(degree):
            previous = derivatives[-1]
            terms = [m['kl'] * previous[lq] * star['pq'] for m, star in zip(derivative, stars)]
            expression = terms[0] + terms[1] + terms[2]
            pattern = derive_spp(expression, kp)
            derivatives.append(dof(f"D{delta + 1}", pattern))
            if 'derivative' in kernels:
                terms = [m['kl'] * previous[lq] * star['pq'] for m, star in zip(derivative, stars)]
                family.add(Kernel(f"derivative{delta}",
                                  [derivatives[-1][kp] <= terms[0] + terms[1] + terms[2]]))

    if 'time_integral' in kernels:
        # I = sum_d dt^(d+1)/(d+1)! D_d
        terms = [derivatives[d][kp] * Coefficient(1.0 / factorial(d + 1), ('dt',) * (d + 1))
                 for d in range(len(derivatives))]
        expression = terms[0]
        for term in terms[1:]:
            expression = expression + term
        family.add(Kernel('time_integral', [I[kp] <= expression]))

    if 'volume' in kernels:
        terms = [k['kl'] * I[lq] * star['pq'] for k, star in zip(stiffness, stars)]
        family.add(Kernel('volume', [accumulate(Q[kp], terms[0] + terms[1] + terms[2])]))

    if 'local_flux' in kernels or 'neighbour_flux' in kernels:
        r_hat = [_constant(f"rHat{f}", SparsityPattern.dense((size, face)), rng) for f in range(FACES)]
        if 'local_flux' in kernels:
            r_tilde = [_constant(f"rTilde{f}", SparsityPattern.dense((size, face)), rng) for f in range(FACES)]
            a_plus = [Tensor(f"aPlus{f}", (QUANTITIES, QUANTITIES)) for f in range(FACES)]
            terms = [r_hat[f]['km'] * r_tilde[f]['lm'] * I[lq] * a_plus[f]['pq'] for f in range(FACES)]
            expression = terms[0]
            for term in terms[1:]:
                expression = expression + term
            family.add(Kernel('local_flux', [accumulate(Q[kp], expression)]))
        if 'neighbour_flux' in kernels:
            rotation = [_constant(f"fRot{h}", SparsityPattern.dense((face, face)), rng) for h in range(ROTATIONS)]
            r_neigh = [_constant(f"rNeigh{f}", SparsityPattern.dense((size, face)), rng) for f in range(FACES)]
            a_minus = [Tensor(f"aMinus{f}", (QUANTITIES, QUANTITIES)) for f in range(FACES)]
            neighbour = dof('INeigh')
            for f in range(FACES):
                expression = (r_hat[f]['km'] * rotation[f % ROTATIONS]['mn'] * r_neigh[f]['ln']
                              * neighbour[lq] * a_minus[f]['pq'])
                family.add(Kernel(f"neighbour_flux{f}", [accumulate(Q[kp], expression)]))

    logger.info(f"Korpus SeisSol: rząd {order}, symulacje {simulations}, {len(family.kernels)} kerneli")
    return family


def neighbour_chain(order: int = 4, simulations: int = 1) -> KernelFamily:
    """Sam łańcuch strumienia sąsiedniego dla jednej ściany"""
    family = seissol_family(order, simulations, kernels=('neighbour_flux',))
    family.kernels = family.kernels[:1]
    return family


# ===================== LinA =====================

SIDES_2D = ('left', 'right', 'bottom', 'top')
SIDES_3D = SIDES_2D + ('back', 'front')


def _acoustic_pattern(dimensions: int, direction: int) -> SparsityPattern:
    """Ciśnienie <-> prędkość w kierunku `direction`"""
    count = dimensions + 1
    velocity = direction + 1
    return SparsityPattern.from_coords((count, count), [(0, velocity), (velocity, 0)])


def _flux_pattern(dimensions: int, direction: int) -> SparsityPattern:
    count = dimensions + 1
    velocity = direction + 1
    return SparsityPattern.from_coords((count, count),
                                       [(a, b) for a in (0, velocity) for b in (0, velocity)])


def _replace(letters: str, position: int, letter: str) -> str:
    return letters[:position] + letter + letters[position + 1:]


def lina_family(order: int = 3, dimensions: int = 3, seed: int = 0) -> KernelFamily:
    """
    Kernele ADER-DG-SEM dla akustyki liniowej: pochodne, całka czasowa,
    człon objętościowy, wartości na ścianach (evaluate_side) i strumienie
    z iloczynami zewnętrznymi. Macierze przechowywane w transpozycji.
    """
    if dimensions not in (2, 3):
        raise ValueError(f"LinA obsługuje 2 albo 3 wymiary, podano {dimensions}")
    if order < 2:
        raise ValueError(f"Rząd zbieżności musi być >= 2, podano {order}")
    nodes = order
    degree = order - 1
    quantities = dimensions + 1
    rng = np.random.default_rng(seed)
    space, summed = 'xyz'[:dimensions], 'lmn'[:dimensions]
    dof = space + 'p'
    shape = (nodes,) * dimensions + (quantities,)

    Q = Tensor('Q', shape)
    I = Tensor('I', shape)
    k_div = _constant('kDivT', SparsityPattern.dense((nodes, nodes)), rng)
    k_hat = _constant('kT', SparsityPattern.dense((nodes, nodes)), rng)
    stars = [Tensor(f"star{axis}T", (quantities, quantities), spp=_acoustic_pattern(dimensions, d))
             for d, axis in enumerate('ABC'[:dimensions])]

    def directional(matrix: Tensor, source: Tensor):
        terms = []
        for d in range(dimensions):
            letters = _replace(space, d, summed[d]) + 'q'
            terms.append(matrix[summed[d] + space[d]] * source[letters] * stars[d]['qp'])
        expression = terms[0]
        for term in terms[1:]:
            expression = expression + term
        return expression

    family = KernelFamily(f"lina{dimensions}d_o{order}")

    derivatives = [Q]
    for delta in range(degree):
        target = Tensor(f"D{delta + 1}", shape)
        family.add(Kernel(f"derivative{delta}", [target[dof] <= directional(k_div, derivatives[-1])]))
        derivatives.append(target)

    expression = derivatives[0][dof] * Coefficient(1.0, ('dt',))
    for d in range(1, len(derivatives)):
        expression = expression + derivatives[d][dof] * Coefficient(1.0 / factorial(d + 1), ('dt',) * (d + 1))
    family.add(Kernel('time_integral', [I[dof] <= expression]))

    family.add(Kernel('volume', [accumulate(Q[dof], directional(k_hat, I))]))

    # węzły brzegowe: F = delta_{i0} albo delta_{iN}; podniesienie = delta / waga Gaussa-Lobatto
    lift = degree * (degree + 1) / 2.0
    sides = SIDES_3D if dimensions == 3 else SIDES_2D
    evaluations, fluxes = [], []
    for position, side in enumerate(sides):
        d, node = position // 2, (0 if position % 2 == 0 else nodes - 1)
        picker = np.zeros(nodes)
        picker[node] = 1.0
        select = Tensor(f"f{side.capitalize()}", (nodes,), values=picker)
        lifting = Tensor(f"fHat{side.capitalize()}", (nodes,), values=picker * lift)
        rest = space[:d] + space[d + 1:]
        side_shape = (nodes,) * (dimensions - 1) + (quantities,)
        own = Tensor(f"side{side.capitalize()}", side_shape)
        neighbour = Tensor(f"neigh{side.capitalize()}", side_shape)
        a_plus = Tensor(f"aPlus{side.capitalize()}T", (quantities, quantities), spp=_flux_pattern(dimensions, d))
        a_minus = Tensor(f"aMinus{side.capitalize()}T", (quantities, quantities), spp=_flux_pattern(dimensions, d))
        evaluations.append(own[rest + 'p'] <= select[summed[d]] * I[_replace(space, d, summed[d]) + 'p'])
        fluxes.append(lifting[space[d]] * (own[rest + 'q'] * a_plus['qp'] + neighbour[rest + 'q'] * a_minus['qp']))

    family.add(Kernel('evaluate_side', evaluations))
    expression = fluxes[0]
    for term in fluxes[1:]:
        expression = expression + term
    family.add(Kernel('flux', [accumulate(Q[dof], expression)]))
    logger.info(f"Korpus LinA: {dimensions}D, rząd {order}, {len(family.kernels)} kerneli")
    return family


# ===================== MRA =====================

def mra_family(p: int = 4, q: int = 2, pretransposed: bool = False, seed: int = 0) -> KernelFamily:
    """R_ijk = S_xyz XL_xl XR_li YL_ym YR_mj ZL_zn ZR_nk (filtry o rozmiarach p i q)"""
    if p < 1 or q < 1:
        raise ValueError("Rozmiary filtrów muszą być dodatnie")
    rng = np.random.default_rng(seed)
    dense = SparsityPattern.dense
    S = Tensor('S', (p, p, p))
    R = Tensor('R', (p, p, p))
    if pretransposed:
        xl, xl_letters = _constant('XLt', dense((q, p)), rng), 'lx'
        xr, xr_letters = _constant('XRt', dense((p, q)), rng), 'il'
    else:
        xl, xl_letters = _constant('XL', dense((p, q)), rng), 'xl'
        xr, xr_letters = _constant('XR', dense((q, p)), rng), 'li'
    yl, yr = _constant('YL', dense((p, q)), rng), _constant('YR', dense((q, p)), rng)
    zl, zr = _constant('ZL', dense((p, q)), rng), _constant('ZR', dense((q, p)), rng)
    expression = (S['xyz'] * xl[xl_letters] * xr[xr_letters] * yl['ym'] * yr['mj']
                  * zl['zn'] * zr['nk'])
    name = f"mra_p{p}_q{q}" + ('_t' if pretransposed else '')
    return KernelFamily(name, [Kernel('mra', [R['ijk'] <= expression])])


# ===================== Rejestr =====================

CORPORA: Dict[str, Callable[..., KernelFamily]] = {
    'seissol': seissol_family,
    'lina': lina_family,
    'mra': mra_family,
}


def _parameter(text: str):
    lowered = text.lower()
    if lowered in ('true', 'false'):
        return lowered == 'true'
    return int(text)


def corpus_family(spec: str) -> KernelFamily:
    """Rodzina z opisu `nazwa[:klucz=wartość,...]`, np. `seissol:order=4,simulations=8`"""
    name, _, arguments = spec.partition(':')
    if name not in CORPORA:
        raise ValueError(f"Nieznany korpus: {name} (dostępne: {', '.join(CORPORA)})")
    params = {}
    for item in filter(None, arguments.split(',')):
        key, _, value = item.partition('=')
        params[key.strip()] = _parameter(value.strip())
    return CORPORA[name](**params)


def standard_corpus() -> List[KernelFamily]:
    """Zestaw rodzin używany w przeglądzie raportów"""
    families = [seissol_family(order, sims) for order in (2, 3, 4) for sims in (1, 8)]
    families.append(seissol_family(6, kernels=('volume',)))
    families += [lina_family(order, dims) for order in (3, 4) for dims in (2, 3)]
    families += [mra_family(p, q, t) for p in (4, 8) for q in (1, 2, 4) for t in (False, True)]
    return families


def write_corpus(family: KernelFamily, directory: Path, precision: str = 'double',
                 alignment: int = 1) -> Path:
    """Zapisuje rodzinę jako plik kerneli (z plikami spp/values obok)"""
    return export_family(family, Path(directory), precision, alignment)
