"""Exact Jacobian rank and the non-singularity classifier for line solutions."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Sequence

from .core import DiagonalForm, InstanceError, LineSystem, vanishing_subsum_scan


class InternalConsistencyError(AssertionError):
    """A proven implication failed on concrete data: a bug, not bad input."""


def jacobian_matrix(ls: LineSystem, z: Sequence[int]) -> list[list[int]]:
    """``J[j-1][i] = j * c_i * y_i^(k-j) * z_i^(j-1)``."""
    if len(z) != ls.s:
        raise InstanceError(f"z has length {len(z)}, system has s={ls.s}")
    return [
        [j * ls.A[j - 1][i] * int(z[i]) ** (j - 1) for i in range(ls.s)]
        for j in range(1, ls.k + 1)
    ]


def bareiss_rank(matrix: Sequence[Sequence[int]]) -> int:
    """Rank over Q by fraction-free elimination."""
    m = [list(map(int, row)) for row in matrix]
    if not m:
        return 0
    rows, cols = len(m), len(m[0])
    rank, prev = 0, 1
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for r in range(rank + 1, rows):
            for c in range(col + 1, cols):
                m[r][c] = (m[rank][col] * m[r][c] - m[r][col] * m[rank][c]) // prev
            m[r][col] = 0
        prev = m[rank][col]
        rank += 1
        if rank == rows:
            break
    return rank


def bareiss_det(matrix: Sequence[Sequence[int]]) -> int:
    m = [list(map(int, row)) for row in matrix]
    n = len(m)
    if any(len(row) != n for row in m):
        raise InstanceError("determinant needs a square matrix")
    sign, prev = 1, 1
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return 0
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            sign = -sign
        for r in range(col + 1, n):
            for c in range(col + 1, n):
                m[r][c] = (m[col][col] * m[r][c] - m[r][col] * m[col][c]) // prev
            m[r][col] = 0
        prev = m[col][col]
    return sign * m[n - 1][n - 1] if n else 1


def minor(matrix: Sequence[Sequence[int]], cols: Sequence[int]) -> int:
    return bareiss_det([[row[c] for c in cols] for row in matrix])


def ratio_profile(ls: LineSystem, z: Sequence[int]) -> Counter:
    """Multiset of the exact ratios ``z_i / y_i``."""
    return Counter(Fraction(int(zi), yi) for zi, yi in zip(z, ls.y))


@dataclass(frozen=True)
class JacobianReport:
    matrix: tuple[tuple[int, ...], ...]
    rank: int
    nonsingular: bool
    ratio_profile: Counter
    distinct_ratios: int


def jacobian(ls: LineSystem, z: Sequence[int]) -> JacobianReport:
    J = jacobian_matrix(ls, z)
    rank = bareiss_rank(J)
    prof = ratio_profile(ls, z)
    return JacobianReport(tuple(map(tuple, J)), rank, rank == ls.k, prof, len(prof))


def is_nonsingular(ls: LineSystem, z: Sequence[int]) -> bool:
    """Full rank k over Q.

    For an integer point this one rank answers both the real question and the
    p-adic one, since Q embeds in R and in every Q_p.
    """
    return bareiss_rank(jacobian_matrix(ls, z)) == ls.k


def all_minors_vanish(ls: LineSystem, z: Sequence[int]) -> bool:
    J = jacobian_matrix(ls, z)
    return all(minor(J, cols) == 0 for cols in combinations(range(ls.s), ls.k))


@dataclass(frozen=True)
class SolutionReport:
    z: tuple[int, ...]
    is_solution: bool
    vanishing_subsums_found: tuple[frozenset, ...]
    all_z_nonzero: bool
    guarantee_applicable: bool
    guaranteed_nonsingular: bool
    rank: int
    nonsingular: bool


def classify_solution(ls: LineSystem, z: Sequence[int],
                      subsums: Sequence[frozenset] | None = None) -> SolutionReport:
    """Check the two generic sufficient conditions for non-singularity.

    (a) the base point has no vanishing subsums and ``z != 0``;
    (b) every ``z_i != 0``.
    Both rely on ``n = -c0 != 0``; for a relaxed system with ``c0 = 0`` no
    guarantee is issued.  When ``z`` solves the system and a guarantee holds,
    the exact rank must equal k; a failure raises
    :class:`InternalConsistencyError`.
    """
    z = tuple(int(v) for v in z)
    if len(z) != ls.s:
        raise InstanceError(f"z has length {len(z)}, system has s={ls.s}")
    if subsums is None:
        subsums = vanishing_subsum_scan(ls.c, ls.y, k=ls.k)
    subsums = tuple(subsums)
    nonzero = any(z)
    all_nonzero = all(z)
    applicable = nonzero
    cond_a = nonzero and not subsums
    cond_b = all_nonzero and ls.c0 != 0
    guaranteed = applicable and (cond_a or cond_b)
    rank = bareiss_rank(jacobian_matrix(ls, z))
    solves = ls.annihilates(z)
    if guaranteed and solves and rank != ls.k:
        raise InternalConsistencyError(
            f"guaranteed non-singular solution {z} has Jacobian rank {rank} < k={ls.k}"
        )
    return SolutionReport(z, solves, subsums, all_nonzero, applicable, guaranteed,
                          rank, rank == ls.k)


def classify_solutions(ls: LineSystem, zs) -> list[SolutionReport]:
    subsums = vanishing_subsum_scan(ls.c, ls.y, k=ls.k)
    return [classify_solution(ls, z, subsums) for z in zs]


def classify_form_solution(form: DiagonalForm, y: Sequence[int], z: Sequence[int]) -> SolutionReport:
    from .core import build_line_system

    return classify_solution(build_line_system(form, y), z)
