"""Exact counting of integer points on the line system and its relatives.

Every counter here reduces to the same problem: given coefficient rows
``A[j]`` (degree j+1) and, per coordinate, a finite range of admissible
integer values, count tuples ``z`` with ``sum_i A[j][i] z_i^(j+1) = 0`` for
every j.  The naive engine evaluates every tuple.  The meet-in-the-middle
engine enumerates the key vectors of two halves and joins the left keys
against the negated right keys.
"""
from __future__ import annotations

import itertools
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import BudgetError, InstanceError, LineSystem, relaxed_line_system

NAIVE_BUDGET = 10**9
MEMORY_BUDGET = 2 * 1024**3
_INT64_SAFE = 2**62


@dataclass(frozen=True)
class CountResult:
    count: int
    box: int
    method: str
    wall_time: float = field(compare=False)
    digest: str = ""

    def as_record(self) -> dict:
        return {
            "count": str(self.count),
            "box": self.box,
            "method": self.method,
            "seconds": round(self.wall_time, 6),
            "digest": self.digest,
        }


def default_threads() -> int:
    env = os.environ.get("DIAGLINE_THREADS")
    return max(1, int(env)) if env else 1


# -- key packing ---------------------------------------------------------------

class _Packing:
    """Balanced mixed-radix packing of key vectors into one int64.

    The map is linear, so packing commutes with addition and negation, and it
    is injective while every component stays within its bound.
    """

    def __init__(self, bounds: Sequence[int]):
        self.bounds = list(bounds)
        mult, total = [], 1
        for b in self.bounds:
            mult.append(total)
            total *= 2 * b + 1
        self.mult = mult
        self.span = total
        self.fits = total < _INT64_SAFE

    def coordinate_keys(self, A, i: int, values: np.ndarray) -> np.ndarray:
        keys = np.zeros(len(values), dtype=np.int64)
        v = np.ones(len(values), dtype=np.int64)
        for j, row in enumerate(A):
            v = v * values
            keys += np.int64(row[i] * self.mult[j]) * v
        return keys


def _key_bounds(A, ranges) -> list[int]:
    out = []
    for j, row in enumerate(A):
        out.append(sum(abs(a) * max(abs(int(r[0])), abs(int(r[-1]))) ** (j + 1)
                       for a, r in zip(row, ranges)))
    return out


def _half_keys(A, idx, ranges, packing: _Packing, fixed: dict | None = None) -> np.ndarray:
    keys = np.zeros(1, dtype=np.int64)
    for i in idx:
        vals = ranges[i] if not fixed or i not in fixed else np.array([fixed[i]], dtype=np.int64)
        ck = packing.coordinate_keys(A, i, vals)
        keys = (keys[:, None] + ck[None, :]).ravel()
    return keys


def _split(s: int, split) -> tuple[list[int], list[int]]:
    if split is None:
        h = (s + 1) // 2
        return list(range(h)), list(range(h, s))
    left = sorted(set(int(i) for i in split))
    if not left or any(i < 0 or i >= s for i in left):
        raise InstanceError(f"invalid split {split!r} for s={s}")
    right = [i for i in range(s) if i not in left]
    return left, right


def _ranges_symmetric(s: int, B: int) -> list[np.ndarray]:
    vals = np.arange(-B, B + 1, dtype=np.int64)
    return [vals] * s


# -- engines -------------------------------------------------------------------

def _naive_count(A, ranges, budget: int) -> int:
    s = len(ranges)
    total = math.prod(len(r) for r in ranges)
    if total > budget:
        raise BudgetError(
            f"naive enumeration needs {total} evaluations, budget is {budget}",
            required=total,
        )
    k = len(A)
    bounds = _key_bounds(A, ranges)
    if max(bounds) >= _INT64_SAFE:
        count = 0
        for z in itertools.product(*[r.tolist() for r in ranges]):
            if all(sum(a * zi ** (j + 1) for a, zi in zip(A[j], z)) == 0 for j in range(k)):
                count += 1
        return count
    # inner block of up to ~10^5 tuples is evaluated as one array per outer tuple
    m, size = 0, 1
    while m < s and size * len(ranges[s - 1 - m]) <= 10**5:
        size *= len(ranges[s - 1 - m])
        m += 1
    m = max(m, 1)
    inner = ranges[s - m:]
    grids = np.meshgrid(*inner, indexing="ij")
    flat = [g.ravel() for g in grids]
    inner_vals = np.zeros((k, flat[0].size), dtype=np.int64)
    for j in range(k):
        for t, col in enumerate(range(s - m, s)):
            inner_vals[j] += A[j][col] * flat[t] ** (j + 1)
    count = 0
    for outer in itertools.product(*[r.tolist() for r in ranges[: s - m]]):
        mask = np.ones(inner_vals.shape[1], dtype=bool)
        for j in range(k):
            part = sum(a * zi ** (j + 1) for a, zi in zip(A[j][: s - m], outer))
            mask &= inner_vals[j] == -part
        count += int(mask.sum())
    return count


def _estimate_join_bytes(ranges, left, right) -> int:
    nl = math.prod(len(ranges[i]) for i in left)
    nr = math.prod(len(ranges[i]) for i in right)
    # keys, sort buffer and unique/count arrays for the larger half
    return 8 * 4 * max(nl, nr) + 8 * 2 * min(nl, nr)


def _dict_join(A, ranges, left, right) -> int:
    k = len(A)

    def table(idx):
        acc = {(0,) * k: 1}
        for i in idx:
            contrib = [tuple(A[j][i] * v ** (j + 1) for j in range(k)) for v in ranges[i].tolist()]
            nxt: dict = {}
            for key, mult in acc.items():
                for ck in contrib:
                    nk = tuple(a + b for a, b in zip(key, ck))
                    nxt[nk] = nxt.get(nk, 0) + mult
            acc = nxt
        return acc

    lt, rt = table(left), table(right)
    return sum(m * rt.get(tuple(-v for v in key), 0) for key, m in lt.items())


def _sorted_counts(keys: np.ndarray):
    keys.sort()
    return np.unique(keys, return_counts=True)


def _match_chunk(ul, cl, keys_r) -> int:
    ur, cr = _sorted_counts(-keys_r)
    pos = np.searchsorted(ul, ur)
    pos_c = np.minimum(pos, len(ul) - 1)
    hit = ul[pos_c] == ur
    if not hit.any():
        return 0
    prods = cl[pos_c[hit]].astype(np.int64) * cr[hit].astype(np.int64)
    return int(prods.sum(dtype=np.int64))


def _right_chunks(right, ranges, threads):
    """Static partition of the right half by the values of its first coordinate."""
    if not right:
        return [None]
    head = right[0]
    vals = ranges[head].tolist()
    n = max(1, min(len(vals), threads * 4 if threads > 1 else 1))
    return [vals[t::n] for t in range(n)]


def _mitm_count(A, ranges, split=None, threads: int = 1, memory_budget: int = MEMORY_BUDGET) -> int:
    s = len(ranges)
    left, right = _split(s, split)
    need = _estimate_join_bytes(ranges, left, right)
    if need > memory_budget:
        raise BudgetError(
            f"meet-in-the-middle tables need about {need} bytes, budget is {memory_budget}",
            required=need,
        )
    packing = _Packing(_key_bounds(A, ranges))
    if not packing.fits:
        return _dict_join(A, ranges, left, right)
    ul, cl = _sorted_counts(_half_keys(A, left, ranges, packing))
    if not right:
        hit = np.searchsorted(ul, 0)
        return int(cl[hit]) if hit < len(ul) and ul[hit] == 0 else 0
    nl = int(cl.sum())
    nr = math.prod(len(ranges[i]) for i in right)
    if nl * nr >= _INT64_SAFE:
        return _dict_join(A, ranges, left, right)
    head = right[0]

    def work(vals):
        sub = list(ranges)
        sub[head] = np.asarray(vals, dtype=np.int64)
        return _match_chunk(ul, cl, _half_keys(A, right, sub, packing))

    chunks = _right_chunks(right, ranges, threads)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]
    return sum(parts)


def _streaming_count(A, ranges, split=None, chunk_rows: int = 1 << 22, workdir=None) -> int:
    """Sorted-run join with the left half spilled to disk.

    The left half is built one value of its first coordinate at a time; each
    run is sorted, reduced to (key, multiplicity) and appended to a memory
    mapped file.  The right half is then streamed the same way and joined
    against every run by binary search.
    """
    s = len(ranges)
    left, right = _split(s, split)
    packing = _Packing(_key_bounds(A, ranges))
    if not packing.fits:
        return _dict_join(A, ranges, left, right)
    head_l = left[0]
    runs = []
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        for n, v in enumerate(ranges[head_l].tolist()):
            keys = _half_keys(A, left, ranges, packing, fixed={head_l: v})
            keys.sort()
            uk, cnt = np.unique(keys, return_counts=True)
            path = os.path.join(tmp, f"run{n}.npy")
            np.save(path, np.stack([uk, cnt.astype(np.int64)]))
            runs.append(path)
        total = 0
        right_groups = [[v] for v in ranges[right[0]].tolist()] if right else [None]
        for group in right_groups:
            if group is None:
                rkeys = np.zeros(1, dtype=np.int64)
            else:
                rkeys = _half_keys(A, right, ranges, packing, fixed={right[0]: group[0]})
            for start in range(0, len(rkeys), chunk_rows):
                part = -rkeys[start:start + chunk_rows]
                part.sort()
                ur, cr = np.unique(part, return_counts=True)
                for path in runs:
                    run = np.load(path, mmap_mode="r")
                    uk, cnt = run[0], run[1]
                    pos = np.searchsorted(uk, ur)
                    pos_c = np.minimum(pos, len(uk) - 1)
                    hit = uk[pos_c] == ur
                    if hit.any():
                        total += int((np.asarray(cnt[pos_c[hit]]) * cr[hit]).sum())
                    del run
    return total


def _dispatch(A, ranges, method: str, split=None, threads: int = 1,
              memory_budget: int = MEMORY_BUDGET, naive_budget: int = NAIVE_BUDGET):
    if method == "auto":
        total = math.prod(len(r) for r in ranges)
        if total <= 10**5:
            method = "naive"
        else:
            s = len(ranges)
            left, right = _split(s, split)
            method = "mitm" if _estimate_join_bytes(ranges, left, right) <= memory_budget else "stream"
    if method == "naive":
        return _naive_count(A, ranges, naive_budget), method
    if method == "mitm":
        return _mitm_count(A, ranges, split, threads, memory_budget), method
    if method == "stream":
        return _streaming_count(A, ranges, split), method
    raise InstanceError(f"unknown counting method {method!r}")


# -- public counters -----------------------------------------------------------

def _check_box(B: int) -> int:
    if isinstance(B, bool) or int(B) != B or B < 0:
        raise InstanceError(f"box bound must be a nonnegative integer, got {B!r}")
    return int(B)


def count_lines(ls: LineSystem, B: int, method: str = "auto", split=None,
                threads: int | None = None, memory_budget: int = MEMORY_BUDGET,
                naive_budget: int = NAIVE_BUDGET) -> CountResult:
    """Number of ``z`` in ``[-B, B]^s`` solving the line system."""
    B = _check_box(B)
    threads = default_threads() if threads is None else threads
    t0 = time.perf_counter()
    count, used = _dispatch(ls.A, _ranges_symmetric(ls.s, B), method, split,
                            threads, memory_budget, naive_budget)
    return CountResult(count, B, used, time.perf_counter() - t0, ls.digest())


def count_lines_naive(ls: LineSystem, B: int, budget: int = NAIVE_BUDGET) -> CountResult:
    return count_lines(ls, B, method="naive", naive_budget=budget)


def count_lines_mitm(ls: LineSystem, B: int, split=None, threads: int | None = None,
                     memory_budget: int = MEMORY_BUDGET) -> CountResult:
    return count_lines(ls, B, method="mitm", split=split, threads=threads,
                       memory_budget=memory_budget)


def count_lines_streaming(ls: LineSystem, B: int, split=None) -> CountResult:
    return count_lines(ls, B, method="stream", split=split)


SOLUTION_BUDGET = 10**7


def enumerate_solutions(ls: LineSystem, B: int, split=None, budget: int = SOLUTION_BUDGET) -> np.ndarray:
    """All ``z`` in ``[-B, B]^s`` solving the line system, one row each.

    Same join as the counter, but each matched key group is expanded into
    coordinate tuples.  Rows come out grouped by the right half.
    """
    B = _check_box(B)
    A, s = ls.A, ls.s
    ranges = _ranges_symmetric(s, B)
    left, right = _split(s, split)
    packing = _Packing(_key_bounds(A, ranges))
    if not packing.fits:
        raise BudgetError("key vectors do not pack into int64 for this box", packing.span)
    total = count_lines(ls, B).count
    if total * s > budget:
        raise BudgetError(f"{total} solutions exceed the listing budget", total * s)
    width = 2 * B + 1
    kl = _half_keys(A, left, ranges, packing)
    kr = _half_keys(A, right, ranges, packing) if right else np.zeros(1, dtype=np.int64)
    order = np.argsort(kl, kind="stable")
    sl = kl[order]
    lo = np.searchsorted(sl, -kr, side="left")
    hi = np.searchsorted(sl, -kr, side="right")
    cnt = hi - lo
    n = int(cnt.sum())
    ridx = np.repeat(np.arange(len(kr)), cnt)
    offset = np.arange(n) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    lidx = order[np.repeat(lo, cnt) + offset]
    out = np.empty((n, s), dtype=np.int64)
    if left:
        out[:, left] = np.stack(np.unravel_index(lidx, (width,) * len(left)), axis=1) - B
    if right:
        out[:, right] = np.stack(np.unravel_index(ridx, (width,) * len(right)), axis=1) - B
    return out


def count_translation_system(c: Sequence[int], k: int, X: int, method: str = "auto",
                             threads: int | None = None) -> CountResult:
    """Solutions of ``sum_i c_i x_i^j = 0`` (1 <= j <= k) with ``|x_i| <= X``."""
    return count_lines(relaxed_line_system(k, c), X, method=method, threads=threads)


@dataclass(frozen=True)
class AveragingReport:
    X: int
    lhs: int
    rhs_count: int
    holds: bool

    @property
    def rhs(self) -> Fraction:
        return Fraction(self.rhs_count, self.X)


def verify_averaging_inequality(c: Sequence[int], k: int, X: int,
                                method: str = "auto") -> AveragingReport:
    """Compare the translation count against its averaged majorant.

    The majorant is ``X^-1`` times the number of ``(x_0, ..., x_s)`` in
    ``[-2X, 2X]^(s+1)`` with ``c_0 x_0^j + sum c_i x_i^j = 0``, where
    ``c_0 = -(c_1 + ... + c_s)``.  The comparison ``lhs * X <= count`` is
    exact.
    """
    c = tuple(int(v) for v in c)
    if sum(c) == 0:
        raise InstanceError("averaging needs c_1 + ... + c_s != 0")
    X = _check_box(X)
    if X < 1:
        raise InstanceError("averaging needs X >= 1")
    lhs = count_translation_system(c, k, X, method=method).count
    c0 = -sum(c)
    rhs_count = count_translation_system((c0,) + c, k, 2 * X, method=method).count
    return AveragingReport(X, lhs, rhs_count, lhs * X <= rhs_count)


def count_vinogradov(t: int, k: int, X: int, method: str = "mitm") -> CountResult:
    """Solutions of ``sum_l (x_l^j - y_l^j) = 0`` (1 <= j <= k) with ``1 <= x, y <= X``.

    Uses the positive box ``[1, X]``, the classical convention for this count.
    """
    if t < 1 or k < 1:
        raise InstanceError("need t >= 1 and k >= 1")
    X = _check_box(X)
    ls = relaxed_line_system(k, [1] * t + [-1] * t)
    vals = np.arange(1, X + 1, dtype=np.int64)
    t0 = time.perf_counter()
    if X == 0:
        return CountResult(0, X, method, 0.0, ls.digest())
    split = list(range(t)) if method in ("mitm", "stream") else None
    count, used = _dispatch(ls.A, [vals] * (2 * t), method, split=split)
    return CountResult(count, X, used, time.perf_counter() - t0, ls.digest())


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    residual: float


def fit_growth_exponent(points: Sequence[tuple[float, float]]) -> GrowthFit:
    """Least-squares fit of ``log(count) = slope * log(box) + intercept``.

    ``residual`` is the root-mean-square of the fit residuals in log space.
    """
    if len(points) < 3:
        raise InstanceError("need at least 3 (box, count) points")
    xs = np.array([math.log(float(b)) for b, _ in points])
    if any(c <= 0 for _, c in points):
        raise InstanceError("counts must be positive for a log-log fit")
    ys = np.array([math.log(float(c)) for _, c in points])
    if np.ptp(xs) == 0:
        raise InstanceError("need at least two distinct box sizes")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return GrowthFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))
