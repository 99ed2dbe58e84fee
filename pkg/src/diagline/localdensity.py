"""p-adic densities by residue counting and by complete exponential sums.

Residue counts ``M_p(h)`` are computed exactly as a histogram convolution over
the key group ``(Z/p^h)^k``: each coordinate contributes the distribution of its
key vector ``(A[j][i] z^j mod p^h)_j`` and the count is the mass at zero after
convolving all s of them.  Raw enumeration and a level-by-level lifting
enumerator are kept as independent cross-checks.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations, permutations, product
from typing import Iterator, Sequence

import numpy as np

from .core import BudgetError, InstanceError, LineSystem
from .expsum import complete_sum_table
from .singularity import jacobian_matrix

RAW_BUDGET = 10**8
LIFT_BUDGET = 10**8
SERIES_BUDGET = 64**3
IDENTITY_TOL = 1e-6
MULTIPLICATIVE_TOL = 1e-8
IMAG_TOL = 1e-9
STABLE_RTOL = 1e-9


class ConsistencyError(AssertionError):
    """Two routes to the same quantity disagree beyond their frozen tolerance."""


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % d for d in range(2, math.isqrt(p) + 1))


def _check_prime(p: int) -> None:
    if not is_prime(int(p)):
        raise InstanceError(f"{p} is not prime")


def prime_factors(q: int) -> dict[int, int]:
    out: dict[int, int] = {}
    d = 2
    while d * d <= q:
        while q % d == 0:
            out[d] = out.get(d, 0) + 1
            q //= d
        d += 1
    if q > 1:
        out[q] = out.get(q, 0) + 1
    return out


@dataclass(frozen=True)
class HenselWitness:
    """A residue solution ``z`` mod ``p^(nu_p+1)`` with a k x k Jacobian minor.

    ``delta`` is the p-adic valuation of the chosen minor and ``nu_p = 2 delta``.
    A witness is certified when the solution is known modulo ``p^m`` with
    ``m >= 2 delta + 1``; that is the hypothesis under which the
    multivariate Hensel lemma lifts ``z`` to a p-adic solution.
    """

    p: int
    nu_p: int
    z: tuple[int, ...]
    certified: bool
    minor_columns: tuple[int, ...]
    delta: int
    depth: int


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    route: str
    truncation: tuple
    stabilized: bool
    error_indicator: float
    sequence: tuple = ()
    imag_residue: float = 0.0
    witness: HenselWitness | None = field(default=None, compare=False)


# -- residue keys ------------------------------------------------------------------

def _column_keys(ls: LineSystem, i: int, q: int) -> np.ndarray:
    """Key vectors ``(A[j][i] z^j mod q)_j`` for ``z = 0..q-1``, shape ``(q, k)``."""
    z = np.arange(q, dtype=object)
    out = np.empty((q, ls.k), dtype=np.int64)
    for j in range(ls.k):
        a = ls.A[j][i] % q
        out[:, j] = np.array([a * pow(int(v), j + 1, q) % q for v in z], dtype=np.int64)
    return out


def _column_histogram(keys: np.ndarray, q: int, k: int) -> Counter:
    return Counter(map(tuple, keys.tolist()))


def _convolve(state: np.ndarray, hist: Counter) -> np.ndarray:
    out = np.zeros_like(state)
    for shift, mult in hist.items():
        rolled = np.roll(state, shift, axis=tuple(range(state.ndim)))
        out += rolled if mult == 1 else rolled * mult
    return out


def _needs_object(max_total: int) -> bool:
    return max_total >= 2**63


def _count_convolve(ls: LineSystem, q: int) -> int:
    k = ls.k
    state = np.zeros((q,) * k, dtype=np.int64)
    state[(0,) * k] = 1
    total = 1
    hists: dict = {}
    for i in range(ls.s):
        col = tuple(a % q for a in ls.column(i))
        if col not in hists:
            hists[col] = _column_histogram(_column_keys(ls, i, q), q, k)
        total *= q
        # total mass after this step is q^(i+1); widen before int64 could wrap
        if state.dtype != object and _needs_object(total):
            state = state.astype(object)
        state = _convolve(state, hists[col])
    return int(state[(0,) * k])


def _count_raw(ls: LineSystem, q: int) -> int:
    keys = [_column_keys(ls, i, q) for i in range(ls.s)]
    acc = np.zeros((1, ls.k), dtype=np.int64)
    for kk in keys:
        acc = ((acc[:, None, :] + kk[None, :, :]) % q).reshape(-1, ls.k)
    return int(np.count_nonzero((acc == 0).all(axis=1)))


def residue_solutions(ls: LineSystem, p: int, h: int, budget: int = LIFT_BUDGET) -> np.ndarray:
    """All solutions mod ``p^h`` as an ``(M, s)`` array, built by lifting level by level.

    Solutions mod ``p^(l+1)`` reduce to solutions mod ``p^l``, so each level only
    tests the ``p^s`` lifts of the previous level's solutions.
    """
    _check_prime(p)
    s, k = ls.s, ls.k
    sols = np.zeros((1, s), dtype=np.int64)
    digits = np.array(list(product(range(p), repeat=s)), dtype=np.int64)
    for level in range(1, h + 1):
        q, step = p**level, p ** (level - 1)
        if len(sols) * len(digits) > budget:
            raise BudgetError(
                f"lifting to p^{level} needs {len(sols) * len(digits)} candidates", len(sols) * len(digits)
            )
        rows = [np.array([a % q for a in ls.A[j]], dtype=np.int64) for j in range(k)]
        chunk = max(1, 2**20 // len(digits))
        kept = []
        for start in range(0, len(sols), chunk):
            cand = (sols[start:start + chunk, None, :] + step * digits[None, :, :]).reshape(-1, s)
            ok = np.ones(len(cand), dtype=bool)
            zp = np.ones_like(cand)
            for j in range(k):
                zp = zp * cand % q
                ok &= (zp * rows[j] % q).sum(axis=1) % q == 0
            kept.append(cand[ok])
        sols = np.concatenate(kept)
    return sols


def count_mod(ls: LineSystem, p: int, h: int, method: str = "auto") -> int:
    """``M_p(h)``: residue solutions ``z`` mod ``p^h`` of the line system.

    ``method`` is ``convolve`` (exact histogram convolution, the default),
    ``enumerate`` (raw ``p^(hs)`` scan) or ``lift``.  ``h = 0`` gives 1.
    """
    _check_prime(p)
    if h < 0:
        raise InstanceError("h must be >= 0")
    if h == 0:
        return 1
    q = p**h
    if method in ("auto", "convolve"):
        if q**ls.k > 10**7:
            raise BudgetError(f"key group (Z/{q})^{ls.k} too large", q**ls.k)
        return _count_convolve(ls, q)
    if method == "enumerate":
        if q**ls.s > RAW_BUDGET:
            raise BudgetError(f"raw enumeration needs {q}^{ls.s} tuples", q**ls.s)
        return _count_raw(ls, q)
    if method == "lift":
        return len(residue_solutions(ls, p, h))
    raise InstanceError(f"unknown method {method!r}")


def density_sequence(ls: LineSystem, p: int, h_max: int, method: str = "auto") -> list[float]:
    """``d_h = p^(h(k-s)) M_p(h)`` for ``h = 1..h_max``."""
    out = []
    for h in range(1, h_max + 1):
        m = count_mod(ls, p, h, method)
        out.append(m / p ** (h * (ls.s - ls.k)) if ls.s >= ls.k else m * p ** (h * (ls.k - ls.s)))
    return out


# -- Hensel witnesses ------------------------------------------------------------

def _reachable_suffixes(ls: LineSystem, q: int) -> list[np.ndarray]:
    """``R[i]``: boolean table of key sums reachable by coordinates ``i..s-1``."""
    k, s = ls.k, ls.s
    shifts = [sorted(set(map(tuple, _column_keys(ls, i, q).tolist()))) for i in range(s)]
    R = [None] * (s + 1)
    base = np.zeros((q,) * k, dtype=bool)
    base[(0,) * k] = True
    R[s] = base
    for i in range(s - 1, -1, -1):
        acc = np.zeros_like(base)
        for sh in shifts[i]:
            acc |= np.roll(R[i + 1], sh, axis=tuple(range(k)))
        R[i] = acc
    return R


def iter_residue_solutions(ls: LineSystem, p: int, m: int,
                           skip_zero_mod_p: bool = True) -> Iterator[tuple[int, ...]]:
    """Lazily yield solutions mod ``p^m`` by a depth-first search with no dead ends.

    Each coordinate is only given values from which the remaining coordinates
    can still reach a zero key sum.  Values are tried in the order ``1..q-1, 0``
    so that solutions with many units come first.
    """
    _check_prime(p)
    q = p**m
    k, s = ls.k, ls.s
    R = _reachable_suffixes(ls, q)
    keys = [_column_keys(ls, i, q) for i in range(s)]
    order = list(range(1, q)) + [0]
    z = [0] * s

    def rec(i, acc):
        if i == s:
            if skip_zero_mod_p and all(v % p == 0 for v in z):
                return
            yield tuple(z)
            return
        for v in order:
            nxt = tuple((acc[j] + int(keys[i][v, j])) % q for j in range(k))
            need = tuple((-x) % q for x in nxt)
            if R[i + 1][need]:
                z[i] = v
                yield from rec(i + 1, nxt)

    yield from rec(0, (0,) * k)


def _valuation(n: int, p: int, cap: int) -> int:
    if n == 0:
        return cap
    v = 0
    while n % p == 0 and v < cap:
        n //= p
        v += 1
    return v


def _perm_sign(perm: Sequence[int]) -> int:
    sign, seen = 1, set()
    for start in range(len(perm)):
        if start in seen:
            continue
        length, i = 0, start
        while i not in seen:
            seen.add(i)
            i = perm[i]
            length += 1
        sign *= -1 if length % 2 == 0 else 1
    return sign


def all_minors(J: Sequence[Sequence[int]], k: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Every k x k minor of a k x s matrix by the Leibniz formula, vectorized over column sets."""
    s = len(J[0])
    combos = list(combinations(range(s), k))
    bound = max(abs(int(v)) for row in J for v in row) or 1
    dtype = np.int64 if math.factorial(k) * bound**k < 2**62 else object
    M = np.array(J, dtype=dtype)
    C = np.array(combos, dtype=np.int64).reshape(len(combos), k)
    det = np.zeros(len(combos), dtype=dtype)
    for perm in permutations(range(k)):
        term = np.ones(len(combos), dtype=dtype)
        for r in range(k):
            term = term * M[r, C[:, perm[r]]]
        det = det + _perm_sign(perm) * term
    return det, combos


def best_minor(ls: LineSystem, z: Sequence[int], p: int, cap: int) -> tuple[int, tuple[int, ...]]:
    """Least p-adic valuation (capped) over all k x k Jacobian minors at ``z``."""
    det, combos = all_minors(jacobian_matrix(ls, z), ls.k)
    best = (cap + 1, ())
    for d, cols in zip(det.tolist(), combos):
        v = _valuation(int(d), p, cap)
        if v < best[0]:
            best = (v, cols)
            if v == 0:
                break
    return best


def hensel_witness(ls: LineSystem, p: int, m: int, max_solutions: int = 500) -> HenselWitness | None:
    """Search residue solutions mod ``p^m`` for a liftable one.

    A solution whose best minor has valuation ``delta`` with ``2 delta + 1 <= m``
    is certified (``nu_p = 2 delta``).  If none qualifies among the first
    ``max_solutions`` candidates, the solution with the smallest ``delta`` is
    returned uncertified; ``None`` means no solution other than ``z = 0 mod p``.
    For ``p <= k`` every minor is divisible by p, so certification needs m >= 3.
    """
    if m < 1:
        raise InstanceError("search depth m must be >= 1")
    q = p**m
    best = None
    for count, z in enumerate(iter_residue_solutions(ls, p, m)):
        if count >= max_solutions:
            break
        delta, cols = best_minor(ls, z, p, m)
        if 2 * delta + 1 <= m:
            nu = 2 * delta
            zz = tuple(v % p ** (nu + 1) for v in z)
            return HenselWitness(p, nu, zz, True, cols, delta, m)
        if best is None or delta < best[0]:
            best = (delta, cols, z)
    if best is None:
        return None
    delta, cols, z = best
    nu = 2 * min(delta, m)
    return HenselWitness(p, nu, tuple(v % q for v in z), False, cols, delta, m)


def sigma_p_estimate(ls: LineSystem, p: int, h_max: int, method: str = "auto",
                     witness_depth: int | None = None) -> DensityEstimate:
    """``d_h`` for ``h <= h_max``; stabilized needs numerical agreement and a certified witness."""
    if h_max < 1:
        raise InstanceError("h_max must be >= 1")
    seq = density_sequence(ls, p, h_max, method)
    agree = len(seq) >= 2 and abs(seq[-1] - seq[-2]) <= STABLE_RTOL * abs(seq[-1])
    w = hensel_witness(ls, p, witness_depth or h_max)
    certified = w is not None and w.certified and w.nu_p + 1 <= h_max
    err = abs(seq[-1] - seq[-2]) if len(seq) >= 2 else float("inf")
    return DensityEstimate(seq[-1], "residue_count", (p, h_max), bool(agree and certified),
                           err, tuple(seq), 0.0, w)


# -- exponential-sum route -------------------------------------------------------

def a_of_q(ls: LineSystem, q: int, budget: int = SERIES_BUDGET) -> complex:
    """``A(q) = q^-s sum_{a mod q, (q,a)=1} prod_i S(q, c_i beta(a; y_i))``."""
    q = int(q)
    if q < 1:
        raise InstanceError("q must be >= 1")
    if q == 1:
        return 1 + 0j
    k = ls.k
    if q**k > budget:
        raise BudgetError(f"A({q}) needs {q}^{k} residue vectors", q**k)
    table = complete_sum_table(q, k)
    grids = np.meshgrid(*[np.arange(q, dtype=np.int64)] * k, indexing="ij")
    g = np.zeros((q,) * k, dtype=np.int64)
    for gr in grids:
        g = np.gcd(g, gr)
    coprime = np.gcd(g, q) == 1
    prod_ = np.ones((q,) * k, dtype=complex)
    cols = Counter(tuple(a % q for a in ls.column(i)) for i in range(ls.s))
    for col, mult in cols.items():
        idx = tuple((col[j] * grids[j]) % q for j in range(k))
        # S(q, b) is scaled by 1/q per factor to keep the product in range
        prod_ *= (table[idx] / q) ** mult
    vals = prod_[coprime]
    return complex(math.fsum(vals.real.tolist()), math.fsum(vals.imag.tolist()))


def truncated_singular_series(ls: LineSystem, D: int) -> DensityEstimate:
    """``S(D) = sum_{q <= D} A(q)``."""
    if D < 1:
        raise InstanceError("D must be >= 1")
    terms = [a_of_q(ls, q) for q in range(1, int(D) + 1)]
    re = math.fsum(t.real for t in terms)
    im = math.fsum(t.imag for t in terms)
    return DensityEstimate(re, "series", (int(D),), False, abs(im),
                           tuple(terms), abs(im))


def sigma_p_via_series(ls: LineSystem, p: int, H: int, method: str = "auto") -> DensityEstimate:
    """``sum_{h=0}^{H} A(p^h)``, asserted equal to ``p^(H(k-s)) M_p(H)``."""
    _check_prime(p)
    if H < 0:
        raise InstanceError("H must be >= 0")
    terms = [a_of_q(ls, p**h) for h in range(H + 1)]
    re = math.fsum(t.real for t in terms)
    im = math.fsum(t.imag for t in terms)
    m = count_mod(ls, p, H, method)
    residue = m / p ** (H * (ls.s - ls.k))
    diff = abs(re - residue)
    if diff > IDENTITY_TOL or abs(im) > IDENTITY_TOL:
        raise ConsistencyError(
            f"series {re:.12g}{im:+.3g}i disagrees with residue count {residue:.12g} at p={p}, H={H}"
        )
    return DensityEstimate(re, "series", (p, H), False, diff, tuple(terms), abs(im))


def multiplicativity_defect(ls: LineSystem, q1: int, q2: int) -> float:
    if math.gcd(q1, q2) != 1:
        raise InstanceError("q1 and q2 must be coprime")
    return abs(a_of_q(ls, q1 * q2) - a_of_q(ls, q1) * a_of_q(ls, q2))


def euler_product(ls: LineSystem, primes: Sequence[int], h: int = 2) -> float:
    """``prod_p d_h(p)`` over the given primes."""
    out = 1.0
    for p in primes:
        out *= density_sequence(ls, p, h)[-1]
    return out
