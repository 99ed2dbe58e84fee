"""Weyl sums, complete exponential sums, oscillatory integrals and arc geometry."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import InstanceError, LineSystem

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped before reaching its tolerance."""

    def __init__(self, message: str, estimate: complex, bound: float):
        super().__init__(message)
        self.estimate = estimate
        self.bound = bound


def _fsum_complex(values: np.ndarray) -> complex:
    return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))


@dataclass(frozen=True)
class TwistedArgument:
    """``beta_j = c * y^(k-j) * alpha_j`` reduced mod 1."""

    alpha: tuple[float, ...]
    y: int = 1
    c: int = 1

    @property
    def k(self) -> int:
        return len(self.alpha)

    @property
    def beta(self) -> tuple[float, ...]:
        return tuple(twist(self.alpha, self.y, self.c, reduce=True))


def twist(alpha: Sequence[float], y: int, c: int = 1, reduce: bool = False) -> np.ndarray:
    k = len(alpha)
    scale = np.array([c * y ** (k - j) for j in range(1, k + 1)], dtype=float)
    out = scale * np.asarray(alpha, dtype=float)
    return np.mod(out, 1.0) if reduce else out


def _twist_int(a: Sequence[int], y: int, c: int) -> tuple[int, ...]:
    k = len(a)
    return tuple(c * y ** (k - j) * int(a[j - 1]) for j in range(1, k + 1))


# -- Weyl sums -----------------------------------------------------------------

def weyl_sum(alpha: Sequence[float], X: int) -> complex:
    """``sum_{|x| <= X} e(alpha_1 x + ... + alpha_k x^k)``.

    Phases are evaluated by Horner's rule with reduction mod 1 after every
    step (valid because x is an integer), then summed with ``math.fsum``.
    """
    X = int(X)
    if X < 0:
        raise InstanceError("X must be nonnegative")
    x = np.arange(-X, X + 1, dtype=float)
    phase = np.zeros_like(x)
    for a in reversed([float(v) for v in alpha]):
        phase = np.mod((phase + a) * x, 1.0)
    # the loop multiplies by x once per coefficient, so phase = sum a_j x^j mod 1
    return _fsum_complex(np.exp(1j * TWO_PI * phase))


def complete_sum(q: int, a: Sequence[int]) -> complex:
    """``sum_{r=1}^q e((a_1 r + ... + a_k r^k)/q)`` with exact residues."""
    q = int(q)
    if q < 1:
        raise InstanceError("q must be >= 1")
    a = [int(v) % q for v in a]
    counts = np.zeros(q, dtype=np.int64)
    for r in range(1, q + 1):
        u = 0
        for coeff in reversed(a):
            u = (u + coeff) * r % q
        counts[u] += 1
    return _fsum_complex(counts * _roots_of_unity(q))


@lru_cache(maxsize=64)
def _roots_of_unity(q: int) -> np.ndarray:
    return np.exp(1j * TWO_PI * np.arange(q) / q)


@lru_cache(maxsize=8)
def complete_sum_table(q: int, k: int) -> np.ndarray:
    """``S(q, b)`` for every ``b`` in ``(Z/q)^k``, as an array of shape ``(q,)*k``.

    Entry ``[b_1, ..., b_k]`` holds the sum with ``a_j = b_j``.
    """
    grids = np.meshgrid(*[np.arange(q, dtype=np.int64)] * k, indexing="ij")
    table = np.zeros((q,) * k, dtype=complex)
    roots = _roots_of_unity(q)
    for r in range(1, q + 1):
        u = np.zeros((q,) * k, dtype=np.int64)
        rp = 1
        for j in range(k):
            rp = rp * r % q
            u = (u + grids[j] * rp) % q
        table += roots[u]
    table.setflags(write=False)
    return table


# -- oscillatory integrals -------------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583002644559, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# 15 Kronrod nodes on [-1, 1] with Kronrod weights and the embedded 7-point Gauss weights
KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS_EMBEDDED = np.zeros(15)
GAUSS_WEIGHTS_EMBEDDED[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _phase_poly(theta: Sequence[float], g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(g)
    for t in reversed([float(v) for v in theta]):
        out = (out + t) * g
    return out


def phase_variation(theta: Sequence[float], X: float) -> float:
    """Upper bound for the total variation of ``2 pi psi`` on ``[-X, X]``."""
    return TWO_PI * sum(abs(float(t)) * X ** (j + 1) for j, t in enumerate(theta))


def oscillatory_integral(theta: Sequence[float], X: float, tol: float = 1e-10,
                         max_panels: int = 20000) -> complex:
    """``int_{-X}^{X} e(theta_1 g + ... + theta_k g^k) dg`` by adaptive G7/K15 panels.

    Starts from a panel count proportional to the phase variation and bisects
    the panel with the largest Gauss/Kronrod discrepancy until the summed
    discrepancy is below ``tol``.
    """
    X = float(X)
    if X <= 0:
        raise InstanceError("X must be positive")
    n0 = int(math.ceil(phase_variation(theta, X) / math.pi)) + 1
    edges = np.linspace(-X, X, n0 + 1)
    lo, hi = edges[:-1], edges[1:]

    def panel(lo, hi):
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        g = mid[:, None] + half[:, None] * KRONROD_NODES[None, :]
        f = np.exp(1j * TWO_PI * _phase_poly(theta, g))
        kron = (f @ KRONROD_WEIGHTS) * half
        gauss = (f @ GAUSS_WEIGHTS_EMBEDDED) * half
        return kron, np.abs(kron - gauss)

    vals, errs = panel(lo, hi)
    while errs.sum() > tol:
        if len(lo) >= max_panels:
            est = _fsum_complex(vals)
            raise QuadratureError(
                f"tolerance {tol:g} not reached with {len(lo)} panels", est, float(errs.sum())
            )
        # refine every panel above the mean share of the tolerance
        bad = errs > min(tol / len(errs), errs.max() * 0.5)
        mids = (lo[bad] + hi[bad]) / 2
        new_lo = np.concatenate([lo[bad], mids])
        new_hi = np.concatenate([mids, hi[bad]])
        nv, ne = panel(new_lo, new_hi)
        keep = ~bad
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
    return _fsum_complex(vals)


@lru_cache(maxsize=64)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def legendre_nodes_for(omega: float) -> int:
    """Gauss-Legendre order resolving ``e(...)`` with phase variation ``omega`` on [-1, 1]."""
    n = int(0.55 * omega) + 40
    return (n + 15) // 16 * 16


def oscillatory_integral_batch(thetas: np.ndarray, X: float = 1.0, nodes: int | None = None) -> np.ndarray:
    """Fixed-order Gauss-Legendre evaluation of ``I(theta; X)`` for many ``theta``.

    ``thetas`` has shape ``(m, k)``.  The order defaults to one that resolves
    the largest phase variation in the batch.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    k = thetas.shape[1]
    scaled = thetas * np.array([X ** (j + 1) for j in range(k)])
    if nodes is None:
        omega = float(TWO_PI * np.abs(scaled).sum(axis=1).max()) if len(scaled) else 0.0
        nodes = legendre_nodes_for(omega)
    g, w = _legendre(nodes)
    powers = np.stack([g ** (j + 1) for j in range(k)])
    return X * (np.exp(1j * TWO_PI * (scaled @ powers)) @ w)


# -- major arc approximation ----------------------------------------------------

def major_arc_approx(ls: LineSystem, i: int, alpha: Sequence[float], q: int,
                     a: Sequence[int], X: float, tol: float = 1e-10) -> complex:
    """``q^-1 S(q, c_i beta(a; y_i)) I(c_i beta(alpha - a/q; y_i); X)``."""
    k = ls.k
    if len(alpha) != k or len(a) != k:
        raise InstanceError("alpha and a must have length k")
    ci, yi = ls.c[i], ls.y[i]
    S = complete_sum(q, _twist_int(a, yi, ci))
    theta = np.asarray(alpha, dtype=float) - np.asarray(a, dtype=float) / q
    integral = oscillatory_integral(twist(theta, yi, ci), X, tol=tol)
    return S / q * integral


@dataclass(frozen=True)
class ApproximationScan:
    max_abs_error: float
    bound_value: float
    max_ratio: float
    samples: int


def approx_error_bound(alpha: Sequence[float], q: int, a: Sequence[int], X: float) -> float:
    """``q + X|q alpha_1 - a_1| + ... + X^k |q alpha_k - a_k|``."""
    return q + sum(X ** (j + 1) * abs(q * float(al) - int(aj))
                   for j, (al, aj) in enumerate(zip(alpha, a)))


def sample_major_arc(q: int, a: Sequence[int], X: float, L: float, n: int, seed: int = 0) -> np.ndarray:
    """Uniform samples of ``alpha`` with ``|alpha_j - a_j/q| <= L X^-j``, not reduced mod 1."""
    k = len(a)
    rng = np.random.default_rng(seed)
    width = np.array([L * float(X) ** -(j + 1) for j in range(k)])
    centre = np.asarray(a, dtype=float) / q
    return centre + rng.uniform(-1.0, 1.0, size=(n, k)) * width


def approx_error_scan(ls: LineSystem, i: int, q: int, a: Sequence[int], X: int,
                      samples: int | np.ndarray = 32, L: float = 4.0, seed: int = 0) -> ApproximationScan:
    """Largest ``|f(c_i beta(alpha; y_i)) - V_i(alpha; q, a)|`` over samples in the arc."""
    pts = (samples if isinstance(samples, np.ndarray)
           else sample_major_arc(q, a, X, L, int(samples), seed))
    ci, yi = ls.c[i], ls.y[i]
    max_err = max_bound = max_ratio = 0.0
    for alpha in np.atleast_2d(pts):
        f = weyl_sum(twist(alpha, yi, ci, reduce=True), X)
        v = major_arc_approx(ls, i, alpha, q, a, X)
        err = abs(f - v)
        bound = approx_error_bound(alpha, q, a, X)
        max_err = max(max_err, err)
        max_bound = max(max_bound, bound)
        max_ratio = max(max_ratio, err / bound)
    return ApproximationScan(max_err, max_bound, max_ratio, len(np.atleast_2d(pts)))


# -- arc classification ---------------------------------------------------------

@dataclass(frozen=True)
class ArcLabel:
    label: str
    q: int | None
    a: tuple[int, ...] | None
    X: float
    L: float
    Q: float


def default_arc_parameters(X: float, k: int) -> tuple[float, float]:
    """``L = X^(1/(8k^2))`` and ``Q = L^k``."""
    L = float(X) ** (1.0 / (8 * k * k))
    if L < 2:
        warnings.warn(
            f"L = {L:.4f} < 2 at X = {X:g}: only q = 1 arcs exist; pass L and Q explicitly",
            stacklevel=2,
        )
    return L, L**k


def _exact(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def joint_arc_witness(alpha: Sequence, X: float, Z: float) -> tuple[int, tuple[int, ...]] | None:
    """Least ``q <= Z`` (and its ``a``) with ``|alpha_j - a_j/q| <= Z X^-j`` for all j.

    Comparisons are exact in rational arithmetic, so ties count as members.
    ``a_j`` ranges over ``0..q`` with ``gcd(q, a) = 1``; ``a_j = q`` is kept
    only when ``a_j = 0`` does not also qualify.
    """
    al = [_exact(v) for v in alpha]
    Xf, Zf = _exact(X), _exact(Z)
    radius = [Zf / Xf ** (j + 1) for j in range(len(al))]
    for q in range(1, int(math.floor(Z)) + 1):
        choice = []
        for j, aj in enumerate(al):
            found = None
            base = math.floor(aj * q)
            for cand in (base, base + 1):
                if 0 <= cand <= q and abs(aj - Fraction(cand, q)) <= radius[j]:
                    found = cand
                    break
            if found is None:
                break
            choice.append(found)
        else:
            if math.gcd(q, *choice) == 1:
                return q, tuple(choice)
            # alternative a_j choices with the other endpoint can change the gcd
            alts = []
            for j, aj in enumerate(al):
                opts = [cand for cand in (math.floor(aj * q), math.floor(aj * q) + 1)
                        if 0 <= cand <= q and abs(aj - Fraction(cand, q)) <= radius[j]]
                alts.append(opts)
            for combo in _product(alts):
                if math.gcd(q, *combo) == 1:
                    return q, tuple(combo)
    return None


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


def _convergent_denominators(x: Fraction, limit: int):
    """Continued-fraction convergents ``(p, q)`` of ``x`` with ``q <= limit``."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    y = x
    while True:
        a = math.floor(y)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > limit:
            return
        yield p1, q1
        frac = y - a
        if frac == 0:
            return
        y = 1 / frac


def one_dim_arc_witness(alpha_k, k: int, X: float, Q: float,
                        exhaustive: bool = False) -> tuple[int, int] | None:
    """``(q, a)`` with ``q <= Q``, ``0 <= a <= q``, ``(a, q) = 1`` and ``|q alpha - a| <= Q X^-k``.

    The fast path walks the continued-fraction convergents: they are the best
    approximations of the second kind, so if any ``q <= Q`` qualifies then so
    does the largest convergent denominator below ``Q``.  ``exhaustive=True``
    scans every ``q`` instead and returns the least one.
    """
    al, Xf, Qf = _exact(alpha_k), _exact(X), _exact(Q)
    radius = Qf / Xf**k
    limit = int(math.floor(Q))
    if exhaustive:
        for q in range(1, limit + 1):
            base = math.floor(al * q)
            for a in (base, base + 1):
                if 0 <= a <= q and math.gcd(a, q) == 1 and abs(q * al - a) <= radius:
                    return q, a
        return None
    for p, q in _convergent_denominators(al, limit):
        if abs(q * al - p) <= radius:
            return q, p
    return None


def classify_arc(alpha: Sequence, X: float, L: float | None = None,
                 Q: float | None = None) -> ArcLabel:
    """Place ``alpha`` in exactly one of W1..W4.

    W4: alpha in the narrow major arcs (joint approximation with q <= L).
    W1: alpha_k on the one-dimensional minor arcs m(Q).
    W2: alpha_k on M(Q) but alpha outside K(Q^2).
    W3: everything else.
    """
    k = len(alpha)
    if L is None or Q is None:
        dl, dq = default_arc_parameters(X, k)
        L = dl if L is None else L
        Q = dq if Q is None else Q
    if not (1 <= L <= X and 1 <= Q <= X):
        raise InstanceError(f"need 1 <= L, Q <= X; got L={L}, Q={Q}, X={X}")
    if any(not (0 <= float(v) < 1) for v in alpha):
        raise InstanceError("alpha must lie in [0, 1)^k")
    w = joint_arc_witness(alpha, X, L)
    if w is not None:
        return ArcLabel("W4", w[0], w[1], X, L, Q)
    one = one_dim_arc_witness(alpha[-1], k, X, Q)
    if one is None:
        return ArcLabel("W1", None, None, X, L, Q)
    wide = joint_arc_witness(alpha, X, Q * Q)
    if wide is None:
        return ArcLabel("W2", one[0], (one[1],), X, L, Q)
    return ArcLabel("W3", wide[0], wide[1], X, L, Q)
