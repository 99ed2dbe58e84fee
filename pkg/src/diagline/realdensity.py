"""The real density by slab volumes and by the truncated singular integral.

Slab volumes use conditional Monte Carlo: s-1 coordinates are sampled and the
admissible set of the remaining one is measured exactly, since each constraint
``|P_j + a_j z^j| < eta`` cuts out an interval in ``z`` (odd j) or in ``|z|``
(even j).  Averaging the exact length over the choice of the free coordinate
removes most of the variance of a plain hit-or-miss estimate.

The singular integral over ``[-D, D]^k`` is computed by box-adaptive tensor
Gauss-Kronrod cubature.  Every factor ``I(c_i beta(theta; y_i); 1)`` is a
function of ``theta`` through the scale vector ``c_i y_i^(k-j)``, so factors
sharing a scale vector are evaluated once and raised to their multiplicity.
"""
from __future__ import annotations

import heapq
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .core import BudgetError, InstanceError, LineSystem
from .enumeration import default_threads
from .expsum import (GAUSS_WEIGHTS_EMBEDDED, KRONROD_NODES, KRONROD_WEIGHTS, TWO_PI,
                     _legendre, legendre_nodes_for)
from .localdensity import DensityEstimate

MC_CHUNK = 1 << 17
GRID_BUDGET = 10**7
FIT_RTOL = 0.02
DEFAULT_REL_TOL = 0.05


class FitRejected(ValueError):
    """The eta-extrapolation is outside its regime of validity."""


@dataclass(frozen=True)
class SlabSpec:
    ls: LineSystem
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise InstanceError("slab half-width eta must be positive")

    @property
    def vacuous(self) -> bool:
        """True when no constraint can bind on the cube."""
        return all(sum(abs(a) for a in row) < self.eta for row in self.ls.A)


@dataclass(frozen=True)
class BoxSpec:
    D: float

    def __post_init__(self):
        if not self.D >= 1:
            raise InstanceError("truncation D must be >= 1")


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    sampler: str
    samples: int


# -- exact one-dimensional measure -------------------------------------------------

def _odd_root(x: np.ndarray, j: int) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** (1.0 / j)


def conditional_length(partial: np.ndarray, a: np.ndarray, eta: float) -> np.ndarray:
    """Measure of ``{z in [-1,1] : |partial_j + a_j z^j| < eta for all j}``.

    ``partial`` has shape ``(n, k)``; ``a`` has shape ``(k,)`` with nonzero entries.
    """
    n, k = partial.shape
    vlo = np.full(n, -1.0)
    vhi = np.full(n, 1.0)
    ulo = np.zeros(n)
    uhi = np.ones(n)
    for j in range(1, k + 1):
        lo = (-eta - partial[:, j - 1]) / a[j - 1]
        hi = (eta - partial[:, j - 1]) / a[j - 1]
        lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
        if j % 2:
            vlo = np.maximum(vlo, _odd_root(lo, j))
            vhi = np.minimum(vhi, _odd_root(hi, j))
        else:
            ulo = np.maximum(ulo, np.maximum(lo, 0.0) ** (1.0 / j))
            uhi = np.minimum(uhi, np.where(hi > 0, np.maximum(hi, 0.0) ** (1.0 / j), -1.0))
    # the even constraints give |z| in [ulo, uhi]; intersect both signs with [vlo, vhi]
    pos = np.clip(np.minimum(vhi, uhi) - np.maximum(vlo, ulo), 0.0, None)
    neg = np.clip(np.minimum(vhi, -ulo) - np.maximum(vlo, -uhi), 0.0, None)
    return np.where(uhi > ulo, pos + neg, 0.0)


def _key_rows(ls: LineSystem) -> np.ndarray:
    return np.array(ls.A, dtype=float)


def _conditional_mean(z: np.ndarray, A: np.ndarray, eta: float, free: Sequence[int]) -> np.ndarray:
    """Per-sample average over ``free`` coordinates of the exact conditional length."""
    k = A.shape[0]
    Z = np.stack([z ** (j + 1) for j in range(k)], axis=1)
    total_sums = np.einsum("njs,js->nj", Z, A)
    acc = np.zeros(len(z))
    for m in free:
        partial = total_sums - Z[:, :, m] * A[:, m]
        acc += conditional_length(partial, A[:, m], eta)
    return acc / len(free)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, chunk], dtype=np.uint64)))


def _mc_chunk(A, etas, s, seed, chunk, size, conditional):
    rng = _chunk_rng(seed, chunk)
    z = rng.uniform(-1.0, 1.0, size=(size, s))
    out = []
    for eta in etas:
        if conditional:
            v = _conditional_mean(z, A, eta, range(s)) * 2.0 ** (s - 1)
        else:
            sums = np.stack([(z ** (j + 1)) @ A[j] for j in range(A.shape[0])], axis=1)
            v = np.all(np.abs(sums) < eta, axis=1).astype(float) * 2.0**s
        out.append((math.fsum(v.tolist()), math.fsum((v * v).tolist())))
    return out


def slab_volumes_mc(ls: LineSystem, etas: Sequence[float], N: int, seed: int = 0,
                    threads: int | None = None, conditional: bool = True) -> list[VolumeEstimate]:
    """Monte Carlo estimates of ``M_inf(eta)`` for several ``eta`` on shared samples.

    Samples come in fixed chunks, each drawn from a Philox generator keyed by
    ``(seed, chunk index)``; chunk sums are reduced in index order with
    ``math.fsum``, so the result does not depend on the thread count.
    """
    if N < 10**4:
        raise InstanceError("Monte Carlo needs N >= 10^4 samples")
    for eta in etas:
        SlabSpec(ls, eta)
    A = _key_rows(ls)
    s = ls.s
    sizes = [MC_CHUNK] * (N // MC_CHUNK)
    if N % MC_CHUNK:
        sizes.append(N % MC_CHUNK)
    threads = threads or default_threads()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _mc_chunk(A, etas, s, seed, c, sizes[c], conditional),
                              range(len(sizes))))
    out = []
    for e in range(len(etas)):
        tot = math.fsum(p[e][0] for p in parts)
        sq = math.fsum(p[e][1] for p in parts)
        mean = tot / N
        var = max(sq / N - mean * mean, 0.0)
        out.append(VolumeEstimate(mean, math.sqrt(var / N), "montecarlo", N))
    return out


def slab_volume_grid(ls: LineSystem, eta: float, nodes: int) -> VolumeEstimate:
    """Midpoint grid over the first s-1 coordinates, exact length in the last.

    ``stderr`` holds the change against a grid with half as many nodes.
    """
    spec = SlabSpec(ls, eta)
    s = ls.s
    if nodes < 2 or nodes ** (s - 1) > GRID_BUDGET:
        raise BudgetError(f"grid needs {nodes}^{s - 1} points", nodes ** (s - 1))
    A = _key_rows(ls)

    def run(n):
        pts = -1.0 + (2.0 * np.arange(n) + 1.0) / n
        if s == 1:
            grid = np.zeros((1, 1))
        else:
            mesh = np.meshgrid(*[pts] * (s - 1), indexing="ij")
            grid = np.stack([m.ravel() for m in mesh] + [np.zeros(mesh[0].size)], axis=1)
        lengths = _conditional_mean(grid, A, spec.eta, [s - 1])
        return math.fsum(lengths.tolist()) * (2.0 / n) ** (s - 1)

    fine = run(nodes)
    coarse = run(max(nodes // 2, 1))
    return VolumeEstimate(fine, abs(fine - coarse), "grid", nodes ** (s - 1))


def slab_volume(spec: SlabSpec, sampler: str = "montecarlo", N: int = 10**6, seed: int = 0,
                nodes: int = 64, threads: int | None = None) -> VolumeEstimate:
    if spec.vacuous:
        return VolumeEstimate(2.0**spec.ls.s, 0.0, "exact", 0)
    if sampler == "montecarlo":
        return slab_volumes_mc(spec.ls, [spec.eta], N, seed, threads)[0]
    if sampler == "plain":
        return slab_volumes_mc(spec.ls, [spec.eta], N, seed, threads, conditional=False)[0]
    if sampler == "grid":
        return slab_volume_grid(spec.ls, spec.eta, nodes)
    raise InstanceError(f"unknown sampler {sampler!r}")


@dataclass(frozen=True)
class SlabFit:
    estimate: DensityEstimate
    g_table: tuple[tuple[float, float, float], ...]
    slope: float
    residual: float


def fit_slab(etas: Sequence[float], g: Sequence[float], g_err: Sequence[float] | None = None,
             vacuous: bool = False) -> SlabFit:
    """Least-squares line ``g(eta) = sigma + c eta``; the intercept is the estimate."""
    etas = [float(e) for e in etas]
    if len(etas) < 3:
        raise InstanceError("need at least three eta values")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise InstanceError("eta sequence must be strictly decreasing")
    slope, intercept = np.polyfit(etas, g, 1)
    pred = intercept + slope * np.asarray(etas)
    resid = float(np.sqrt(np.mean((np.asarray(g) - pred) ** 2)))
    rel = resid / abs(intercept) if intercept else math.inf
    if vacuous:
        raise FitRejected("full-cube regime: every constraint is vacuous at the given eta")
    if rel > FIT_RTOL:
        raise FitRejected(f"linear fit residual {rel:.3g} (relative) exceeds {FIT_RTOL}")
    errs = list(g_err) if g_err is not None else [0.0] * len(etas)
    table = tuple(zip(etas, map(float, g), map(float, errs)))
    noise = max(errs) if errs else 0.0
    est = DensityEstimate(float(intercept), "slab", tuple(etas), True, resid + noise)
    return SlabFit(est, table, float(slope), resid)


def sigma_infinity_slab(ls: LineSystem, etas: Sequence[float], sampler: str = "montecarlo",
                        N: int = 10**6, seed: int = 0, nodes: int = 400,
                        threads: int | None = None) -> SlabFit:
    """Extrapolate ``g(eta) = (2 eta)^-k M_inf(eta)`` linearly to ``eta = 0``."""
    etas = [float(e) for e in etas]
    k = ls.k
    vacuous = any(SlabSpec(ls, e).vacuous for e in etas)
    if vacuous:
        vols = [VolumeEstimate(2.0**ls.s, 0.0, "exact", 0) for _ in etas]
    elif sampler == "montecarlo":
        vols = slab_volumes_mc(ls, etas, N, seed, threads)
    elif sampler == "grid":
        vols = [slab_volume_grid(ls, e, nodes) for e in etas]
    else:
        raise InstanceError(f"unknown sampler {sampler!r}")
    g = [v.value / (2 * e) ** k for v, e in zip(vols, etas)]
    gerr = [v.stderr / (2 * e) ** k for v, e in zip(vols, etas)]
    return fit_slab(etas, g, gerr, vacuous)


# -- singular integral ------------------------------------------------------------

def _scale_classes(ls: LineSystem) -> list[tuple[np.ndarray, int]]:
    cls = Counter(ls.column(i) for i in range(ls.s))
    return [(np.array(key, dtype=float), m) for key, m in sorted(cls.items())]


def _einsum_spec(k: int) -> str:
    letters = "abcd"[:k]
    ins = ",".join(f"z{l}g" for l in letters)
    return f"{ins},g->z{letters}"


def _eval_boxes(lo: np.ndarray, hi: np.ndarray, classes, k: int):
    """Kronrod values and per-axis Gauss/Kronrod discrepancies for a batch of boxes."""
    B = len(lo)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = mid[:, :, None] + half[:, :, None] * KRONROD_NODES[None, None, :]
    F = np.ones((B,) + (15,) * k, dtype=complex)
    reach = np.maximum(np.abs(lo), np.abs(hi))
    spec = _einsum_spec(k)
    for scale, mult in classes:
        omega = float(TWO_PI * (np.abs(scale)[None, :] * reach).sum(axis=1).max())
        g, w = _legendre(legendre_nodes_for(omega))
        E = [np.exp(1j * TWO_PI * (nodes[:, j, :, None] * scale[j]) * (g ** (j + 1))[None, None, :])
             for j in range(k)]
        T = np.einsum(spec, *E, w, optimize=True)
        F *= T if mult == 1 else T**mult
    vol = np.prod(half, axis=1)

    def contract(weights):
        r = F
        for wv in weights:
            r = np.tensordot(r, wv, axes=([1], [0]))
        return r * vol

    K = contract([KRONROD_WEIGHTS] * k)
    errs = np.stack([
        np.abs(K - contract([KRONROD_WEIGHTS] * j + [GAUSS_WEIGHTS_EMBEDDED] + [KRONROD_WEIGHTS] * (k - j - 1)))
        for j in range(k)
    ], axis=1)
    return K, errs


@dataclass(frozen=True)
class IntegralEstimate:
    D: float
    value: float
    imag: float
    error_indicator: float
    boxes: int
    converged: bool


def truncated_singular_integral(ls: LineSystem, D: float, tol: float = 1e-3,
                                max_boxes: int = 400000, batch: int = 256,
                                symmetric: bool = True, box_width: float = 1.0) -> IntegralEstimate:
    """``I(D) = int_{[-D,D]^k} prod_i I(c_i beta(theta; y_i); 1) d theta``.

    The integrand satisfies ``F(-theta) = conj F(theta)``.  With
    ``symmetric=True`` only ``theta_k >= 0`` is integrated and the result is
    ``2 Re``; otherwise the full box is used and the imaginary residue reported.
    """
    BoxSpec(D)
    k = ls.k
    if k > 4:
        raise BudgetError(f"tensor cubature in {k} dimensions is out of budget", k)
    classes = _scale_classes(ls)
    nb = max(1, int(math.ceil(2 * D / box_width)))
    edges = np.linspace(-D, D, nb + 1)
    last_edges = np.linspace(0.0, D, max(1, nb // 2) + 1) if symmetric else edges
    axes = [edges] * (k - 1) + [last_edges]
    cells = list(product(*[range(len(e) - 1) for e in axes]))
    lo = np.array([[axes[j][c[j]] for j in range(k)] for c in cells])
    hi = np.array([[axes[j][c[j] + 1] for j in range(k)] for c in cells])
    factor = 2.0 if symmetric else 1.0
    tol_half = tol / factor

    heap: list = []
    vals: dict[int, complex] = {}
    counter = 0
    total_err = 0.0

    def push(lo_b, hi_b):
        nonlocal counter, total_err
        order = np.argsort(TWO_PI * np.maximum(np.abs(lo_b), np.abs(hi_b)).sum(axis=1))
        for start in range(0, len(order), batch):
            sel = order[start:start + batch]
            K, errs = _eval_boxes(lo_b[sel], hi_b[sel], classes, k)
            for r, b in enumerate(sel):
                e = float(errs[r].max())
                heapq.heappush(heap, (-e, counter, lo_b[b], hi_b[b], errs[r]))
                vals[counter] = complex(K[r])
                counter += 1
                total_err += e

    push(lo, hi)
    while total_err > tol_half and counter < max_boxes:
        # split the worst boxes together so the batch stays wide
        take = []
        excess, popped = total_err - tol_half, 0.0
        while heap and len(take) < max(1, batch // 2) and (not take or popped < excess):
            ne, idx, l, h, errs = heapq.heappop(heap)
            total_err += ne
            popped -= ne
            vals.pop(idx)
            take.append((l, h, errs))
        new_lo, new_hi = [], []
        for l, h, errs in take:
            d = int(np.argmax(errs))
            m = (l[d] + h[d]) / 2
            l2, h1 = l.copy(), h.copy()
            h1[d] = m
            l2[d] = m
            new_lo += [l, l2]
            new_hi += [h1, h]
        push(np.array(new_lo), np.array(new_hi))
    re = math.fsum(v.real for v in vals.values())
    im = math.fsum(v.imag for v in vals.values())
    if symmetric:
        value, imag = factor * re, 0.0
    else:
        value, imag = re, im
    return IntegralEstimate(float(D), value, imag, factor * total_err, counter,
                            total_err <= tol_half)


@dataclass(frozen=True)
class Extrapolation:
    value: float
    tail_coefficient: float
    residual: float
    exponent: float
    table: tuple[tuple[float, float], ...]


def extrapolate(Ds: Sequence[float], values: Sequence[float], exponent: float) -> Extrapolation:
    """Least-squares fit ``I(D) = I_inf + b D^-exponent``; two points give Richardson."""
    if len(Ds) < 2 or len(set(Ds)) < 2:
        raise InstanceError("need at least two distinct D values")
    x = np.asarray(Ds, dtype=float) ** -exponent
    M = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(M, np.asarray(values, dtype=float), rcond=None)
    resid = float(np.sqrt(np.mean((M @ coef - np.asarray(values)) ** 2)))
    return Extrapolation(float(coef[0]), float(coef[1]), resid, exponent,
                         tuple(zip(map(float, Ds), map(float, values))))


def singular_integral_extrapolated(ls: LineSystem, Ds: Sequence[float], tol: float = 1e-3,
                                   exponent: float | None = None) -> tuple[Extrapolation, list[IntegralEstimate]]:
    runs = [truncated_singular_integral(ls, D, tol) for D in Ds]
    ex = extrapolate([r.D for r in runs], [r.value for r in runs],
                     exponent if exponent is not None else 1.0 / ls.k)
    return ex, runs


# -- two-route comparison ------------------------------------------------------------

@dataclass(frozen=True)
class RealDensityConfig:
    etas: tuple[float, ...] = (0.2, 0.1, 0.05)
    mc_samples: int = 10**6
    seed: int = 0
    Ds: tuple[float, ...] = (4.0, 8.0, 16.0)
    tol: float = 1e-3
    rel_tol: float = DEFAULT_REL_TOL
    sampler: str = "montecarlo"
    threads: int | None = None
    tail_exponent: float | None = None


@dataclass(frozen=True)
class RealDensityReport:
    sigma_slab: float
    sigma_slab_error: float
    I_extrapolated: float
    rel_diff: float
    passed: bool
    g_table: tuple
    I_table: tuple = field(default=())
    digest: str = ""


def cross_check_real_density(ls: LineSystem, config: RealDensityConfig = RealDensityConfig(),
                             ls_integral: LineSystem | None = None) -> RealDensityReport:
    """Compare the slab route with the extrapolated singular integral.

    ``ls_integral`` may be passed to run the integral on a separately loaded
    copy of the instance; it must have the same digest.
    """
    other = ls if ls_integral is None else ls_integral
    if other.digest() != ls.digest():
        raise InstanceError("the two routes were given different instances")
    slab = sigma_infinity_slab(ls, config.etas, config.sampler, config.mc_samples,
                               config.seed, threads=config.threads)
    ex, runs = singular_integral_extrapolated(other, config.Ds, config.tol, config.tail_exponent)
    sigma = slab.estimate.value
    rel = abs(sigma - ex.value) / abs(ex.value)
    I_table = tuple((r.D, r.value, r.error_indicator) for r in runs)
    return RealDensityReport(sigma, slab.estimate.error_indicator, ex.value, rel,
                             rel <= config.rel_tol, slab.g_table, I_table, ls.digest())
