"""Exact integer data for diagonal hypersurfaces, base points and line systems.

A line ``x = y + t z`` lies on ``c_1 x_1^k + ... + c_s x_s^k = n`` exactly when
``y`` is a point of the hypersurface and ``z`` solves the k homogeneous
equations ``sum_i c_i y_i^(k-j) z_i^j = 0`` for ``1 <= j <= k``.

All arithmetic here uses Python integers, so no product can overflow.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Sequence


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


class BudgetError(RuntimeError):
    """Raised when a computation would exceed its configured budget."""

    def __init__(self, message: str, required: float | int | None = None):
        super().__init__(message)
        self.required = required


def _as_int_tuple(values: Iterable, name: str) -> tuple[int, ...]:
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            # accept numpy integers and integral strings, never floats
            if isinstance(v, str) and v.lstrip("-").isdigit():
                v = int(v)
            elif hasattr(v, "__index__"):
                v = v.__index__()
            else:
                raise InstanceError(f"{name} must contain integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class DiagonalForm:
    """The equation ``c_1 x_1^k + ... + c_s x_s^k = n``."""

    k: int
    c: tuple[int, ...]
    n: int

    def __post_init__(self):
        object.__setattr__(self, "c", _as_int_tuple(self.c, "c"))
        if self.k < 1:
            raise InstanceError(f"degree k must be >= 1, got {self.k}")
        if not self.c:
            raise InstanceError("need at least one coefficient")
        if any(ci == 0 for ci in self.c):
            raise InstanceError("coefficients c_i must be nonzero")
        if self.n == 0:
            raise InstanceError("right-hand side n must be nonzero")

    @property
    def s(self) -> int:
        return len(self.c)

    @property
    def mixed_sign(self) -> bool:
        return any(ci > 0 for ci in self.c) and any(ci < 0 for ci in self.c)

    def evaluate(self, x: Sequence[int]) -> int:
        return sum(ci * xi**self.k for ci, xi in zip(self.c, x))


@dataclass(frozen=True)
class BasePoint:
    y: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "y", _as_int_tuple(self.y, "y"))
        if any(yi == 0 for yi in self.y):
            raise InstanceError("base point entries y_i must be nonzero")

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class LineSystem:
    """Coefficient array ``A[j-1][i] = c_i y_i^(k-j)`` of the line equations.

    ``c0`` is ``-(c_1 y_1^k + ... + c_s y_s^k)``; for a strict system built
    from a verified base point it equals ``-n``.  ``form`` is ``None`` for
    systems built with :func:`relaxed_line_system`.
    """

    k: int
    c: tuple[int, ...]
    y: tuple[int, ...]
    A: tuple[tuple[int, ...], ...]
    c0: int
    form: DiagonalForm | None = field(default=None, compare=False)

    @property
    def s(self) -> int:
        return len(self.c)

    @property
    def strict(self) -> bool:
        return self.form is not None

    def row(self, j: int) -> tuple[int, ...]:
        """Row for the degree-``j`` equation, ``1 <= j <= k``."""
        return self.A[j - 1]

    def column(self, i: int) -> tuple[int, ...]:
        return tuple(self.A[j][i] for j in range(self.k))

    def max_abs(self) -> int:
        return max(abs(a) for row in self.A for a in row)

    def evaluate(self, z: Sequence[int]) -> tuple[int, ...]:
        """The k left-hand sides at ``z``."""
        return tuple(
            sum(a * zi ** (j + 1) for a, zi in zip(self.A[j], z))
            for j in range(self.k)
        )

    def annihilates(self, z: Sequence[int]) -> bool:
        return all(v == 0 for v in self.evaluate(z))

    def permuted(self, perm: Sequence[int]) -> "LineSystem":
        """Same system with coordinates reordered jointly in (c, y)."""
        c = [self.c[p] for p in perm]
        y = [self.y[p] for p in perm]
        return relaxed_line_system(self.k, c, y)

    def to_instance(self) -> dict:
        doc = {"k": self.k, "s": self.s, "c": list(self.c), "y": list(self.y)}
        if self.form is not None:
            doc["n"] = self.form.n
        return doc

    def digest(self) -> str:
        return instance_digest(self.to_instance())


# Upper bounds t_0(k) for s_0(k), 2 <= k <= 15.
_T0_TABLE = {
    2: 4, 3: 7, 4: 12, 5: 17, 6: 24, 7: 31, 8: 39,
    9: 47, 10: 55, 11: 63, 12: 72, 13: 81, 14: 89, 15: 97,
}


class ReferenceTable:
    """Read-only view of the published t_0(k) bounds."""

    __slots__ = ()

    def __getitem__(self, k: int) -> int:
        return _T0_TABLE[k]

    def __contains__(self, k) -> bool:
        return k in _T0_TABLE

    def __iter__(self):
        return iter(sorted(_T0_TABLE))

    def __len__(self):
        return len(_T0_TABLE)

    def items(self):
        return sorted(_T0_TABLE.items())


T0_TABLE = ReferenceTable()


def t0_bound(k: int) -> int:
    if k not in _T0_TABLE:
        raise KeyError(f"t_0(k) is tabulated only for 2 <= k <= 15, not k={k}")
    return _T0_TABLE[k]


def verify_base_point(form: DiagonalForm, y: Sequence[int]) -> bool:
    y = _as_int_tuple(y, "y")
    if len(y) != form.s:
        raise InstanceError(f"base point has length {len(y)}, form has s={form.s}")
    return all(yi != 0 for yi in y) and form.evaluate(y) == form.n


def _coefficients(k: int, c: Sequence[int], y: Sequence[int]):
    A = tuple(
        tuple(ci * yi ** (k - j) for ci, yi in zip(c, y)) for j in range(1, k + 1)
    )
    c0 = -sum(ci * yi**k for ci, yi in zip(c, y))
    return A, c0


def build_line_system(form: DiagonalForm, y: BasePoint | Sequence[int]) -> LineSystem:
    """Strict constructor: ``y`` must be a verified nonzero base point."""
    yt = y.y if isinstance(y, BasePoint) else _as_int_tuple(y, "y")
    if not verify_base_point(form, yt):
        raise InstanceError("y is not a nonzero solution of the diagonal equation")
    A, c0 = _coefficients(form.k, form.c, yt)
    return LineSystem(form.k, form.c, yt, A, c0, form)


def relaxed_line_system(k: int, c: Sequence[int], y: Sequence[int] | None = None) -> LineSystem:
    """Line system for arbitrary nonzero ``c`` and ``y`` (``y`` defaults to ones).

    No hypersurface is attached, so ``c0`` may be zero.
    """
    c = _as_int_tuple(c, "c")
    y = (1,) * len(c) if y is None else _as_int_tuple(y, "y")
    if k < 1:
        raise InstanceError(f"degree k must be >= 1, got {k}")
    if len(c) != len(y) or not c:
        raise InstanceError("c and y must be nonempty and of equal length")
    if any(v == 0 for v in c) or any(v == 0 for v in y):
        raise InstanceError("c_i and y_i must be nonzero")
    A, c0 = _coefficients(k, c, y)
    return LineSystem(k, c, y, A, c0, None)


def line_polynomial(form: DiagonalForm, y: Sequence[int], z: Sequence[int]) -> list[int]:
    """Coefficients (in t, ascending) of ``sum c_i (y_i + t z_i)^k - n``."""
    k = form.k
    coeffs = [0] * (k + 1)
    for ci, yi, zi in zip(form.c, y, z):
        for j in range(k + 1):
            coeffs[j] += ci * comb(k, j) * yi ** (k - j) * zi**j
    coeffs[0] -= form.n
    return coeffs


def line_identity_check(form: DiagonalForm, y: BasePoint | Sequence[int], z: Sequence[int]) -> bool:
    """True iff ``x = y + t z`` lies on the hypersurface for every t."""
    yt = y.y if isinstance(y, BasePoint) else _as_int_tuple(y, "y")
    z = _as_int_tuple(z, "z")
    if len(yt) != form.s or len(z) != form.s:
        raise InstanceError("dimension mismatch between form, y and z")
    return all(v == 0 for v in line_polynomial(form, yt, z))


def vanishing_subsum_scan(
    form_or_c, y: Sequence[int], k: int | None = None, max_s: int = 28
) -> list[frozenset[int]]:
    """All nonempty index sets S with ``sum_{i in S} c_i y_i^k = 0``.

    Indices are 0-based.  Uses a meet-in-the-middle split: subset sums of the
    two halves are bucketed and matched against each other.
    """
    if isinstance(form_or_c, DiagonalForm):
        c, k = form_or_c.c, form_or_c.k
    else:
        c = _as_int_tuple(form_or_c, "c")
        if k is None:
            raise InstanceError("k is required when passing raw coefficients")
    y = y.y if isinstance(y, BasePoint) else _as_int_tuple(y, "y")
    s = len(c)
    if len(y) != s:
        raise InstanceError("dimension mismatch between c and y")
    if s > max_s:
        raise BudgetError(
            f"subset scan over s={s} indices needs 2^{s} subsets; limit is s <= {max_s}",
            required=2**s,
        )
    w = [ci * yi**k for ci, yi in zip(c, y)]
    h = s // 2
    left, right = range(h), range(h, s)

    def subset_sums(idx):
        table = [(0, 0)]
        for i in idx:
            table += [(mask | (1 << i), total + w[i]) for mask, total in table]
        sums = {}
        for mask, total in table:
            sums.setdefault(total, []).append(mask)
        return sums

    lsums = subset_sums(left)
    rsums = subset_sums(right)
    found = []
    for total, lmasks in lsums.items():
        for rmask in rsums.get(-total, ()):
            for lmask in lmasks:
                mask = lmask | rmask
                if mask:
                    found.append(frozenset(i for i in range(s) if mask >> i & 1))
    found.sort(key=lambda S: (len(S), sorted(S)))
    return found


# -- instance documents -------------------------------------------------------

def instance_digest(doc: dict) -> str:
    canon = json.dumps(
        {key: doc[key] for key in sorted(doc) if key in ("k", "s", "c", "n", "y")},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_instance(doc: dict, strict: bool | None = None) -> LineSystem:
    """Build a line system from ``{"k", "s", "c", "n", "y"}``.

    With ``n`` present (and ``strict`` not False) the base point is verified;
    otherwise a relaxed system is returned.
    """
    for key in ("k", "c"):
        if key not in doc:
            raise InstanceError(f"instance is missing {key!r}")
    for key, val in doc.items():
        if isinstance(val, float) or (
            isinstance(val, list) and any(isinstance(v, float) for v in val)
        ):
            raise InstanceError(f"instance field {key!r} must hold exact integers")
    k = int(doc["k"])
    c = _as_int_tuple(doc["c"], "c")
    y = _as_int_tuple(doc.get("y", [1] * len(c)), "y")
    if "s" in doc and int(doc["s"]) != len(c):
        raise InstanceError(f"s={doc['s']} disagrees with len(c)={len(c)}")
    if len(y) != len(c):
        raise InstanceError("y and c have different lengths")
    if strict is None:
        strict = "n" in doc
    if strict:
        form = DiagonalForm(k, c, int(doc["n"]))
        return build_line_system(form, y)
    return relaxed_line_system(k, c, y)


def load_instance(path: str | Path, strict: bool | None = None) -> LineSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(json.load(fh), strict=strict)


def dump_instance(ls: LineSystem) -> str:
    return json.dumps(ls.to_instance())


FLAGSHIP = {
    "k": 3,
    "s": 12,
    "c": [1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1, -1],
    "n": 7,
    "y": [2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
}


def flagship() -> LineSystem:
    """The fixed k=3, s=12 reference instance."""
    return parse_instance(FLAGSHIP)
