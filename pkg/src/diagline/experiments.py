"""Desk-scale runs: count growth, translation-count growth and the density suite.

Configuration is a flat ``key = value`` text file; command-line overrides win.
Reports carry raw tables whose floats are printed with 17 significant digits,
so equal configurations reproduce byte-identical tables.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .core import FLAGSHIP, InstanceError, LineSystem, parse_instance
from .enumeration import (MEMORY_BUDGET, count_lines, count_translation_system,
                          fit_growth_exponent, verify_averaging_inequality)
from .localdensity import (density_sequence, is_prime, sigma_p_estimate,
                           sigma_p_via_series, truncated_singular_series)
from .realdensity import (FitRejected, extrapolate, sigma_infinity_slab,
                          truncated_singular_integral)

_LIST_INT = {"boxes", "xs", "primes", "c"}
_LIST_FLOAT = {"etas", "ds"}
_INT = {"h_max", "series_h", "series_d", "seed", "threads", "memory_budget", "mc_samples",
        "k", "averaging_max_x"}
_FLOAT = {"tol", "slope_tol", "constant_tol", "rel_tol", "subconvex_margin"}
_STR = {"instance", "sampler", "method"}
_BOOL = {"averaging", "real_density"}

DEFAULTS = {
    "instance": "flagship",
    "boxes": [3, 4, 5, 6, 7, 8],
    "xs": [4, 6, 8, 12, 16, 24],
    "c": [1, 1, 1, 1, -1, -1, -1],
    "k": 3,
    "primes": [2, 3, 5, 7],
    "h_max": 2,
    "series_h": 2,
    "series_d": 8,
    "etas": [0.2, 0.1, 0.05],
    "ds": [4.0, 8.0, 16.0],
    "tol": 1e-3,
    "slope_tol": 0.75,
    "constant_tol": 0.35,
    "rel_tol": 0.05,
    "subconvex_margin": 0.5,
    "seed": 0,
    "threads": 1,
    "memory_budget": MEMORY_BUDGET,
    "mc_samples": 10**6,
    "sampler": "montecarlo",
    "method": "auto",
    "averaging": True,
    "averaging_max_x": 8,
    "real_density": True,
}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _LIST_INT:
            return [int(t) for t in raw.replace(" ", "").split(",") if t]
        if key in _LIST_FLOAT:
            return [float(t) for t in raw.replace(" ", "").split(",") if t]
        if key in _INT:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if key in _FLOAT:
            return float(raw)
        if key in _BOOL:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if key in _STR:
            return raw
    except ValueError as exc:
        raise InstanceError(f"bad value for {key!r}: {raw!r}") from exc
    raise InstanceError(f"unknown configuration key {key!r}")


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InstanceError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        out[key.lower().replace("-", "_")] = _parse_value(key.lower().replace("-", "_"), raw)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    instance_doc: dict

    @classmethod
    def build(cls, file: str | Path | None = None, overrides: dict | None = None) -> "ExperimentConfig":
        vals = dict(DEFAULTS)
        base_dir = Path(".")
        if file is not None:
            vals.update(parse_config_text(Path(file).read_text(encoding="utf-8")))
            base_dir = Path(file).parent
        for key, val in (overrides or {}).items():
            if val is None:
                continue
            key = key.lower().replace("-", "_")
            vals[key] = _parse_value(key, val) if isinstance(val, str) and key not in _STR else val
        for key in ("boxes", "xs", "primes", "etas", "ds"):
            if not vals[key]:
                raise InstanceError(f"configuration range {key!r} is empty")
        for p in vals["primes"]:
            if not is_prime(p):
                raise InstanceError(f"{p} in the prime list is not prime")
        inst = vals["instance"]
        if inst == "flagship":
            doc = dict(FLAGSHIP)
        else:
            path = Path(inst)
            if not path.is_absolute() and not path.exists():
                path = base_dir / path
            doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(vals, doc)

    def __getitem__(self, key):
        return self.values[key]

    def line_system(self) -> LineSystem:
        return parse_instance(self.instance_doc)

    def config_hash(self) -> str:
        canon = {k: v for k, v in self.values.items() if k not in ("threads", "instance")}
        canon["instance_doc"] = {k: self.instance_doc[k] for k in sorted(self.instance_doc)}
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(v) -> str:
    """Deterministic text for a table cell."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return str(v)


@dataclass
class ExperimentReport:
    name: str
    provenance: dict
    tables: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    informational: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add_table(self, name: str, header: list[str], rows: list[list]) -> None:
        self.tables[name] = (list(header), [[fmt(v) for v in row] for row in rows])

    @property
    def passed(self) -> bool:
        return not self.errors and all(self.checks.values())

    def table_csv(self, name: str) -> str:
        header, rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()

    def to_dict(self, with_timings: bool = False) -> dict:
        doc = {
            "name": self.name,
            "provenance": self.provenance,
            "tables": {k: {"header": h, "rows": r} for k, (h, r) in self.tables.items()},
            "slopes": {k: fmt(v) for k, v in self.slopes.items()},
            "constants": {k: fmt(v) for k, v in self.constants.items()},
            "checks": self.checks,
            "informational": {k: fmt(v) for k, v in self.informational.items()},
            "errors": self.errors,
            "passed": self.passed,
        }
        if with_timings:
            doc["timings"] = {k: fmt(v) for k, v in self.timings.items()}
        return doc

    def to_json(self, with_timings: bool = False) -> str:
        return json.dumps(self.to_dict(with_timings), indent=2, sort_keys=True)

    def gnuplot_script(self, table: str, data_file: str) -> str:
        """Plot commands for a two-column log-log table written as CSV to ``data_file``."""
        header, _ = self.tables[table]
        return "\n".join([
            "set datafile separator ','",
            "set logscale xy",
            f"set xlabel '{header[0]}'",
            f"set ylabel '{header[1]}'",
            f"set title '{self.name}: {table}'",
            f"plot '{data_file}' using 1:2 skip 1 with linespoints title '{header[1]}'",
            "",
        ])

    def write(self, outdir: str | Path) -> list[Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / f"{self.name}.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        for name in self.tables:
            p = out / f"{self.name}_{name}.csv"
            p.write_text(self.table_csv(name), encoding="utf-8")
            written.append(p)
        if "counts" in self.tables:
            p = out / f"{self.name}_counts.gp"
            p.write_text(self.gnuplot_script("counts", f"{self.name}_counts.csv"), encoding="utf-8")
            written.append(p)
        return written


def _provenance(cfg: ExperimentConfig, ls: LineSystem | None) -> dict:
    return {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg["seed"],
        "instance_digest": ls.digest() if ls is not None else None,
    }


def _real_density(cfg: ExperimentConfig, ls: LineSystem, report: ExperimentReport):
    """Both real-density routes; records tables and returns ``(slab, integral)``."""
    slab_value = integral_value = None
    try:
        fit = sigma_infinity_slab(ls, cfg["etas"], cfg["sampler"], cfg["mc_samples"],
                                  cfg["seed"], threads=cfg["threads"])
        report.add_table("g_table", ["eta", "g", "stderr"], [list(r) for r in fit.g_table])
        slab_value = fit.estimate.value
        report.constants["sigma_inf_slab"] = slab_value
        report.constants["sigma_inf_slab_residual"] = fit.residual
    except (FitRejected, InstanceError) as exc:
        report.errors.append(f"slab: {exc}")
    runs = []
    for D in cfg["ds"]:
        runs.append(truncated_singular_integral(ls, D, cfg["tol"]))
    report.add_table("I_table", ["D", "I", "error", "boxes"],
                     [[r.D, r.value, r.error_indicator, r.boxes] for r in runs])
    if len(runs) >= 2:
        ex = extrapolate([r.D for r in runs], [r.value for r in runs], 1.0 / ls.k)
        integral_value = ex.value
    else:
        integral_value = runs[-1].value
    report.constants["I_extrapolated"] = integral_value
    if slab_value is not None:
        rel = abs(slab_value - integral_value) / abs(integral_value)
        report.constants["real_rel_diff"] = rel
        report.checks["real_density_routes"] = rel <= cfg["rel_tol"]
    return slab_value, integral_value


def run_asymptotic(cfg: ExperimentConfig) -> ExperimentReport:
    """Exact counts over the box range, the log-log slope and the predicted constant."""
    ls = cfg.line_system()
    k, s = ls.k, ls.s
    report = ExperimentReport("asymptotic", _provenance(cfg, ls))
    if not ls.strict:
        report.informational["base_point"] = "relaxed (no right-hand side given)"
    if s < k * (k + 1):
        report.informational["regime"] = f"out of theorem range: s={s} < k(k+1)={k * (k + 1)}"
    exponent = s - k * (k + 1) / 2
    boxes = sorted(cfg["boxes"])
    rows, points = [], []
    for B in boxes:
        res = count_lines(ls, B, method=cfg["method"], threads=cfg["threads"],
                          memory_budget=cfg["memory_budget"])
        rows.append([B, res.count, res.count / B**exponent if B else math.nan])
        points.append((B, res.count))
        report.timings[f"count_B{B}"] = res.wall_time
    report.add_table("counts", ["B", "N", "N/B^e"], rows)
    if len(points) >= 3 and all(B > 0 for B, _ in points):
        fit = fit_growth_exponent(points)
        report.slopes["fitted"] = fit.slope
        report.slopes["target"] = exponent
        report.slopes["residual"] = fit.residual
        report.checks["slope"] = abs(fit.slope - exponent) <= cfg["slope_tol"]
    else:
        report.errors.append("slope fit needs at least three positive boxes")
    dens_rows, prod = [], 1.0
    for p in cfg["primes"]:
        seq = density_sequence(ls, p, cfg["h_max"])
        dens_rows.append([p] + seq)
        prod *= seq[-1]
    report.add_table("sigma_p", ["p"] + [f"d_{h}" for h in range(1, cfg["h_max"] + 1)], dens_rows)
    report.constants["euler_product"] = prod
    series = truncated_singular_series(ls, cfg["series_d"])
    report.constants["singular_series_D"] = series.value
    if cfg["real_density"]:
        slab, integral = _real_density(cfg, ls, report)
        sigma_inf = slab if slab is not None else integral
        C = sigma_inf * prod
        report.constants["C"] = C
        ratio = rows[-1][2]
        report.informational["ratio_last_box"] = ratio
        report.informational["ratio_over_C"] = ratio / C
        report.informational["constant_within_tol"] = abs(ratio / C - 1) <= cfg["constant_tol"]
    return report


def run_subconvexity(cfg: ExperimentConfig) -> ExperimentReport:
    """Translation-system counts against the subconvex and convexity exponents."""
    c, k = list(cfg["c"]), cfg["k"]
    s = len(c)
    if sum(c) == 0:
        raise InstanceError("subconvexity run needs c_1 + ... + c_s != 0")
    if s >= k * (k + 1):
        raise InstanceError(f"subconvexity run needs s < k(k+1); got s={s}, k={k}")
    from .core import relaxed_line_system

    report = ExperimentReport("subconvexity", _provenance(cfg, relaxed_line_system(k, c)))
    xs = sorted(cfg["xs"])
    rows, points = [], []
    for X in xs:
        res = count_translation_system(c, k, X, method=cfg["method"], threads=cfg["threads"])
        rows.append([X, res.count])
        points.append((X, res.count))
        report.timings[f"count_X{X}"] = res.wall_time
    report.add_table("counts", ["X", "Upsilon"], rows)
    fit = fit_growth_exponent(points)
    bound = (s - 1) / 2 + cfg["subconvex_margin"]
    report.slopes["fitted"] = fit.slope
    report.slopes["subconvex_bound"] = bound
    report.slopes["convexity_exponent"] = s - k * (k + 1) / 2
    report.slopes["residual"] = fit.residual
    report.checks["slope"] = fit.slope <= bound
    if cfg["averaging"]:
        avg_rows, ok = [], True
        for X in xs:
            if X > cfg["averaging_max_x"]:
                continue
            rep = verify_averaging_inequality(c, k, X, method=cfg["method"])
            avg_rows.append([X, rep.lhs, rep.rhs_count, rep.holds])
            ok &= rep.holds
        if avg_rows:
            report.add_table("averaging", ["X", "lhs", "rhs_times_X", "holds"], avg_rows)
            report.checks["averaging"] = ok
    return report


def run_density_suite(cfg: ExperimentConfig) -> ExperimentReport:
    """Both p-adic routes per prime, the truncated series and both real routes."""
    ls = cfg.line_system()
    report = ExperimentReport("densities", _provenance(cfg, ls))
    rows, identity_ok = [], True
    for p in cfg["primes"]:
        est = sigma_p_estimate(ls, p, cfg["h_max"])
        H = min(cfg["series_h"], cfg["h_max"])
        try:
            ser = sigma_p_via_series(ls, p, H)
            delta = ser.error_indicator
        except AssertionError as exc:
            report.errors.append(str(exc))
            identity_ok, delta = False, math.nan
        w = est.witness
        rows.append([p, est.value, est.stabilized, delta,
                     w.certified if w else False, w.nu_p if w else -1])
        report.informational[f"d_h_p{p}"] = " ".join(fmt(v) for v in est.sequence)
    report.add_table("sigma_p", ["p", "d_hmax", "stabilized", "series_delta", "witness_certified", "nu_p"], rows)
    report.checks["series_identity"] = identity_ok
    series = truncated_singular_series(ls, cfg["series_d"])
    report.add_table("series", ["q", "A_re", "A_im"],
                     [[q, t.real, t.imag] for q, t in enumerate(series.sequence, 1)])
    report.constants["singular_series_D"] = series.value
    report.checks["series_real"] = series.imag_residue < 1e-9
    if cfg["real_density"]:
        _real_density(cfg, ls, report)
    return report
