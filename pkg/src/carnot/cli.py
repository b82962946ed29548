"""Command line front end and configuration-driven experiment runner.

Exit codes: 0 when every invariant check passes, 1 when one fails, 2 for a
configuration error and 3 for an unexpected internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import AlgebraStructureError, UnknownAlgebra, resolve, validate
from .bch import verify_group_law
from .decomposition import DecompositionError, calibrated_scheme, decompose, estimate_constants, build_scheme
from .fitting import geometric_grid
from .group import (
    calibrate_norm,
    holder_comparison,
    load_group,
    right_translation_estimate,
    triangle_check,
    word_distance_decay,
    word_distance_estimate,
)
from .horizontal import Curve, HorizontalControl, is_horizontal, lift, ray_error_study
from .pansu import (
    Box,
    MapSpecError,
    continuity_study,
    convergence_study,
    estimate_modulus,
    is_certified,
    map_from_spec,
    region,
    verify_pansu_trick,
    verify_z0_bridge,
)

OUTPUT_ENV = "CARNOT_OUTPUT_DIR"
SUITES = ("law", "metric", "lift", "ray-error", "decompose", "constants", "pansu-rate", "pansu-trick", "bridge",
          "continuity")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# -- configuration ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    suite: str
    group: str = "heisenberg(1)"
    map: dict | str | None = None
    A: list | None = None
    Omega: list | None = None
    samples: int = 2_000
    x_samples: int = 4
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    t_points: int = 20
    decades: float = 4.0
    t_max: float = 1.0
    calibration_samples: int = 20_000
    calibration_seed: int = 0
    control: dict | str | None = None
    curve: dict | str | None = None
    point: list | None = None
    output_dir: str | None = None
    mode: str = "exact"
    timestamp: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown config field")
        if "suite" not in data:
            raise ConfigError("suite: missing")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        base = Path(path).parent
        for key in ("map", "control", "curve"):
            if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.suite not in SUITES:
            raise ConfigError(f"suite: unknown suite {self.suite!r} (choose from {', '.join(SUITES)})")
        if self.mode not in ("exact", "float"):
            raise ConfigError("mode: must be 'exact' or 'float'")
        for name in ("samples", "x_samples", "t_points", "calibration_samples"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer")
        if self.t_points < 3:
            raise ConfigError("t_points: need at least 3 grid points")
        if not self.decades > 0:
            raise ConfigError("decades: must be positive")
        if not self.t_max > 0:
            raise ConfigError("t_max: must be positive")
        for name in ("A", "Omega"):
            if getattr(self, name) is not None:
                parse_box(getattr(self, name), name)
        for name in ("map", "control", "curve"):
            value = getattr(self, name)
            if isinstance(value, str) and not Path(value).is_file():
                raise ConfigError(f"{name}: file {value} does not exist")
        if self.suite in ("pansu-rate", "pansu-trick", "bridge", "continuity") and self.map is None:
            raise ConfigError("map: required for the Pansu suites")

    @property
    def exact(self) -> bool | None:
        return None if self.mode == "exact" else False

    def out_path(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or "carnot-out")


def parse_box(value, name: str = "box") -> Box:
    """Accept [[lo...], [hi...]], "lo:hi" (cube) or "l1,l2,...:h1,h2,..."."""
    try:
        if isinstance(value, str):
            lo_s, hi_s = value.split(":")
            lo = [float(v) for v in lo_s.split(",")]
            hi = [float(v) for v in hi_s.split(",")]
        else:
            lo, hi = [list(map(float, part)) for part in value]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: expected 'lo:hi' or [[lo...], [hi...]]") from exc
    if len(lo) != len(hi):
        if len(lo) == 1:
            lo = lo * len(hi)
        elif len(hi) == 1:
            hi = hi * len(lo)
        else:
            raise ConfigError(f"{name}: corners of different dimension")
    for i, (a, b) in enumerate(zip(lo, hi)):
        if not a < b:
            raise ConfigError(f"{name}: min must be < max in coordinate {i + 1} (got {a} >= {b})")
    return Box(tuple(lo), tuple(hi))


def _box_for(value, name: str, N: int, default: float) -> Box:
    box = Box.cube(N, default) if value is None else parse_box(value, name)
    if len(box.lo) == 1 and N > 1:
        box = Box(box.lo * N, box.hi * N)
    if box.N != N:
        raise ConfigError(f"{name}: box has dimension {box.N}, group has N = {N}")
    return box


def _load_json(value, name: str):
    if isinstance(value, dict):
        return value
    try:
        return json.loads(Path(value).read_text())
    except OSError as exc:
        raise ConfigError(f"{name}: cannot read {value}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON ({exc.msg})") from exc


# -- output ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


class Reporter:
    """Writes CSV, JSON and two-column data files atomically into one directory."""

    def __init__(self, out_dir: Path, suite: str, timestamp: bool):
        self.out_dir = out_dir
        self.suite = suite
        self.timestamp = timestamp
        self.written: list[str] = []

    def _header(self) -> str:
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return f"# carnot {__version__} {self.suite} {stamp}\n" if self.timestamp else ""

    def _write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(name)
        return path

    def csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(self._header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._write(name, buf.getvalue())

    def dat(self, name: str, columns: tuple[str, str], xs, ys) -> Path:
        lines = [self._header().rstrip("\n")] if self.timestamp else []
        lines.append(f"# {columns[0]} {columns[1]}")
        lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in zip(xs, ys)]
        return self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, payload: dict) -> Path:
        payload = dict(payload)
        if self.timestamp:
            payload["generated"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return self._write(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# -- suites ------------------------------------------------------------------------


@dataclass
class SuiteResult:
    passed: bool
    summary: dict
    lines: list[str] = field(default_factory=list)


def _group(cfg: ExperimentConfig):
    try:
        return load_group(cfg.group, True, cfg.calibration_samples, cfg.calibration_seed)
    except (UnknownAlgebra, AlgebraStructureError, FileNotFoundError) as exc:
        raise ConfigError(f"group: {exc}") from exc


def suite_law(cfg, rep):
    try:
        alg = resolve(cfg.group)
    except (UnknownAlgebra, AlgebraStructureError, FileNotFoundError) as exc:
        raise ConfigError(f"group: {exc}") from exc
    from .group import CarnotGroup

    group = CarnotGroup.from_algebra(alg)
    diag = verify_group_law(group.law)
    summary = {"group": alg.name, "law": group.law.to_json(),
               "checks": {c.name: {"passed": c.passed, "message": c.message} for c in diag.checks},
               "passed": diag.passed}
    rep.json("law.json", summary)
    return SuiteResult(diag.passed, summary, group.law.describe().splitlines())


def suite_metric(cfg, rep):
    group = _group(cfg)
    rows = []
    fresh = triangle_check(group, max(cfg.samples, 100_000), cfg.calibration_seed + 7919)
    rows.append(("triangle_violations", fresh["seed"], fresh["samples"], fresh["violations"]))
    rng = np.random.default_rng(cfg.seed)
    P, Q = group.sample_box(rng, 1000), group.sample_box(rng, 1000)
    t = 10.0 ** rng.uniform(-2, 2, size=1000)
    d = group.distance_batch(P, Q)
    homog = float(np.max(np.abs(group.distance_batch(group.dilate_batch(t, P), group.dilate_batch(t, Q)) - t * d) / (t * d)))
    A = group.sample_box(rng, 1000)
    left = float(np.max(np.abs(group.distance_batch(group.multiply_batch(A, P), group.multiply_batch(A, Q)) - d) / d))
    rows += [("homogeneity_rel_error", cfg.seed, 1000, homog), ("left_invariance_rel_error", cfg.seed, 1000, left)]
    scheme = build_scheme(group)
    CK, CR, CW = [], [], []
    for seed in cfg.seeds:
        CK.append(holder_comparison(group, (-1.0, 1.0), cfg.samples, seed).C_K)
        CR.append(right_translation_estimate(group, 2.0, cfg.samples, seed).C)
        CW.append(word_distance_estimate(group, scheme.k0, 1e-2, 2.0, max(cfg.samples // 4, 100), seed).C)
        rows += [("C_K", seed, cfg.samples, CK[-1]), ("C_right_translation", seed, cfg.samples, CR[-1]),
                 ("C_word", seed, max(cfg.samples // 4, 100), CW[-1])]
    alphas = [1e-1, 1e-2, 1e-3, 1e-4]
    decay = word_distance_decay(group, scheme.k0, alphas, 2.0, max(cfg.samples // 4, 100), cfg.seed)
    rows.append(("word_decay_slope", cfg.seed, max(cfg.samples // 4, 100), decay["slope"]))
    rep.csv("metric_estimates.csv", ["estimate", "seed", "samples", "value"], rows)
    rep.dat("word_decay.dat", ("alpha", "max_distance"), alphas, decay["max_distance"])

    def stable(vals):
        return bool(np.all(np.isfinite(vals)) and max(vals) / min(vals) < 2.0)

    checks = {
        "triangle": fresh["violations"] == 0,
        "homogeneity": homog <= 1e-12,
        "left_invariance": left <= 1e-12,
        "C_K_stable": stable(CK),
        "C_right_translation_stable": stable(CR),
        "C_word_stable": stable(CW),
        "word_decay_exponent": decay["slope"] >= decay["predicted_exponent"] - 0.05,
    }
    summary = {"group": group.name, "mu": group.mu.tolist(), "norm_certificate": group.norm_data.certificate,
               "triangle": fresh, "homogeneity_rel_error": homog, "left_invariance_rel_error": left,
               "C_K": CK, "C_right_translation": CR, "C_word": CW, "word_decay": decay, "k0": scheme.k0,
               "checks": checks, "passed": all(checks.values())}
    rep.json("metric.json", summary)
    return SuiteResult(summary["passed"], summary, [f"{k}: {'PASS' if v else 'FAIL'}" for k, v in checks.items()])


def _default_control(group) -> HorizontalControl:
    comps = [[1], [0, 2]] + [[0, 0, 1]] * (group.n - 2)
    return HorizontalControl.polynomial(comps[: group.n], 1)


def _control(cfg, group) -> HorizontalControl:
    if cfg.control is None:
        return _default_control(group)
    try:
        ctrl = HorizontalControl.from_json(_load_json(cfg.control, "control"))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"control: {exc}") from exc
    if ctrl.n != group.n:
        raise ConfigError(f"control: has {ctrl.n} components, group has n = {group.n}")
    return ctrl


def _start(cfg, group):
    if cfg.point is None:
        return tuple([Fraction(0)] * group.N)
    if len(cfg.point) != group.N:
        raise ConfigError(f"point: need {group.N} coordinates")
    try:
        return tuple(Fraction(str(v)) if isinstance(v, str) else v for v in cfg.point)
    except ValueError as exc:
        raise ConfigError(f"point: {exc}") from exc


def suite_lift(cfg, rep):
    group = _group(cfg)
    curve = lift(group, _start(cfg, group), _control(cfg, group))
    report = is_horizontal(group, curve)
    sampled = curve.sample(201)
    rep.csv("curve.csv", ["t"] + [f"x{i + 1}" for i in range(group.N)],
            [(t, *p) for t, p in zip(sampled.times, sampled.points)])
    summary = {"group": group.name, "pieces": len(curve.pieces), "exact": curve.exact,
               "end_point": [str(v) if isinstance(v, Fraction) else float(v) for v in curve(curve.end)],
               "horizontality": dataclasses.asdict(report), "passed": report.passed}
    rep.json("lift.json", summary)
    return SuiteResult(report.passed, summary, [f"end point: {summary['end_point']}",
                                                f"max horizontality residual: {report.max_residual:.3e}"])


def suite_ray_error(cfg, rep):
    group = _group(cfg)
    if cfg.curve is not None:
        data = _load_json(cfg.curve, "curve")
        try:
            curve = Curve.from_polynomials(data["coords"], data.get("T", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"curve: {exc}") from exc
        if len(curve.pieces[0].coords) != group.N:
            raise ConfigError(f"curve: need {group.N} coordinate polynomials")
    else:
        curve = lift(group, _start(cfg, group), _control(cfg, group))
    horizontal = is_horizontal(group, curve)
    grid = geometric_grid(1e-1, cfg.decades, cfg.t_points)
    grid = grid[grid <= float(curve.end) - float(curve.start)]
    study = ray_error_study(group, curve, grid)
    study_ref = ray_error_study(group, curve, np.geomspace(grid[0], grid[-1], 4 * (len(grid) - 1) + 1))
    bound = study.t ** study.exponent
    rep.csv("ray_error.csv", ["t", "error", "bound_value"], zip(study.t, study.errors, bound))
    rep.dat("ray_error.dat", ("t", "error"), study.t, study.errors)
    stability = max(study.C_hat, study_ref.C_hat) / min(study.C_hat, study_ref.C_hat) if study.C_hat > 0 else 1.0
    checks = {"horizontal": horizontal.passed, "C_hat_finite": math.isfinite(study.C_hat),
              "C_hat_grid_stable": stability < 2.0}
    summary = {"group": group.name, "slope": study.fit.slope, "predicted_slope": study.exponent,
               "C_hat": study.C_hat, "C_hat_refined": study_ref.C_hat, "stability_ratio": stability,
               "checks": checks, "passed": all(checks.values())}
    rep.json("ray_error.json", summary)
    return SuiteResult(summary["passed"], summary, [f"slope {study.fit.slope:.4f} (1 + 1/s = {study.exponent:.4f})",
                                                    f"C_hat {study.C_hat:.4g}"])


def suite_decompose(cfg, rep):
    group = _group(cfg)
    if cfg.point is None:
        raise ConfigError("point: required for decompose")
    point = _start(cfg, group)
    scheme = build_scheme(group)
    try:
        word = decompose(scheme, point, exact=cfg.mode == "exact")
    except DecompositionError as exc:
        summary = {"group": group.name, "error": str(exc), "passed": False}
        rep.json("decompose.json", summary)
        return SuiteResult(False, summary, [str(exc)])
    letters = [(j + 1, lam) for j, lam in word.letters]
    summary = {"group": group.name, "point": [str(v) for v in point], "k0": scheme.k0,
               "letters": [[j, str(lam) if isinstance(lam, Fraction) else float(lam)] for j, lam in letters],
               "residual": word.residual, "passed": True}
    rep.json("decompose.json", summary)
    lines = [f"k0 = {scheme.k0}"] + [f"  e{j} * {float(lam):.17g}" for j, lam in letters] + [f"residual {word.residual:.3e}"]
    return SuiteResult(True, summary, lines)


def suite_constants(cfg, rep):
    group = _group(cfg)
    scheme = build_scheme(group)
    c = estimate_constants(scheme, cfg.samples, cfg.seed)
    summary = {"group": group.name, **dataclasses.asdict(c), "passed": math.isfinite(c.C0) and c.C0 >= 1}
    rep.json("constants.json", summary)
    return SuiteResult(summary["passed"], summary, [f"k0 = {c.k0}", f"C0 = {c.C0:.6g}",
                                                    f"sup |xi| on unit sphere = {c.sup_xi:.6g} (sampled {c.sampled_sup_xi:.6g})"])


def _pansu_setup(cfg):
    group = _group(cfg)
    try:
        spec = _load_json(cfg.map, "map")
        f = map_from_spec(spec, group)
    except (MapSpecError, UnknownAlgebra) as exc:
        raise ConfigError(f"map: {exc}") from exc
    if f.source.N != group.N:
        raise ConfigError(f"map: source group {f.source.name} does not match group {group.name}")
    A = _box_for(cfg.A, "A", group.N, 1.0)
    Omega = _box_for(cfg.Omega, "Omega", group.N, 4.0)
    if not Omega.contains_box(A, strict=True):
        raise ConfigError("A: must lie inside the interior of Omega")
    f = f.with_domain(Omega)
    scheme = calibrated_scheme(f.source, cfg.samples, cfg.seed)
    reg = region(A, Omega, scheme, t_max=cfg.t_max, seed=cfg.seed)
    return f, scheme, reg


def _region_summary(reg, f):
    return {"map": f.spec, "certificate": f.certificate, "gradient_method": f.gradient_method,
            "dist_A_complement": reg.distance_to_complement, "k0": reg.k0, "C0": reg.C0, "sup_xi": reg.sup_xi,
            "t_A": reg.t_A}


def _study_rows(study, N):
    for sample, x, xi, t, err, b in study.rows:
        yield (sample, *x, *xi, t, err, b)


def suite_pansu_rate(cfg, rep):
    f, scheme, reg = _pansu_setup(cfg)
    omega = estimate_modulus(f, reg, cfg.samples, cfg.seed)
    grid = geometric_grid(reg.t_A, cfg.decades, cfg.t_points)
    study = convergence_study(f, reg, scheme, t_grid=grid, omega=omega, seed=cfg.seed, exact=cfg.exact,
                              x_samples=cfg.x_samples)
    N = f.source.N
    header = ["sample"] + [f"x{i + 1}" for i in range(N)] + [f"xi{i + 1}" for i in range(N)] + ["t", "error", "bound_value"]
    rep.csv("pansu_rate.csv", header, _study_rows(study, N))
    rep.dat("pansu_rate.dat", ("t", "max_error"), study.check.t, study.check.errors)
    rep.dat("pansu_rate_bound.dat", ("t", "omega_power"), study.check.t, study.check.bound_values)
    summary = {**_region_summary(reg, f), **study.summary(), "omega_checks": omega.check(),
               "uniform_decay_ratio": study.check.decay_ratio, "certified": is_certified(f)}
    summary["passed"] = bool(study.check.passed and is_certified(f) and all(summary["omega_checks"].values()))
    rep.json("pansu_rate.json", summary)
    return SuiteResult(summary["passed"], summary, [
        f"t_A = {reg.t_A:.6g}, exponent 1/s^k0 = {study.exponent:.6g}",
        f"max error {study.check.errors.max():.3e}, C_hat {study.check.C_hat:.4g} (refined {study.check.C_hat_refined:.4g})",
        f"uniform error ratio smallest/largest t = {study.check.decay_ratio:.6g}"])


def suite_pansu_trick(cfg, rep):
    f, scheme, reg = _pansu_setup(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0.0
    N = f.source.N
    count = max(1, min(cfg.samples, 100))
    X = reg.sample_A(rng, count)
    XI = f.source.sample_sphere(rng, count)
    T = reg.t_A * rng.uniform(1e-3, 1.0, size=count)
    for k, (x, xi, t) in enumerate(zip(X, XI, T)):
        res = verify_pansu_trick(f, x, xi, scheme, t, exact=cfg.exact).residual
        worst = max(worst, res)
        rows.append((k, *x, *xi, t, res))
    header = ["sample"] + [f"x{i + 1}" for i in range(N)] + [f"xi{i + 1}" for i in range(N)] + ["t", "residual"]
    rep.csv("pansu_trick.csv", header, rows)
    summary = {**_region_summary(reg, f), "samples": count, "max_residual": worst, "passed": worst <= 1e-10}
    rep.json("pansu_trick.json", summary)
    return SuiteResult(summary["passed"], summary, [f"max trick residual {worst:.3e} over {count} samples"])


def suite_bridge(cfg, rep):
    f, scheme, reg = _pansu_setup(cfg)
    omega = estimate_modulus(f, reg, cfg.samples, cfg.seed)
    grid = geometric_grid(reg.t_A, cfg.decades, cfg.t_points)
    bridge = verify_z0_bridge(f, reg, scheme, t_grid=grid, omega=omega, seed=cfg.seed, exact=cfg.exact,
                              x_samples=cfg.x_samples)
    N = f.source.N
    header = ["sample"] + [f"x{i + 1}" for i in range(N)] + [f"xi{i + 1}" for i in range(N)] + ["t", "error", "bound_value"]
    out = {}
    for label, study in (("z_z0", bridge.z_z0), ("R_z0", bridge.R_z0)):
        rep.csv(f"bridge_{label}.csv", header, _study_rows(study, N))
        rep.dat(f"bridge_{label}.dat", ("t", "max_error"), study.check.t, study.check.errors)
        out[label] = study.summary()
    summary = {**_region_summary(reg, f), **out, "passed": bool(bridge.passed)}
    rep.json("bridge.json", summary)
    return SuiteResult(summary["passed"], summary, [
        f"{k}: C_hat {v['C_hat']:.4g}, stability {v['stability_ratio']:.3g}, decay ratio {v['decay_ratio']:.6g}"
        for k, v in out.items()])


def suite_continuity(cfg, rep):
    f, scheme, reg = _pansu_setup(cfg)
    omega = estimate_modulus(f, reg, cfg.samples, cfg.seed)
    study = continuity_study(f, reg, scheme, x_samples=cfg.x_samples, seed=cfg.seed, exact=cfg.exact, omega=omega)
    rep.csv("continuity.csv", ["rho", "distance", "max_z_distance"], study.rows)
    rep.dat("continuity.dat", ("rho", "max_z_distance"), study.radii, study.values)
    summary = {**_region_summary(reg, f), **study.summary()}
    summary["passed"] = bool(study.values[0] == 0 or study.decay_ratio < 1e-2)
    rep.json("continuity.json", summary)
    return SuiteResult(summary["passed"], summary, [f"modulus ratio d=1e-4 / d=1: {study.decay_ratio:.4g}"])


SUITE_RUNNERS = {
    "law": suite_law,
    "metric": suite_metric,
    "lift": suite_lift,
    "ray-error": suite_ray_error,
    "decompose": suite_decompose,
    "constants": suite_constants,
    "pansu-rate": suite_pansu_rate,
    "pansu-trick": suite_pansu_trick,
    "bridge": suite_bridge,
    "continuity": suite_continuity,
}


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Run one suite; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    try:
        cfg.validate()
        rep = Reporter(cfg.out_path(), cfg.suite, cfg.timestamp)
        result = SUITE_RUNNERS[cfg.suite](cfg, rep)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for line in result.lines:
        print(line, file=stdout)
    print(f"{cfg.suite}: {'PASS' if result.passed else 'FAIL'}", file=stdout)
    return 0 if result.passed else 1


# -- argument parsing -------------------------------------------------------------


def _point(text: str) -> list:
    try:
        return [str(Fraction(v.strip())) if "/" in v else float(v) if any(c in v for c in ".eE") else int(v)
                for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from exc


def _common(p: argparse.ArgumentParser, seed=True):
    p.add_argument("--out", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./carnot-out)")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_false", help="omit timestamp headers")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _pansu_args(p):
    p.add_argument("--group", default="heisenberg(1)")
    p.add_argument("--map", required=True, help="JSON map spec file")
    p.add_argument("--A", dest="A", help="compact set A as 'lo:hi' or 'l1,..:h1,..'")
    p.add_argument("--Omega", dest="Omega", help="domain box")
    p.add_argument("--samples", type=int, default=2_000)
    p.add_argument("--x-samples", dest="x_samples", type=int, default=4)
    p.add_argument("--t-points", dest="t_points", type=int, default=20)
    p.add_argument("--decades", type=float, default=4.0)
    p.add_argument("--mode", choices=("exact", "float"), default="exact")
    _common(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnot", description="Carnot group calculus and Pansu derivative experiments")
    parser.add_argument("--version", action="version", version=f"carnot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    alg = sub.add_parser("algebra", help="validate or show a stratified algebra")
    alg_sub = alg.add_subparsers(dest="action", required=True)
    a_val = alg_sub.add_parser("validate")
    a_val.add_argument("source", help="algebra JSON file or catalog name")
    a_show = alg_sub.add_parser("show")
    a_show.add_argument("source")

    law = sub.add_parser("law", help="print the group law polynomial Q")
    law.add_argument("group")
    law.add_argument("--json", action="store_true", help="print machine-readable JSON")
    _common(law, seed=False)

    met = sub.add_parser("metric", help="norm calibration and metric estimates")
    met_sub = met.add_subparsers(dest="action", required=True)
    m_cal = met_sub.add_parser("calibrate")
    m_cal.add_argument("group")
    m_cal.add_argument("--samples", type=int, default=100_000)
    m_cal.add_argument("--seed", type=int, default=0)
    m_chk = met_sub.add_parser("check")
    m_chk.add_argument("group")
    m_chk.add_argument("--samples", type=int, default=20_000)
    _common(m_chk)

    lf = sub.add_parser("lift", help="lift a horizontal control")
    lf.add_argument("group")
    lf.add_argument("--control", help="control JSON file (default: polynomial test control)")
    lf.add_argument("--from", dest="point", type=_point, help="start point, comma separated")
    _common(lf, seed=False)

    ray = sub.add_parser("ray-error", help="distance between a curve and its horizontal ray")
    ray.add_argument("group")
    ray.add_argument("--curve", help="JSON with polynomial 'coords' (ascending) and optional 'T'")
    ray.add_argument("--control", help="control JSON; the curve is its lift")
    ray.add_argument("--from", dest="point", type=_point)
    ray.add_argument("--t-points", dest="t_points", type=int, default=20)
    ray.add_argument("--decades", type=float, default=3.0)
    _common(ray, seed=False)

    dec = sub.add_parser("decompose", help="factor a point into horizontal letters")
    dec.add_argument("group")
    dec.add_argument("--point", type=_point, required=True)
    dec.add_argument("--mode", choices=("exact", "float"), default="exact")
    _common(dec, seed=False)

    con = sub.add_parser("constants", help="k0, C0 and sup |xi| on the unit sphere")
    con.add_argument("group")
    con.add_argument("--samples", type=int, default=2_000)
    _common(con)

    pan = sub.add_parser("pansu", help="Pansu derivative experiments")
    pan_sub = pan.add_subparsers(dest="action", required=True)
    for name in ("rate", "trick", "bridge", "continuity"):
        _pansu_args(pan_sub.add_parser(name))

    rn = sub.add_parser("run", help="run a suite from a JSON config")
    rn.add_argument("--config", required=True)
    rn.add_argument("--out", dest="output_dir")
    rn.add_argument("--no-timestamp", dest="timestamp", action="store_false", default=None)
    return parser


def _print_json(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _config_from_args(args) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    suite = {"law": "law", "lift": "lift", "ray-error": "ray-error", "decompose": "decompose",
             "constants": "constants"}.get(args.command)
    if args.command == "metric":
        suite = "metric"
    if args.command == "pansu":
        suite = {"rate": "pansu-rate", "trick": "pansu-trick", "bridge": "bridge", "continuity": "continuity"}[args.action]
        if values.get("map") and not Path(values["map"]).is_file():
            raise ConfigError(f"map: file {values['map']} does not exist")
    if hasattr(args, "group") and args.group:
        values["group"] = args.group
    return ExperimentConfig(suite=suite, **{k: v for k, v in values.items() if k != "suite"})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "algebra":
            try:
                alg = resolve(args.source)
            except (UnknownAlgebra, AlgebraStructureError, FileNotFoundError, ValueError, KeyError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            if args.action == "show":
                _print_json(alg.to_json())
                return 0
            diag = validate(alg)
            print(diag)
            return 0 if diag.passed else 1
        if args.command == "law" and args.json:
            from .group import CarnotGroup

            try:
                alg = resolve(args.group)
            except (UnknownAlgebra, AlgebraStructureError, FileNotFoundError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            law = CarnotGroup.from_algebra(alg).law
            _print_json(law.to_json())
            return 0 if verify_group_law(law).passed else 1
        if args.command == "metric" and args.action == "calibrate":
            from .group import CarnotGroup

            try:
                group = CarnotGroup.from_algebra(resolve(args.group))
            except (UnknownAlgebra, AlgebraStructureError, FileNotFoundError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            norm = calibrate_norm(group, args.samples, args.seed)
            _print_json({"group": group.name, "mu": list(norm.mu), "certificate": norm.certificate})
            return 0
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            if args.output_dir:
                cfg.output_dir = args.output_dir
            if args.timestamp is not None:
                cfg.timestamp = args.timestamp
            return run(cfg)
        return run(_config_from_args(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
