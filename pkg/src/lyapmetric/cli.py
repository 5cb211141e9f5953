"""Command-line driver.

Four subcommands chain the library end to end:

* ``analyze``    decay/gain/linearized-decay estimates -> report + CSV
* ``metric``     build a metric variant, dump it, check its inequality
* ``certify``    distance-to-origin Lyapunov certificate on a grid
* ``stabilize``  controller synthesis, export, closed-loop certification

Exit status contract: 0 = pass, 2 = a claimed property was falsified or a
certificate failed, 1 = operational error.  Reports embed the resolved
configuration and are byte-identical across runs with the same config and
seed (no timestamps, sorted keys).

Every flag can be defaulted through an environment variable with the
``LYAPMETRIC_`` prefix (``--lambda-gain`` -> ``LYAPMETRIC_LAMBDA_GAIN``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, catalog, geometry
from .errors import FalsificationError, LyapmetricError
from .estimation import (
    estimate_gain_function,
    estimate_les,
    estimate_linearized_decay,
    estimate_transverse_decay,
)
from .expressions import parse_system
from .metric import (
    check_positive_definite,
    constant_metric,
    gramian_at_origin,
    metric_bounds,
    rescaled_metric_field,
    residual_report,
    solution_metric,
    transverse_metric_field,
)
from .stabilization import (
    export_closed_loop,
    synthesize_controller,
    tabulate_potential,
)
from .systems import ControlSystem, SystemModel, TransverseModel

_ENV_PREFIX = "LYAPMETRIC_"


@dataclass
class RunConfig:
    command: str
    system: str
    q: str = "I"
    tol: float = 1e-9
    horizon: float = 10.0
    radii: str = "0.5,1,2"
    samples: int = 4
    grid: str = ""
    variant: str = "along-solutions"
    lambda_gain: float = 1.0
    metric_matrix: str = "I"
    threads: int = 1
    out: str = "."
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0 or self.horizon <= 0:
            raise LyapmetricError("tolerances and horizons must be positive")
        if self.samples < 1 or self.threads < 1:
            raise LyapmetricError("samples and threads must be >= 1")

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(data):
        return RunConfig(**data)

    # -- parsed views --------------------------------------------------------

    def radii_values(self):
        return np.sort(np.array([float(v) for v in self.radii.split(",")]))

    def grid_points(self, dim):
        text = self.grid.strip()
        if not text:
            radii = self.radii_values()
            if dim == 1:
                pts = sorted(set([-r for r in radii] + list(radii)))
                return np.array(pts).reshape(-1, 1)
            from . import sampling
            return np.vstack([
                sampling.sphere_points(dim, r, 4, self.seed) for r in radii])
        if ";" in text:
            rows = [[float(v) for v in row.split(",")]
                    for row in text.split(";") if row.strip()]
            return np.array(rows)
        if ":" in text:
            lo, hi, count = text.split(":")
            return np.linspace(float(lo), float(hi),
                               int(count)).reshape(-1, 1)
        return np.array([[float(v)] for v in text.split(",")])

    def q_matrix(self, dim):
        return _parse_matrix(self.q, dim)

    def p_matrix(self, dim):
        return _parse_matrix(self.metric_matrix, dim)


def _parse_matrix(text, dim):
    text = text.strip()
    if text in ("I", "", "identity"):
        return np.eye(dim)
    if ";" in text:
        rows = [[float(v) for v in row.split(",")]
                for row in text.split(";") if row.strip()]
        return check_positive_definite(np.array(rows))
    values = [float(v) for v in text.split(",")]
    if len(values) == 1:
        return values[0] * np.eye(dim)
    if len(values) == dim * dim:
        return check_positive_definite(np.array(values).reshape(dim, dim))
    raise LyapmetricError(f"cannot parse a {dim}x{dim} matrix from '{text}'")


def _resolve_system(spec):
    """Catalog name, 'linear:<file.json>', or a path to a system text."""
    if spec in catalog.entries():
        return catalog.get(spec).build()
    if spec.startswith("linear:"):
        payload = json.loads(Path(spec[len("linear:"):]).read_text())
        model = SystemModel.from_linear(np.array(payload["A"], dtype=float))
        return model
    path = Path(spec)
    if path.exists():
        return parse_system(path.read_text())
    raise LyapmetricError(
        f"unknown system '{spec}': not a catalog name, linear:<file>, or "
        "readable file")


def _parallel_map(fn, items, threads):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_report(config, payload, verdict):
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": 1,
        "tool": {"name": "lyapmetric", "version": __version__},
        "command": config.command,
        "config": config.to_dict(),
        "verdict": verdict,
        **payload,
    }
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    (out_dir / "report.json").write_text(text, encoding="utf-8")
    return report


def _write_csv(config, name, header, rows):
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(config):
    model = _resolve_system(config.system)
    if isinstance(model, TransverseModel):
        raise LyapmetricError(
            "analyze expects an equilibrium system; use "
            "'certify --variant transverse' for two-block models")
    if isinstance(model, ControlSystem):
        model = model.drift
    radii = config.radii_values()

    try:
        les = estimate_les(model, float(radii[0]), n_samples=config.samples,
                           horizon=config.horizon, tol=config.tol,
                           seed=config.seed)
        gain = estimate_gain_function(
            model, radii, n_samples=config.samples, horizon=config.horizon,
            les=les, tol=config.tol, seed=config.seed)
        lin = estimate_linearized_decay(
            model, radii, n_samples=config.samples, horizon=config.horizon,
            tol=config.tol, seed=config.seed)
    except FalsificationError as exc:
        _write_report(config, {"witness": exc.witness,
                               "reason": str(exc)}, "falsified")
        return 2

    payload = {
        "local": les.to_report(),
        "gain": gain.to_report(),
        "linearized": lin.to_report(),
    }
    _write_csv(config, "envelopes.csv", ["s", "k", "k_tilde"],
               [(s, gain.gain(s), lin.gain(s)) for s in radii])
    _write_report(config, payload, "pass")
    return 0


def _build_metric(config, model, ode_tol=1e-12):
    variant = config.variant
    if isinstance(model, TransverseModel) and variant != "transverse":
        raise LyapmetricError(
            "two-block systems are served by --variant transverse")
    if variant == "transverse":
        if not isinstance(model, TransverseModel):
            raise LyapmetricError("--variant transverse needs a two-block "
                                  "system (e_dim/G declarations)")
        q = config.q_matrix(model.n_e)
        radius = float(config.radii_values()[-1])
        decay = estimate_transverse_decay(
            model, (-radius * np.ones(model.n_x), radius * np.ones(model.n_x)),
            n_samples=config.samples, horizon=config.horizon,
            tol=config.tol, seed=config.seed)
        return transverse_metric_field(model, q, decay, ode_tol=ode_tol), decay
    q = config.q_matrix(model.dim)
    if variant == "origin":
        return gramian_at_origin(model, q), None
    if variant == "rescaled":
        return rescaled_metric_field(model, q, ode_tol=ode_tol), None
    if variant == "along-solutions":
        decay = estimate_linearized_decay(
            model, config.radii_values(), n_samples=config.samples,
            horizon=config.horizon, tol=config.tol, seed=config.seed)
        return solution_metric(model, q, decay, ode_tol=ode_tol), decay
    raise LyapmetricError(f"unknown metric variant '{variant}'")


def cmd_metric(config):
    model = _resolve_system(config.system)
    try:
        field, _ = _build_metric(config, model)
    except FalsificationError as exc:
        _write_report(config, {"witness": exc.witness,
                               "reason": str(exc)}, "falsified")
        return 2

    if config.variant == "transverse":
        grid = config.grid_points(model.n_x)
        flow_model = model.drift_field()
        congruence = lambda x: model.df_de(np.zeros(model.n_e), x)  # noqa: E731
        report = residual_report(field, flow_model, grid,
                                 congruence_jac=congruence)
    else:
        grid = config.grid_points(model.dim)
        report = residual_report(field, model, grid)
    bounds = metric_bounds(field, config.radii_values(),
                           n_samples=config.samples, seed=config.seed)

    rows = [np.concatenate([p, field(p).ravel()]) for p in grid]
    n, k = field.point_dim, field.dim
    _write_csv(config, "metric.csv",
               [f"e_{i + 1}" for i in range(n)]
               + [f"P_{i + 1}{j + 1}" for i in range(k) for j in range(k)],
               rows)
    payload = {"residuals": report.to_dict(), "bounds": bounds.to_dict()}
    _write_report(config, payload, report.verdict)
    return 0 if report.verdict == "pass" else 2


def _certify_with_metric(config, model, field):
    """Distance-based decrease certificate on the configured grid."""
    radii = config.radii_values()
    grid = config.grid_points(field.point_dim)
    max_radius = max(float(np.max(np.linalg.norm(grid, axis=1))),
                     float(radii[-1]))
    bound_radii = np.unique(np.concatenate([radii, [max_radius]]))

    geo_field = field
    if field.point_dim == 1 and not field.interpolated \
            and field.variant not in ("constant",):
        span = max_radius + 0.5
        geo_field = field.tabulate(-span, span,
                                   n_points=max(161, int(40 * span)))
    metric_bounds(geo_field, bound_radii, n_samples=config.samples,
                  seed=config.seed)
    field.bounds = geo_field.bounds

    def evaluate(point):
        v = geometry.distance_to_origin(geo_field, point)
        if v.flagged:
            return {"point": [float(x) for x in point], "V": v.value,
                    "flagged": True, "ok": None}
        if float(np.linalg.norm(point)) == 0.0:
            return {"point": [float(x) for x in point], "V": 0.0,
                    "flagged": False, "dini": 0.0, "bound": 0.0, "ok": True}
        dini = geometry.dini_derivative_V(geo_field, model, point)
        bound = geometry.dini_decrease_bound(
            geo_field, dini.v_at_point, float(np.linalg.norm(point)))
        ok = bool(dini.value <= bound + 1e-3)
        return {"point": [float(x) for x in point], "V": dini.v_at_point,
                "flagged": dini.flagged, "dini": dini.value,
                "bound": bound, "ok": ok if not dini.flagged else None}

    rows = _parallel_map(evaluate, list(grid), config.threads)
    flagged = sum(1 for r in rows if r["flagged"])
    failures = [r for r in rows if r.get("ok") is False]
    payload = {
        "points": rows,
        "flagged_fraction": flagged / len(rows) if rows else 0.0,
        "decrease_tolerance": 1e-3,
        "bounds": field.bounds.to_dict(),
    }
    verdict = "pass" if not failures else "fail"
    n = field.point_dim
    _write_csv(config, "certificate.csv",
               [f"e_{i + 1}" for i in range(n)] + ["V", "dini", "bound"],
               [(*r["point"], r["V"], r.get("dini", math.nan),
                 r.get("bound", math.nan)) for r in rows])
    return payload, verdict


def cmd_certify(config):
    model = _resolve_system(config.system)

    if config.variant == "transverse":
        if not isinstance(model, TransverseModel):
            raise LyapmetricError("--variant transverse needs a two-block "
                                  "system")
        # the lifted full system must contract in its e-rows first
        try:
            estimate_linearized_decay(
                model.as_full_system(), config.radii_values(),
                n_samples=config.samples, horizon=config.horizon,
                tol=config.tol, seed=config.seed, row_block=model.n_e)
        except FalsificationError as exc:
            _write_report(config, {"witness": exc.witness,
                                   "reason": str(exc),
                                   "stage": "linearized-decay"}, "falsified")
            return 2
        try:
            field, _ = _build_metric(config, model)
        except FalsificationError as exc:
            _write_report(config, {"witness": exc.witness,
                                   "reason": str(exc)}, "falsified")
            return 2
        grid = config.grid_points(model.n_x)
        flow_model = model.drift_field()
        congruence = lambda x: model.df_de(np.zeros(model.n_e), x)  # noqa: E731
        report = residual_report(field, flow_model, grid,
                                 congruence_jac=congruence)
        bounds = metric_bounds(field, config.radii_values(),
                               n_samples=config.samples, seed=config.seed)
        payload = {"residuals": report.to_dict(), "bounds": bounds.to_dict()}
        verdict = report.verdict
        _write_report(config, payload, verdict)
        return 0 if verdict == "pass" else 2

    if isinstance(model, ControlSystem):
        raise LyapmetricError("certify a controlled system through "
                              "'stabilize', which closes the loop first")

    try:
        field, _ = _build_metric(config, model, ode_tol=1e-10)
    except FalsificationError as exc:
        _write_report(config, {"witness": exc.witness,
                               "reason": str(exc)}, "falsified")
        return 2
    payload, verdict = _certify_with_metric(config, model, field)
    _write_report(config, payload, verdict)
    return 0 if verdict == "pass" else 2


def cmd_stabilize(config):
    model = _resolve_system(config.system)
    if not isinstance(model, ControlSystem):
        raise LyapmetricError("stabilize needs a system text with an input "
                              "field (g1..gn)")
    n = model.dim
    p_const = config.p_matrix(n)
    field = constant_metric(p_const, q=config.q_matrix(n))
    grid = config.grid_points(n)
    q = config.q_matrix(n)

    try:
        closed_loop, potential, certificate = synthesize_controller(
            model, field, gain=config.lambda_gain, q=q, sample_points=grid)
    except FalsificationError as exc:
        _write_report(config, {"reason": str(exc)}, "falsified")
        return 2

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = export_closed_loop(model, field, config.lambda_gain)
    export = {}
    if text is not None:
        (out_dir / "closed_loop.txt").write_text(text, encoding="utf-8")
        export = {"closed_loop_spec": "closed_loop.txt"}
        closed_loop = parse_system(text)
    else:
        radius = float(np.max(np.abs(grid)))
        grid_u, values, meta = tabulate_potential(
            potential, [-radius], [radius])
        _write_csv(config, "potential.csv", ["w", "U"],
                   list(zip(grid_u, values)))
        export = {"potential_table": "potential.csv",
                  "potential_meta": meta}

    certify_payload, certify_verdict = _certify_with_metric(
        config, closed_loop, field)
    verdict = "pass" if certificate.verdict == "pass" \
        and certify_verdict == "pass" else "fail"
    payload = {"controller": certificate.to_dict(),
               "closed_loop_certificate": certify_payload, **export}
    _write_report(config, payload, verdict)
    return 0 if verdict == "pass" else 2


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _env_default(flag, fallback, cast):
    raw = os.environ.get(_ENV_PREFIX + flag.upper().replace("-", "_"))
    if raw is None:
        return fallback
    return cast(raw)


def _add_common(parser):
    parser.add_argument("--system", required=True,
                        help="catalog name, linear:<file.json>, or a system "
                             "text file")
    parser.add_argument("--Q", dest="q",
                        default=_env_default("q", "I", str),
                        help="scalar, 'I', or 'a,b;c,d' matrix rows")
    parser.add_argument("--tol", type=float,
                        default=_env_default("tol", 1e-9, float))
    parser.add_argument("--horizon", type=float,
                        default=_env_default("horizon", 10.0, float))
    parser.add_argument("--radii",
                        default=_env_default("radii", "0.5,1,2", str))
    parser.add_argument("--samples", type=int,
                        default=_env_default("samples", 4, int))
    parser.add_argument("--grid",
                        default=_env_default("grid", "", str),
                        help="comma list of points, 'lo:hi:n', or "
                             "semicolon-separated vectors")
    parser.add_argument("--variant",
                        default=_env_default("variant", "along-solutions", str),
                        choices=["origin", "along-solutions", "transverse",
                                 "rescaled"])
    parser.add_argument("--lambda-gain", dest="lambda_gain", type=float,
                        default=_env_default("lambda_gain", 1.0, float))
    parser.add_argument("--metric", dest="metric_matrix",
                        default=_env_default("metric", "I", str),
                        help="constant metric for 'stabilize'")
    parser.add_argument("--threads", type=int,
                        default=_env_default("threads", 1, int))
    parser.add_argument("--out",
                        default=_env_default("out", ".", str))
    parser.add_argument("--seed", type=int,
                        default=_env_default("seed", 0, int))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lyapmetric",
        description="metric-based Lyapunov certificates for ODE systems")
    parser.add_argument("--version", action="version",
                        version=f"lyapmetric {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, _fn in _COMMANDS.items():
        p = sub.add_parser(name)
        _add_common(p)
    return parser


def config_from_args(args):
    return RunConfig(
        command=args.command, system=args.system, q=args.q, tol=args.tol,
        horizon=args.horizon, radii=args.radii, samples=args.samples,
        grid=args.grid, variant=args.variant, lambda_gain=args.lambda_gain,
        metric_matrix=args.metric_matrix, threads=args.threads, out=args.out,
        seed=args.seed)


_COMMANDS = {
    "analyze": cmd_analyze,
    "metric": cmd_metric,
    "certify": cmd_certify,
    "stabilize": cmd_stabilize,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        return _COMMANDS[args.command](config)
    except FalsificationError as exc:
        print(f"falsified: {exc}", file=sys.stderr)
        return 2
    except LyapmetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
