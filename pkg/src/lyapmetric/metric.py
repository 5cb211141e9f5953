"""Metric matrix functions built from transition-matrix quadrature.

Four constructions share one augmented-integration core:

* constant Gramian at the origin        integral of exp(A's) Q exp(As)
* metric along solutions  P(e)          integral of Phi(e,s)' Q Phi(e,s)
* transverse metric       P(x)          same, with the transverse transition
* rescaled metric         P~(e)         transition of the slowed field
                                        F / (1 + |dF/de|^3), which admits a
                                        state-independent lower bound

plus the residual machinery that checks the matrix inequality
L_F P(e) <= -Q by flow-aligned differencing of P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import integrate
from .dynamics import flow
from .errors import (
    DerivativeUnreliableError,
    GeodesicDomainError,
    LyapmetricError,
    TailHorizonError,
)

_SYMMETRY_TOL = 1e-10


def check_positive_definite(q):
    q = np.asarray(q, dtype=float)
    try:
        np.linalg.cholesky(q)
    except np.linalg.LinAlgError:
        raise LyapmetricError("Q must be symmetric positive definite") from None
    return 0.5 * (q + q.T)


def _symmetrize(raw):
    drift = float(np.max(np.abs(raw - raw.T)))
    if drift > _SYMMETRY_TOL:
        raise LyapmetricError(
            f"metric evaluation lost symmetry (|P - P'| = {drift:.3g})")
    return 0.5 * (raw + raw.T)


class MetricField:
    """Evaluator point -> symmetric positive definite matrix, with the decay
    data, truncation rule and eigenvalue envelopes attached.

    `dim` is the matrix size; `point_dim` the dimension of evaluation points
    (these differ for the transverse variant, where P lives over the drift
    state).
    """

    def __init__(self, dim, q, variant, evaluator, point_dim=None, model=None,
                 decay=None, tail_tol=None, domain=None, horizon_rule=None,
                 interpolated=False, meta=None):
        self.dim = dim
        self.point_dim = dim if point_dim is None else point_dim
        self.q = np.asarray(q, dtype=float)
        self.variant = variant
        self.model = model
        self.decay = decay
        self.tail_tol = tail_tol
        self.domain = domain
        self.interpolated = interpolated
        self.meta = dict(meta or {})
        self.bounds = None
        self._evaluator = evaluator
        self._horizon_rule = horizon_rule
        self._cache = {}

    # -- evaluation ----------------------------------------------------------

    def __call__(self, point, horizon=None):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.size != self.point_dim:
            raise LyapmetricError(
                f"point has size {point.size}, expected {self.point_dim}")
        if self.domain is not None:
            lo, hi = self.domain
            if np.any(point < lo) or np.any(point > hi):
                raise GeodesicDomainError(
                    f"point {point} outside certified domain [{lo}, {hi}]")
        key = (point.tobytes(), horizon)
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        raw = self._evaluator(point) if horizon is None else \
            self._evaluator(point, horizon=horizon)
        value = _symmetrize(np.asarray(raw, dtype=float))
        if len(self._cache) < 4096:
            self._cache[key] = value.copy()
        return value

    def horizon_for(self, point):
        if self._horizon_rule is None:
            return None
        return self._horizon_rule(np.atleast_1d(np.asarray(point, dtype=float)))

    # -- envelopes -----------------------------------------------------------

    def p_lower(self, s):
        if self.bounds is None:
            raise LyapmetricError("run metric_bounds first")
        return self.bounds.lower_at(s)

    def p_upper(self, s):
        if self.bounds is None:
            raise LyapmetricError("run metric_bounds first")
        return self.bounds.upper_at(s)

    # -- derived fields ------------------------------------------------------

    def tabulate(self, lo, hi, n_points=201):
        """Sample the evaluator on a grid and wrap a smooth interpolant.

        Makes the many repeated evaluations inside geodesic work affordable
        for quadrature-defined metrics.  One spatial dimension only; higher
        dimensional work uses the exact evaluator.
        """
        if self.point_dim != 1:
            raise LyapmetricError("tabulation is implemented for 1-D points")
        from scipy.interpolate import CubicSpline

        grid = np.linspace(float(lo), float(hi), int(n_points))
        values = np.array([self(np.array([g]))[0, 0] for g in grid])
        spline = CubicSpline(grid, values)

        def evaluator(point, _spline=spline):
            return np.array([[float(_spline(float(point[0])))]])

        out = MetricField(
            dim=self.dim, q=self.q, variant=self.variant, evaluator=evaluator,
            point_dim=1, model=self.model, decay=self.decay,
            tail_tol=self.tail_tol, domain=(np.array([lo]), np.array([hi])),
            interpolated=True,
            meta={**self.meta, "tabulated_points": int(n_points)})
        out.bounds = self.bounds
        return out

    def to_csv(self, points, path):
        """Rows `e_1..e_n, P_11..P_nn` over the given evaluation points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n, k = self.point_dim, self.dim
        header = [f"e_{i + 1}" for i in range(n)] + \
            [f"P_{i + 1}{j + 1}" for i in range(k) for j in range(k)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for p in points:
                row = np.concatenate([p, self(p).ravel()])
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def constant_metric(p, q=None):
    """Wrap a fixed symmetric positive definite matrix as a MetricField."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    p = check_positive_definite(p)
    q = np.eye(p.shape[0]) if q is None else check_positive_definite(q)
    return MetricField(dim=p.shape[0], q=q, variant="constant",
                       evaluator=lambda point, _p=p: _p.copy())


def from_callable(fn, dim, q=None, variant="custom", point_dim=None):
    q = np.eye(dim) if q is None else check_positive_definite(q)
    return MetricField(dim=dim, q=q, variant=variant,
                       evaluator=lambda point, _fn=fn: np.atleast_2d(_fn(point)),
                       point_dim=point_dim)


# ---------------------------------------------------------------------------
# constant Gramian at the origin
# ---------------------------------------------------------------------------

def gramian_at_origin(model, q=None, ode_tol=1e-12):
    """Constant metric solving A'P + PA = -Q for A the Jacobian at zero.

    Quadrature over a horizon set by the spectral abscissa, then polished by
    interval doubling (M <- M + Z'MZ, Z <- Z^2) until the tail is below
    rounding; the algebraic residual is verified to 1e-8.
    """
    a = np.asarray(model.jac(np.zeros(model.dim)), dtype=float)
    n = a.shape[0]
    q = np.eye(n) if q is None else check_positive_definite(q)
    eigs = np.linalg.eigvals(a)
    abscissa = float(np.max(eigs.real))
    if abscissa >= 0.0:
        raise LyapmetricError(
            "origin not exponentially stable at first order "
            f"(spectral abscissa {abscissa:.3g})")

    t0 = 2.0 / abs(abscissa)

    def rhs(t, y):
        x = y[: n * n].reshape(n, n)
        out = np.empty(2 * n * n)
        out[: n * n] = (a @ x).ravel()
        out[n * n:] = (x.T @ q @ x).ravel()
        return out

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    sol = integrate.solve(rhs, y0, t0, rtol=ode_tol)
    z = sol.y[-1, : n * n].reshape(n, n)
    m = sol.y[-1, n * n:].reshape(n, n)

    for _ in range(64):
        update = z.T @ m @ z
        m = m + update
        z = z @ z
        if np.max(np.abs(update)) <= 1e-16 * max(1.0, float(np.max(np.abs(m)))):
            break
    p = 0.5 * (m + m.T)

    residual = float(np.linalg.norm(a.T @ p + p @ a + q, 2))
    if residual > 1e-8:
        raise LyapmetricError(
            f"Gramian polish failed: algebraic residual {residual:.3g} > 1e-8")
    out = constant_metric(p, q)
    out.meta.update({"residual": residual, "quadrature_horizon": t0})
    out.model = model
    return out


# ---------------------------------------------------------------------------
# metric along solutions
# ---------------------------------------------------------------------------

def _truncation_horizon(gain, rate, q_max, tail_tol, horizon_cap):
    target = gain * gain * q_max / (2.0 * rate * tail_tol)
    horizon = math.log(max(target, 1.0)) / (2.0 * rate)
    horizon = max(horizon, 1.0)
    if horizon > horizon_cap:
        raise TailHorizonError(
            f"decay data insufficient: tail bound needs horizon {horizon:.1f} "
            f"> cap {horizon_cap:.1f}")
    return horizon


def solution_metric(model, q=None, decay=None, tail_tol=1e-7, ode_tol=1e-12,
                    horizon_cap=200.0):
    """Evaluator e -> P(e) = integral over [0, T(e)] of Phi' Q Phi.

    T(e) comes from the analytic tail bound
    gain(|e|)^2 mu_max(Q) exp(-2 rate T) / (2 rate) <= tail_tol,
    so the truncation error is certified by the decay estimate.
    """
    if decay is None:
        raise LyapmetricError("solution metric needs linearized decay data")
    n = model.dim
    q = np.eye(n) if q is None else check_positive_definite(q)
    q_max = float(np.max(np.linalg.eigvalsh(q)))
    f, jac = model.f, model.jac

    def horizon_rule(point):
        gain = decay.gain(float(np.linalg.norm(point)))
        return _truncation_horizon(gain, decay.rate, q_max, tail_tol,
                                   horizon_cap)

    def rhs(t, y):
        e = y[:n]
        phi = y[n: n + n * n].reshape(n, n)
        out = np.empty(n + 2 * n * n)
        out[:n] = f(e)
        out[n: n + n * n] = (jac(e) @ phi).ravel()
        out[n + n * n:] = (phi.T @ q @ phi).ravel()
        return out

    def evaluator(point, horizon=None):
        t_end = horizon_rule(point) if horizon is None else float(horizon)
        y0 = np.concatenate([point, np.eye(n).ravel(), np.zeros(n * n)])
        sol = integrate.solve(rhs, y0, t_end, rtol=ode_tol,
                              max_steps=500_000)
        return sol.y[-1, n + n * n:].reshape(n, n)

    return MetricField(dim=n, q=q, variant="along-solutions",
                       evaluator=evaluator, model=model, decay=decay,
                       tail_tol=tail_tol, horizon_rule=horizon_rule,
                       meta={"ode_tol": ode_tol})


def metric_along_solutions(model, e, q=None, decay=None, tail_tol=1e-7,
                           ode_tol=1e-12):
    """P(e) value (single evaluation of :func:`solution_metric`)."""
    return solution_metric(model, q, decay, tail_tol, ode_tol)(e)


# ---------------------------------------------------------------------------
# transverse metric
# ---------------------------------------------------------------------------

def transverse_metric_field(model, q=None, decay=None, tail_tol=1e-7,
                            ode_tol=1e-12, horizon_cap=200.0):
    """Evaluator x -> P(x) for the transversally linear dynamics.

    The transition solves Phi' = dF/de(0, Xd) Phi along the drift
    Xd' = G(0, Xd); `decay` must be a uniform (constant-gain) envelope for
    that transition.
    """
    if decay is None:
        raise LyapmetricError("transverse metric needs decay data")
    n_e, n_x = model.n_e, model.n_x
    q = np.eye(n_e) if q is None else check_positive_definite(q)
    q_max = float(np.max(np.linalg.eigvalsh(q)))
    full_f, full_jac = model.full.f, model.full.jac
    zeros_e = np.zeros(n_e)

    def horizon_rule(point):
        gain = decay.gain(float(np.linalg.norm(point)))
        return _truncation_horizon(gain, decay.rate, q_max, tail_tol,
                                   horizon_cap)

    def rhs(t, y):
        xd = y[:n_x]
        phi = y[n_x: n_x + n_e * n_e].reshape(n_e, n_e)
        on_manifold = np.concatenate([zeros_e, xd])
        out = np.empty(n_x + 2 * n_e * n_e)
        out[:n_x] = full_f(on_manifold)[n_e:]
        a = full_jac(on_manifold)[:n_e, :n_e]
        out[n_x: n_x + n_e * n_e] = (a @ phi).ravel()
        out[n_x + n_e * n_e:] = (phi.T @ q @ phi).ravel()
        return out

    def evaluator(point, horizon=None):
        t_end = horizon_rule(point) if horizon is None else float(horizon)
        y0 = np.concatenate([point, np.eye(n_e).ravel(), np.zeros(n_e * n_e)])
        sol = integrate.solve(rhs, y0, t_end, rtol=ode_tol,
                              blowup_norm=1e12, max_steps=500_000)
        return sol.y[-1, n_x + n_e * n_e:].reshape(n_e, n_e)

    return MetricField(dim=n_e, q=q, variant="transverse",
                       evaluator=evaluator, point_dim=n_x, model=model,
                       decay=decay, tail_tol=tail_tol,
                       horizon_rule=horizon_rule, meta={"ode_tol": ode_tol})


def transverse_metric(model, x, q=None, decay=None, tail_tol=1e-7,
                      ode_tol=1e-12):
    """P(x) value (single evaluation of :func:`transverse_metric_field`)."""
    return transverse_metric_field(model, q, decay, tail_tol, ode_tol)(x)


# ---------------------------------------------------------------------------
# rescaled metric (state-independent lower bound)
# ---------------------------------------------------------------------------

def rescaled_metric_field(model, q=None, tail_tol=1e-7, ode_tol=1e-12,
                          chunk=6.0, max_chunks=40):
    """Evaluator e -> P~(e) built on the slowed field F / (1 + |dF/de|^3).

    The slowed transition obeys |d/dt log Phi~| <= 1, which forces
    min eig P~ >= mu_min(Q) / 2 independently of e.  The horizon grows in
    chunks until the fitted tail of |Phi~| certifies the truncation; the
    horizon rule replays that adaptive choice so that residual stencils can
    pin one common truncation (the chunk quantization would otherwise leak
    tail-sized jumps into flow differences).
    """
    n = model.dim
    q = np.eye(n) if q is None else check_positive_definite(q)
    q_max = float(np.max(np.linalg.eigvalsh(q)))
    f, jac = model.f, model.jac

    def rhs(t, y):
        e = y[:n]
        phi = y[n: n + n * n].reshape(n, n)
        j = jac(e)
        scale = 1.0 + float(np.linalg.norm(j, 2)) ** 3
        out = np.empty(n + 2 * n * n)
        out[:n] = f(e) / scale
        out[n: n + n * n] = ((j / scale) @ phi).ravel()
        out[n + n * n:] = (phi.T @ q @ phi).ravel()
        return out

    def run(point, horizon):
        y0 = np.concatenate([point, np.eye(n).ravel(), np.zeros(n * n)])
        t_done = 0.0
        prev_norm = None
        for _ in range(max_chunks):
            t_target = float(horizon) if horizon is not None \
                else t_done + chunk
            sol = integrate.solve(rhs, y0, t_target - t_done, rtol=ode_tol,
                                  max_steps=500_000)
            y0 = sol.y[-1]
            t_done = t_target
            if horizon is not None:
                break
            phi_norm = float(np.linalg.norm(
                y0[n: n + n * n].reshape(n, n), 2))
            if prev_norm is not None and 0.0 < phi_norm < prev_norm:
                rate = math.log(prev_norm / phi_norm) / chunk
                tail = phi_norm ** 2 * q_max / (2.0 * rate)
                if tail <= tail_tol:
                    break
            prev_norm = phi_norm
        else:
            raise TailHorizonError(
                "decay data insufficient: slowed transition tail did not "
                f"certify within {max_chunks} chunks")
        return y0, t_done

    def evaluator(point, horizon=None):
        y_final, _ = run(point, horizon)
        return y_final[n + n * n:].reshape(n, n)

    def horizon_rule(point):
        _, t_done = run(point, None)
        return t_done

    return MetricField(dim=n, q=q, variant="rescaled", evaluator=evaluator,
                       model=model, tail_tol=tail_tol,
                       horizon_rule=horizon_rule,
                       meta={"ode_tol": ode_tol, "chunk": chunk})


def rescaled_metric(model, e, q=None, tail_tol=1e-7, ode_tol=1e-12):
    """P~(e) value (single evaluation of :func:`rescaled_metric_field`)."""
    return rescaled_metric_field(model, q, tail_tol, ode_tol)(e)


# ---------------------------------------------------------------------------
# Lie-derivative residuals
# ---------------------------------------------------------------------------

@dataclass
class ResidualEntry:
    point: np.ndarray
    residual: np.ndarray
    max_eigenvalue: float
    h: float
    disagreement: float

    def to_dict(self):
        return {"point": [float(v) for v in self.point],
                "max_eigenvalue": self.max_eigenvalue,
                "h": self.h,
                "richardson_disagreement": self.disagreement}


@dataclass
class ResidualReport:
    entries: list
    tolerance: float
    variant: str

    @property
    def max_eigenvalue(self):
        return max(e.max_eigenvalue for e in self.entries)

    @property
    def verdict(self):
        return "pass" if all(e.max_eigenvalue <= self.tolerance
                             for e in self.entries) else "fail"

    def to_dict(self):
        return {"variant": self.variant,
                "tolerance": self.tolerance,
                "verdict": self.verdict,
                "max_eigenvalue": self.max_eigenvalue,
                "entries": [e.to_dict() for e in self.entries]}


def lie_derivative_residual(metric, model, e, h=None, flow_tol=1e-12,
                            gate_tol=1e-4, congruence_jac=None):
    """One residual entry R(e) = d_F P(e) + P J + J' P + Q_eff.

    d_F P comes from one-sided flow differences at steps h and h/2 with
    Richardson extrapolation; the two extrapolation inputs gate reliability.
    For the rescaled variant Q_eff = Q (1 + |dF/de(e)|^3), matching the
    inequality that construction satisfies; otherwise Q_eff = Q.

    `congruence_jac` overrides the matrix J entering the congruence terms;
    the transverse inequality flows P along the drift but congruences with
    dF/de(0, x).
    """
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if h is None:
        base = metric.tail_tol if metric.tail_tol else 1e-8
        h = max(1e-4, math.sqrt(base))
    horizon = metric.horizon_for(e)

    traj = flow(model, e, h, tol=flow_tol, dense=True)
    e_h = traj.states[-1]
    e_h2 = traj.state_at(0.5 * h)

    p0 = metric(e, horizon=horizon) if horizon is not None else metric(e)
    p_h = metric(e_h, horizon=horizon) if horizon is not None else metric(e_h)
    p_h2 = metric(e_h2, horizon=horizon) if horizon is not None \
        else metric(e_h2)

    d1 = (p_h - p0) / h
    d2 = (p_h2 - p0) / (0.5 * h)
    d_flow = 2.0 * d2 - d1
    disagreement = float(np.linalg.norm(d2 - d1, 2))
    if disagreement > 10.0 * gate_tol:
        raise DerivativeUnreliableError(
            f"derivative step unreliable at e = {e}: Richardson inputs "
            f"differ by {disagreement:.3g}")

    j = model.jac(e) if congruence_jac is None else congruence_jac(e)
    q_eff = metric.q
    if metric.variant == "rescaled":
        q_eff = metric.q * (1.0 + float(np.linalg.norm(model.jac(e), 2)) ** 3)
    residual = d_flow + p0 @ j + j.T @ p0 + q_eff
    residual = 0.5 * (residual + residual.T)
    max_eig = float(np.max(np.linalg.eigvalsh(residual)))
    return ResidualEntry(point=e, residual=residual, max_eigenvalue=max_eig,
                         h=h, disagreement=disagreement)


def residual_report(metric, model, points, tolerance=1e-4, h=None,
                    flow_tol=1e-12, congruence_jac=None):
    entries = [lie_derivative_residual(metric, model, p, h=h,
                                       flow_tol=flow_tol,
                                       gate_tol=tolerance,
                                       congruence_jac=congruence_jac)
               for p in np.atleast_2d(np.asarray(points, dtype=float))]
    return ResidualReport(entries=entries, tolerance=tolerance,
                          variant=metric.variant)


# ---------------------------------------------------------------------------
# eigenvalue envelopes
# ---------------------------------------------------------------------------

@dataclass
class MetricBounds:
    radii: np.ndarray
    empirical_lower: np.ndarray
    empirical_upper: np.ndarray
    analytic_lower: Optional[np.ndarray] = None
    analytic_upper: Optional[np.ndarray] = None
    completeness: str = "unknown"
    samples: dict = field(default_factory=dict)

    def lower_at(self, s):
        s = abs(float(s))
        r, v = self.radii, self.empirical_lower
        if s <= r[0]:
            return float(v[0])
        if s >= r[-1]:
            return float(v[-1])
        return float(np.interp(s, r, v))

    def upper_at(self, s):
        s = abs(float(s))
        r, v = self.radii, self.empirical_upper
        if s <= r[0]:
            return float(v[0])
        if s >= r[-1]:
            return float(v[-1])
        return float(np.interp(s, r, v))

    def to_dict(self):
        out = {"radii": [float(v) for v in self.radii],
               "empirical_lower": [float(v) for v in self.empirical_lower],
               "empirical_upper": [float(v) for v in self.empirical_upper],
               "completeness": self.completeness,
               "samples": self.samples}
        if self.analytic_lower is not None:
            out["analytic_lower"] = [float(v) for v in self.analytic_lower]
        if self.analytic_upper is not None:
            out["analytic_upper"] = [float(v) for v in self.analytic_upper]
        return out


def metric_bounds(metric, radii, n_samples=8, seed=0, gain=None,
                  jac_majorant=None):
    """Empirical eigenvalue envelopes over sphere samples per radius, plus
    the analytic formulas when the inputs are available:

    upper(s) = gain_lin(s)^2 mu_max(Q) / (2 rate)
    lower(s) = mu_min(Q) / (2 c(gain(s) * s))

    Empirical must lie inside analytic; a violation is a construction bug
    and raises.  The completeness indicator reports whether lower(r) * r^2
    grows along the grid.  The result is attached to the metric.
    """
    from . import sampling

    radii = np.sort(np.asarray(radii, dtype=float))
    q_min = float(np.min(np.linalg.eigvalsh(metric.q)))
    q_max = float(np.max(np.linalg.eigvalsh(metric.q)))

    # ball envelopes, so the center value seeds both accumulations
    origin_eigs = np.linalg.eigvalsh(metric(np.zeros(metric.point_dim)))
    per_lo, per_hi = [], []
    for j, s in enumerate(radii):
        pts = sampling.sphere_points(metric.point_dim, s, n_samples,
                                     seed + 41 * j)
        pts = np.vstack([pts, sampling.ball_points(
            metric.point_dim, s, max(2, n_samples // 2), seed + 41 * j + 7)])
        pts = np.unique(pts, axis=0)
        eigs = [np.linalg.eigvalsh(metric(p)) for p in pts]
        per_lo.append(min(float(e[0]) for e in eigs))
        per_hi.append(max(float(e[-1]) for e in eigs))
    emp_lower = np.minimum.accumulate(
        np.minimum(np.array(per_lo), float(origin_eigs[0])))
    emp_upper = np.maximum.accumulate(
        np.maximum(np.array(per_hi), float(origin_eigs[-1])))

    ana_lower = ana_upper = None
    slack = metric.tail_tol or 0.0
    if metric.decay is not None:
        ana_upper = np.array([
            metric.decay.gain(s) ** 2 * q_max / (2.0 * metric.decay.rate)
            for s in radii])
        if np.any(emp_upper > ana_upper * (1.0 + 1e-6) + slack):
            raise LyapmetricError(
                "empirical upper envelope violates the analytic bound: "
                "metric construction is inconsistent with its decay data")
    if jac_majorant is not None:
        state_gain = gain if gain is not None else metric.decay
        if state_gain is None:
            raise LyapmetricError("analytic lower bound needs a gain table")
        ana_lower = np.array([
            q_min / (2.0 * jac_majorant(state_gain.gain(s) * s))
            for s in radii])
        if np.any(emp_lower < ana_lower * (1.0 - 1e-6) - slack):
            raise LyapmetricError(
                "empirical lower envelope violates the analytic bound: "
                "metric construction is inconsistent with its gain data")

    growth = emp_lower * radii**2
    completeness = "pass" if np.all(np.diff(growth) > 0.0) else "flag"

    bounds = MetricBounds(
        radii=radii, empirical_lower=emp_lower, empirical_upper=emp_upper,
        analytic_lower=ana_lower, analytic_upper=ana_upper,
        completeness=completeness,
        samples={"per_radius": int(n_samples), "seed": int(seed)})
    metric.bounds = bounds
    return bounds
