"""Controller synthesis from a metric with an input-direction symmetry.

For w' = f(w) + g(w) u with a metric P such that

1. L_f P(w) - lam |P(w) g(w)|^2 <= -Q   on the sampled domain,
2. L_g P(w)  = 0                        (g preserves the metric),
3. the one-form P(w) g(w) is closed, so it has a potential U,

the feedback u = -lam U(w) makes the closed loop satisfy L_F P <= -Q, and
the distance-to-origin machinery certifies the loop.  Condition numbers in
error messages refer to this list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expressions
from .dynamics import flow
from .errors import ClosednessError, FalsificationError, LyapmetricError
from .systems import SystemModel

_CLOSEDNESS_TOL = 1e-6


def directional_metric_derivative(metric, field_model, w, h=1e-4,
                                  flow_tol=1e-12):
    """d_X P(w): flow-aligned one-sided difference along `field_model` with
    Richardson extrapolation over (h, h/2)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    horizon = metric.horizon_for(w)
    traj = flow(field_model, w, h, tol=flow_tol, dense=True)
    kwargs = {} if horizon is None else {"horizon": horizon}
    p0 = metric(w, **kwargs)
    p_h = metric(traj.states[-1], **kwargs)
    p_h2 = metric(traj.state_at(0.5 * h), **kwargs)
    d1 = (p_h - p0) / h
    d2 = (p_h2 - p0) / (0.5 * h)
    return 2.0 * d2 - d1


def killing_residual(metric, g_model, w, h=1e-4, flow_tol=1e-12):
    """L_g P(w) = d_g P + P dg/dw + (dg/dw)' P and its 2-norm."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    d_g = directional_metric_derivative(metric, g_model, w, h, flow_tol)
    p = metric(w)
    jg = g_model.jac(w)
    residual = d_g + p @ jg + jg.T @ p
    residual = 0.5 * (residual + residual.T)
    return residual, float(np.linalg.norm(residual, 2))


def closedness_residual(metric, g_model, points, fd_step=1e-5):
    """Max antisymmetrized spatial derivative of the one-form P(w) g(w).

    Zero (up to differencing error) exactly when a potential U exists on the
    sampled domain.  Returns (sup, witness point).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[1]

    def omega(w):
        return metric(w) @ g_model.f(w)

    worst, witness = 0.0, points[0]
    if n == 1:
        return 0.0, witness  # every 1-D one-form is closed
    for w in points:
        grad = np.empty((n, n))
        for i in range(n):
            step = np.zeros(n)
            step[i] = fd_step * (1.0 + abs(float(w[i])))
            grad[i] = (omega(w + step) - omega(w - step)) / (2.0 * step[i])
        anti = grad - grad.T
        value = float(np.max(np.abs(anti)))
        if value > worst:
            worst, witness = value, w
    return worst, witness


class PotentialU:
    """Scalar potential of the one-form P(w) g(w), anchored at U(w0) = 0.

    Values come from composite quadrature along the straight segment from
    the base point; the gradient is exact by construction.
    """

    def __init__(self, metric, g_model, base_point=None, quad_tol=1e-10):
        self.metric = metric
        self.g_model = g_model
        dim = g_model.dim
        self.base_point = np.zeros(dim) if base_point is None \
            else np.atleast_1d(np.asarray(base_point, dtype=float))
        self.quad_tol = quad_tol

    def gradient(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        return self.metric(w) @ self.g_model.f(w)

    def __call__(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        d = w - self.base_point
        if float(np.linalg.norm(d)) == 0.0:
            return 0.0

        def integrand(sigma):
            x = self.base_point + sigma * d
            return float(self.gradient(x) @ d)

        panels = 4
        prev = _simpson(integrand, panels)
        while panels <= 4096:
            panels *= 2
            cur = _simpson(integrand, panels)
            if abs(cur - prev) <= self.quad_tol * max(1.0, abs(cur)):
                return cur
            prev = cur
        return prev


def _simpson(fn, panels):
    xs = np.linspace(0.0, 1.0, panels + 1)
    vals = np.array([fn(x) for x in xs])
    h = 1.0 / panels
    return h / 3.0 * (vals[0] + vals[-1] + 4.0 * np.sum(vals[1:-1:2])
                      + 2.0 * np.sum(vals[2:-1:2]))


def construct_U(metric, g_model, w, base_point=None, sample_points=None,
                quad_tol=1e-10):
    """U(w) with dU/dw = (P g)' and U(base) = 0.

    When `sample_points` are given, the closedness of the one-form is
    checked there first; a violation means no potential exists on that
    domain and raises :class:`ClosednessError` with the witness.
    """
    if sample_points is not None:
        sup, witness = closedness_residual(metric, g_model, sample_points)
        if sup > _CLOSEDNESS_TOL:
            raise ClosednessError(
                f"the one-form P(w) g(w) is not closed (residual {sup:.3g}); "
                "no potential exists on this domain", witness=witness)
    return PotentialU(metric, g_model, base_point, quad_tol)(w)


@dataclass
class ControllerCertificate:
    gain: float
    killing_sup: float
    integrability_sup: float
    decrease_sup: float
    closed_loop_sup: float
    verdict: str
    samples: int
    tolerance: float

    def to_dict(self):
        return {"lambda": self.gain,
                "killing_residual_sup": self.killing_sup,
                "integrability_residual_sup": self.integrability_sup,
                "decrease_residual_sup": self.decrease_sup,
                "closed_loop_residual_sup": self.closed_loop_sup,
                "verdict": self.verdict,
                "samples": self.samples,
                "tolerance": self.tolerance}


class _Feedback:
    """u(w) = -gain * U(w) with the exact potential gradient."""

    def __init__(self, potential, gain):
        self.potential = potential
        self.gain = gain

    def __call__(self, w):
        return -self.gain * self.potential(w)

    def gradient(self, w):
        return -self.gain * self.potential.gradient(w)


def synthesize_controller(control_sys, metric, gain, q=None,
                          sample_points=None, tolerance=1e-6,
                          killing_tolerance=1e-8, scaling=None):
    """Check the three hypotheses on `sample_points`, then return the
    closed-loop model and its certificate.

    `scaling`, when given, multiplies the input field pointwise before all
    checks (a user-supplied relaxation; no automatic search).  Raises
    :class:`FalsificationError` naming the failed condition when any
    residual exceeds its tolerance; no controller is emitted in that case.
    """
    n = control_sys.dim
    q = np.eye(n) if q is None else np.asarray(q, dtype=float)
    if sample_points is None:
        sample_points = np.zeros((1, n))
    sample_points = np.atleast_2d(np.asarray(sample_points, dtype=float))

    g_model = control_sys.input_field
    if scaling is not None:
        base = g_model

        def scaled_f(w, _b=base, _s=scaling):
            return _s(w) * _b.f(w)

        def scaled_jac(w, _b=base, _s=scaling, _n=n):
            # dg/dw for alpha(w) g(w) needs d alpha; central differences
            j = _s(w) * _b.jac(w)
            for i in range(_n):
                step = np.zeros(_n)
                step[i] = 1e-6 * (1.0 + abs(float(w[i])))
                dalpha = (_s(w + step) - _s(w - step)) / (2.0 * step[i])
                j[:, i] += dalpha * _b.f(w)
            return j

        g_model = SystemModel(dim=n, f=scaled_f, jac=scaled_jac, hess=None,
                              smoothness="C1", equilibrium_at_origin=False,
                              name="scaled-input")

    # condition 2: the input field preserves the metric
    killing_sup = max(killing_residual(metric, g_model, w)[1]
                      for w in sample_points)
    if killing_sup > killing_tolerance:
        raise FalsificationError(
            f"condition 2 failed: Killing residual {killing_sup:.3g} "
            f"> {killing_tolerance:.3g}")

    # condition 3: the one-form has a potential
    integrability_sup, witness = closedness_residual(metric, g_model,
                                                     sample_points)
    if integrability_sup > _CLOSEDNESS_TOL:
        raise FalsificationError(
            f"condition 3 failed: closedness residual {integrability_sup:.3g}"
            f" at {witness}")

    # condition 1: the damped drift inequality
    decrease_sup = -math.inf
    for w in sample_points:
        d_f = directional_metric_derivative(metric, control_sys.drift, w)
        p = metric(w)
        jf = control_sys.drift.jac(w)
        pg = p @ g_model.f(w)
        lhs = d_f + p @ jf + jf.T @ p \
            - gain * float(pg @ pg) * np.eye(n) + q
        decrease_sup = max(decrease_sup,
                           float(np.max(np.linalg.eigvalsh(
                               0.5 * (lhs + lhs.T)))))
    if decrease_sup > tolerance:
        raise FalsificationError(
            f"condition 1 failed: decrease residual {decrease_sup:.3g} "
            f"> {tolerance:.3g}")

    potential = PotentialU(metric, g_model)
    feedback = _Feedback(potential, gain)
    closed_loop = control_sys.closed_loop(feedback) if scaling is None else \
        _scaled_closed_loop(control_sys, g_model, feedback)

    # Replay the closed-loop inequality L_F P <= -Q on the samples.  Under
    # the Killing condition the loop satisfies
    # L_F P = L_f P - 2 gain (Pg)(Pg)', a rank-one improvement, so the
    # scalar damped-drift condition above does not by itself imply the
    # matrix inequality in dimension >= 2; the verdict requires this replay
    # to pass as well.
    closed_sup = -math.inf
    for w in sample_points:
        d_fc = directional_metric_derivative(metric, closed_loop, w)
        p = metric(w)
        jc = closed_loop.jac(w)
        lhs = d_fc + p @ jc + jc.T @ p + q
        closed_sup = max(closed_sup,
                         float(np.max(np.linalg.eigvalsh(
                             0.5 * (lhs + lhs.T)))))

    cert = ControllerCertificate(
        gain=gain, killing_sup=killing_sup,
        integrability_sup=integrability_sup, decrease_sup=decrease_sup,
        closed_loop_sup=closed_sup,
        verdict="pass" if (killing_sup <= killing_tolerance
                           and integrability_sup <= _CLOSEDNESS_TOL
                           and decrease_sup <= tolerance
                           and closed_sup <= tolerance) else "fail",
        samples=sample_points.shape[0], tolerance=tolerance)
    return closed_loop, potential, cert


def _scaled_closed_loop(control_sys, g_model, feedback):
    def f(w):
        return control_sys.drift.f(w) + g_model.f(w) * feedback(w)

    def jac(w):
        u = feedback(w)
        du = feedback.gradient(w)
        return control_sys.drift.jac(w) + u * g_model.jac(w) + \
            np.outer(g_model.f(w), du)

    return SystemModel(dim=control_sys.dim, f=f, jac=jac, hess=None,
                       smoothness="C1", equilibrium_at_origin=False,
                       name="closed-loop")


def export_closed_loop(control_sys, metric, gain):
    """Re-emit the closed loop in the system-text grammar when the potential
    has an exact expression (constant metric with a constant input field:
    U is the linear form (P b)' w).  Returns the text, or None when the
    expression route does not apply; callers fall back to a tabulated U.
    """
    drift = control_sys.drift
    g_model = control_sys.input_field
    if metric.variant != "constant" or drift.source is None \
            or g_model.source is None:
        return None
    g_trees = g_model.source.f_trees
    if any(t.variables() for t in g_trees):
        return None
    n = control_sys.dim
    b = g_model.f(np.zeros(n))
    pb = metric(np.zeros(n)) @ b

    u_tree = expressions.Num(0.0)
    for j in range(n):
        u_tree = expressions.add(
            u_tree, expressions.mul(expressions.Num(float(pb[j])),
                                    expressions.Var(j)))
    new_trees = []
    for k, f_tree in enumerate(drift.source.f_trees):
        correction = expressions.mul(
            expressions.Num(float(gain)),
            expressions.mul(u_tree, expressions.Num(float(b[k]))))
        new_trees.append(expressions.sub(f_tree, correction))
    parsed = expressions.ParsedSystem(
        n, None, drift.source.params, new_trees, [], [], None)
    return parsed.to_text()


def tabulate_potential(potential, lo, hi, n_points=101):
    """Grid samples of U for export when no expression form exists.

    Returns (grid, values, metadata); the metadata names the interpolation
    contract for consumers.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.size != 1:
        raise LyapmetricError("tabulated export is one-dimensional")
    grid = np.linspace(float(lo[0]), float(hi[0]), int(n_points))
    values = np.array([potential(np.array([g])) for g in grid])
    meta = {"interpolation": "cubic-spline", "columns": ["w", "U"],
            "base_point": [float(v) for v in potential.base_point],
            "points": int(n_points)}
    return grid, values, meta
