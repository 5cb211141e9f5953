"""Riemannian structure of a metric field: Christoffel symbols, geodesics,
lengths, the distance-to-origin Lyapunov function and its flow derivative.

Geodesics use the standard convention gamma'' + Gamma[gamma', gamma'] = 0,
under which the P-speed of a geodesic is conserved; the speed-conservation
check in the test suite is the validator for that sign choice.

Distances are solved as two-point problems on the affine parameter [0, 1]:
single shooting with a damped Newton iteration on the initial velocity,
a multiple-shooting fallback, and as a last resort the straight-line length,
which is only ever returned flagged as an upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import integrate
from .dynamics import flow
from .errors import (
    DerivativeUnreliableError,
    GeodesicDomainError,
    LyapmetricError,
)

_BVP_TOL = 1e-10
_NEWTON_MAX_ITER = 25


def christoffel(metric, e, h_c=None):
    """Connection coefficients Gamma[l, i, j] at e by central differences.

    Gamma^l_ij = 1/2 sum_m (P^-1)_lm (d_i P_mj + d_j P_mi - d_m P_ij).
    The default step 1e-4 (1 + |e|) balances truncation against the noise
    floor of quadrature-defined metrics.
    """
    e = np.atleast_1d(np.asarray(e, dtype=float))
    n = e.size
    if h_c is None:
        h_c = 1e-4 * (1.0 + float(np.linalg.norm(e)))
    p0 = metric(e)
    dp = np.empty((n, p0.shape[0], p0.shape[1]))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h_c
        dp[i] = (metric(e + step) - metric(e - step)) / (2.0 * h_c)
    try:
        p_inv = np.linalg.inv(p0)
    except np.linalg.LinAlgError:
        raise LyapmetricError(f"metric not invertible at {e}") from None
    # lowered[m, i, j] = (d_i P_mj + d_j P_mi - d_m P_ij) / 2,
    # symmetric in (i, j) by construction; raise the first index
    first = np.transpose(dp, (1, 0, 2))          # [m, i, j] = d_i P_mj
    lowered = 0.5 * (first + np.transpose(first, (0, 2, 1)) - dp)
    return np.einsum("lm,mij->lij", p_inv, lowered)


@dataclass
class GeodesicPath:
    s: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speeds: np.ndarray
    length: float
    normalized: bool
    speed_drift: float

    def to_csv(self, path):
        """Rows `s, gamma_1..gamma_n, speed`."""
        n = self.points.shape[1]
        header = ["s"] + [f"gamma_{i + 1}" for i in range(n)] + ["speed"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(len(self.s)):
                row = [self.s[k], *self.points[k], self.speeds[k]]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _geodesic_rhs(metric, n):
    def rhs(t, y):
        gamma = y[:n]
        w = y[n: 2 * n]
        gam = christoffel(metric, gamma)
        acc = -np.einsum("lij,i,j->l", gam, w, w)
        p = metric(gamma)
        speed = math.sqrt(max(float(w @ p @ w), 0.0))
        out = np.empty(2 * n + 1)
        out[:n] = w
        out[n: 2 * n] = acc
        out[2 * n] = speed
        return out

    return rhs


def _integrate_geodesic(metric, start, velocity, s_span, tol):
    n = start.size
    y0 = np.concatenate([start, velocity, [0.0]])
    sol = integrate.solve(_geodesic_rhs(metric, n), y0, s_span, rtol=tol)
    return sol


def geodesic_ivp(metric, e, v, s_max, tol=1e-10):
    """Integrate the geodesic starting at (e, v) up to parameter s_max."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if float(np.linalg.norm(v)) == 0.0:
        raise LyapmetricError("geodesic needs a nonzero initial velocity")
    n = e.size
    sol = _integrate_geodesic(metric, e, v, float(s_max), tol)
    points = sol.y[:, :n]
    velocities = sol.y[:, n: 2 * n]
    speeds = np.array([math.sqrt(max(float(w @ metric(g) @ w), 0.0))
                       for g, w in zip(points, velocities)])
    drift = float(np.max(np.abs(speeds - speeds[0])))
    normalized = abs(speeds[0] - 1.0) <= 1e-9
    return GeodesicPath(s=sol.t, points=points, velocities=velocities,
                        speeds=speeds, length=float(sol.y[-1, 2 * n]),
                        normalized=normalized, speed_drift=drift)


def normalize_velocity(metric, e, v):
    """Scale v to unit P-speed at e."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    p = metric(np.atleast_1d(np.asarray(e, dtype=float)))
    speed = math.sqrt(float(v @ p @ v))
    if speed == 0.0:
        raise LyapmetricError("cannot normalize a null velocity")
    return v / speed


def riemannian_length(metric, points, rel_tol=1e-8):
    """Length of the piecewise-linear path through `points`.

    Composite Simpson per segment, doubling the panel count until the
    relative change drops below `rel_tol`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2:
        raise LyapmetricError("a path needs at least two points")

    def segment_speed(a, d):
        def speed(sigma):
            x = a + sigma * d
            return math.sqrt(max(float(d @ metric(x) @ d), 0.0))

        return speed

    total = 0.0
    for k in range(points.shape[0] - 1):
        a, b = points[k], points[k + 1]
        d = b - a
        if float(np.linalg.norm(d)) == 0.0:
            continue
        speed = segment_speed(a, d)
        panels = 4
        prev = _simpson(speed, panels)
        while panels <= 4096:
            panels *= 2
            cur = _simpson(speed, panels)
            if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
                prev = cur
                break
            prev = cur
        total += prev
    return total


def _simpson(fn, panels):
    xs = np.linspace(0.0, 1.0, panels + 1)
    vals = np.array([fn(x) for x in xs])
    h = 1.0 / panels
    return h / 3.0 * (vals[0] + vals[-1] + 4.0 * np.sum(vals[1:-1:2])
                      + 2.0 * np.sum(vals[2:-1:2]))


@dataclass
class DistanceValue:
    value: float
    endpoint: np.ndarray
    residual: float
    iterations: int
    flagged: bool
    method: str
    initial_velocity: Optional[np.ndarray] = None

    def to_dict(self):
        return {"value": self.value,
                "endpoint": [float(v) for v in self.endpoint],
                "residual": self.residual,
                "iterations": self.iterations,
                "flagged": self.flagged,
                "method": self.method}


def _shoot_endpoint(metric, start, velocity, tol):
    sol = _integrate_geodesic(metric, start, velocity, 1.0, tol)
    n = start.size
    return sol.y[-1, :n], float(sol.y[-1, 2 * n])


def _single_shooting(metric, start, target, tol):
    n = start.size
    u = (target - start).astype(float)
    scale = 1.0 + float(np.linalg.norm(target))
    best = None
    for iteration in range(_NEWTON_MAX_ITER):
        try:
            endpoint, length = _shoot_endpoint(metric, start, u, tol)
        except (GeodesicDomainError, LyapmetricError):
            return None
        r = endpoint - target
        rnorm = float(np.linalg.norm(r))
        best = (u, length, rnorm, iteration + 1)
        if rnorm <= _BVP_TOL * scale:
            return best
        # finite-difference Jacobian of the shooting map
        jac = np.empty((n, n))
        du = 1e-6 * (1.0 + float(np.linalg.norm(u)))
        for j in range(n):
            up = u.copy()
            up[j] += du
            try:
                endpoint_j, _ = _shoot_endpoint(metric, start, up, tol)
            except (GeodesicDomainError, LyapmetricError):
                return None
            jac[:, j] = (endpoint_j - endpoint) / du
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        # damped update
        alpha = 1.0
        for _ in range(8):
            candidate = u + alpha * step
            try:
                endpoint_c, _ = _shoot_endpoint(metric, start, candidate, tol)
            except (GeodesicDomainError, LyapmetricError):
                alpha *= 0.5
                continue
            if float(np.linalg.norm(endpoint_c - target)) < rnorm:
                u = candidate
                break
            alpha *= 0.5
        else:
            return None
    return best if best is not None and best[2] <= 1e-6 * scale else None


def _multiple_shooting(metric, start, target, tol, segments=8):
    # unknowns: u_0, then (gamma_k, u_k) at the interior knots; residuals:
    # position/velocity continuity at interior knots plus the final position
    n = start.size
    straight = target - start
    nodes = [start + (k / segments) * straight for k in range(segments)]
    z = np.concatenate([straight] + [
        np.concatenate([nodes[k], straight]) for k in range(1, segments)])

    def residual(zv):
        u0 = zv[:n]
        knots = [(start, u0)]
        for k in range(1, segments):
            base = n + (k - 1) * 2 * n
            knots.append((zv[base: base + n], zv[base + n: base + 2 * n]))
        res = np.empty((2 * segments - 1) * n)
        seg_len = 1.0 / segments
        total_len = 0.0
        for k, (gk, uk) in enumerate(knots):
            sol = _integrate_geodesic(metric, gk, uk, seg_len, tol)
            g_end = sol.y[-1, :n]
            u_end = sol.y[-1, n: 2 * n]
            total_len += float(sol.y[-1, 2 * n])
            if k < segments - 1:
                res[2 * n * k: 2 * n * k + n] = g_end - knots[k + 1][0]
                res[2 * n * k + n: 2 * n * (k + 1)] = u_end - knots[k + 1][1]
            else:
                res[2 * n * k: 2 * n * k + n] = g_end - target
        return res, total_len

    scale = 1.0 + float(np.linalg.norm(target))
    for iteration in range(_NEWTON_MAX_ITER):
        try:
            r, total_len = residual(z)
        except (GeodesicDomainError, LyapmetricError):
            return None
        rnorm = float(np.linalg.norm(r))
        if rnorm <= 10.0 * _BVP_TOL * scale:
            return z[:n], total_len, rnorm, iteration + 1
        jac = np.empty((r.size, z.size))
        dz = 1e-6 * (1.0 + float(np.linalg.norm(z)))
        for j in range(z.size):
            zp = z.copy()
            zp[j] += dz
            try:
                rj, _ = residual(zp)
            except (GeodesicDomainError, LyapmetricError):
                return None
            jac[:, j] = (rj - r) / dz
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        alpha = 1.0
        improved = False
        for _ in range(8):
            try:
                r_new, _ = residual(z + alpha * step)
            except (GeodesicDomainError, LyapmetricError):
                alpha *= 0.5
                continue
            if float(np.linalg.norm(r_new)) < rnorm:
                z = z + alpha * step
                improved = True
                break
            alpha *= 0.5
        if not improved:
            return None
    return None


def _distance_between(metric, start, target, tol=1e-10):
    start = np.atleast_1d(np.asarray(start, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    gap = float(np.linalg.norm(target - start))
    if gap == 0.0:
        return DistanceValue(0.0, target, 0.0, 0, False, "coincident")

    hit = _single_shooting(metric, start, target, tol)
    if hit is not None:
        u, length, rnorm, iters = hit
        return DistanceValue(length, target, rnorm, iters, False,
                             "single-shooting", initial_velocity=u)

    hit = _multiple_shooting(metric, start, target, tol)
    if hit is not None:
        u, length, rnorm, iters = hit
        return DistanceValue(length, target, rnorm, iters, False,
                             "multiple-shooting", initial_velocity=u)

    length = riemannian_length(metric, np.vstack([start, target]))
    return DistanceValue(length, target, float("nan"), 0, True,
                         "straight-line-upper-bound")


def distance_to_origin(metric, e, tol=1e-10):
    """Riemannian distance from e to the origin.

    Flagged results are straight-line upper bounds (the solver did not
    converge); they are excluded from decrease certificates.
    """
    e = np.atleast_1d(np.asarray(e, dtype=float))
    return _distance_between(metric, np.zeros(e.size), e, tol)


@dataclass
class DiniEstimate:
    value: float
    quotients: dict
    extrapolants: tuple
    v_at_point: float
    flagged: bool

    def to_dict(self):
        return {"value": self.value,
                "quotients": {str(h): q for h, q in self.quotients.items()},
                "v": self.v_at_point,
                "flagged": self.flagged}


def dini_derivative_V(metric, model, e, h_seq=(1e-2, 5e-3, 2.5e-3),
                      flow_tol=1e-12, gate_tol=1e-3, bvp_tol=1e-10):
    """Upper flow derivative of V(e) = d(e, 0) by extrapolated forward
    quotients (V(E(e, h)) - V(e)) / h over a decreasing h ladder.

    Richardson-extrapolates consecutive quotient pairs and gates on their
    agreement; a flagged result means some distance solve returned only an
    upper bound, so the estimate must not enter a decrease certificate.
    """
    e = np.atleast_1d(np.asarray(e, dtype=float))
    h_seq = sorted(h_seq, reverse=True)
    if len(h_seq) < 3:
        raise LyapmetricError("need at least three steps to extrapolate")

    v0 = distance_to_origin(metric, e, tol=bvp_tol)
    flagged = v0.flagged
    traj = flow(model, e, h_seq[0], tol=flow_tol, dense=True)
    quotients = {}
    for h in h_seq:
        vh = distance_to_origin(metric, traj.state_at(h), tol=bvp_tol)
        flagged = flagged or vh.flagged
        quotients[h] = (vh.value - v0.value) / h

    r1 = 2.0 * quotients[h_seq[1]] - quotients[h_seq[0]]
    r2 = 2.0 * quotients[h_seq[2]] - quotients[h_seq[1]]
    if abs(r2 - r1) > gate_tol:
        raise DerivativeUnreliableError(
            f"Dini estimate unreliable at e = {e}: extrapolants differ "
            f"by {abs(r2 - r1):.3g}")
    return DiniEstimate(value=r2, quotients=quotients, extrapolants=(r1, r2),
                        v_at_point=v0.value, flagged=flagged)


def dini_decrease_bound(metric, v_value, e_norm, form="provable"):
    """Certified decrease rate for V at a point with |e| = e_norm.

    The default comes out of the Cauchy-Schwarz chain
    D+V <= -mu_min(Q) |e|^2 / (2 V) <= -mu_min(Q) V / (2 p_upper(|e|))
    and is tight for linear systems (equality along the top eigendirection
    of a constant metric).  `form="sqrt"` gives the stronger variant with
    sqrt(p_upper); it holds whenever p_upper <= 1 and on the scalar catalog
    entry at its reference points, but fails on constant metrics with
    p_upper > 1, so it never gates a certificate.
    """
    q_min = float(np.min(np.linalg.eigvalsh(metric.q)))
    p_up = metric.p_upper(e_norm)
    if form == "sqrt":
        return -q_min * v_value / (2.0 * math.sqrt(p_up))
    return -q_min * v_value / (2.0 * p_up)


@dataclass
class PairwiseReport:
    distance: float
    flagged: bool
    sandwich_ok: Optional[bool]
    radius_argument: float
    decrease_rate: Optional[float] = None
    decrease_bound: Optional[float] = None

    def to_dict(self):
        return {"distance": self.distance, "flagged": self.flagged,
                "sandwich_ok": self.sandwich_ok,
                "radius_argument": self.radius_argument,
                "decrease_rate": self.decrease_rate,
                "decrease_bound": self.decrease_bound}


def pairwise_distance(metric, e1, e2, model=None, h=1e-2, flow_tol=1e-12,
                      bvp_tol=1e-10):
    """Distance between two states, its envelope check, and (with a model)
    the finite-step contraction rate of the pair under the flow.

    The envelope radius argument is |e1 - e2| + |e2|, which dominates the
    norm of every point on the connecting geodesic used in the bound.
    """
    e1 = np.atleast_1d(np.asarray(e1, dtype=float))
    e2 = np.atleast_1d(np.asarray(e2, dtype=float))
    d = _distance_between(metric, e1, e2, tol=bvp_tol)
    gap = float(np.linalg.norm(e1 - e2))
    radius = gap + float(np.linalg.norm(e2))

    sandwich_ok = None
    if metric.bounds is not None and gap > 0.0:
        lo = math.sqrt(metric.p_lower(radius)) * gap
        hi = math.sqrt(metric.p_upper(radius)) * gap
        sandwich_ok = bool(lo - 1e-9 <= d.value <= hi + 1e-9) \
            if not d.flagged else None

    rate = bound = None
    if model is not None and gap > 0.0 and not d.flagged:
        t1 = flow(model, e1, h, tol=flow_tol, dense=True)
        t2 = flow(model, e2, h, tol=flow_tol, dense=True)
        quots = []
        for hh in (h, 0.5 * h):
            d_h = _distance_between(metric, t1.state_at(hh), t2.state_at(hh),
                                    tol=bvp_tol)
            quots.append((d_h.value - d.value) / hh)
        rate = 2.0 * quots[1] - quots[0]
        if metric.bounds is not None:
            q_min = float(np.min(np.linalg.eigvalsh(metric.q)))
            bound = -q_min * d.value / (2.0 * metric.p_upper(radius))
    return PairwiseReport(distance=d.value, flagged=d.flagged,
                          sandwich_ok=sandwich_ok, radius_argument=radius,
                          decrease_rate=rate, decrease_bound=bound)
