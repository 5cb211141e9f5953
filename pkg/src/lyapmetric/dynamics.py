"""Flows, lifted (variational) flows and transverse flows.

The lifted flow integrates the state jointly with the transition matrix
Phi, Phi' = J(E(t)) Phi, Phi(0) = I, as a single augmented system so the
cocycle identity Phi(E(e,t), r) Phi(e,t) = Phi(e, t+r) stays tight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import integrate
from .errors import LyapmetricError

_TOL_RANGE = (1e-14, 1e-2)


def _check_tol(tol):
    if not (_TOL_RANGE[0] < tol < _TOL_RANGE[1]):
        raise LyapmetricError(
            f"tolerance {tol} outside ({_TOL_RANGE[0]}, {_TOL_RANGE[1]})")


@dataclass
class Trajectory:
    """Time grid, states, and (optionally) transition matrices along a flow."""

    t: np.ndarray                      # strictly increasing, t[0] = 0
    states: np.ndarray                 # (m, n)
    phi: Optional[np.ndarray] = None   # (m, n_e, n_e)
    dense: Optional[integrate.DenseOutput] = None
    n_state: int = 0
    error_estimate: float = 0.0
    tol: float = 0.0

    def state_at(self, t):
        if self.dense is None:
            raise LyapmetricError("trajectory was integrated without dense output")
        return np.atleast_1d(self.dense(t))[: self.n_state]

    def phi_at(self, t):
        if self.dense is None or self.phi is None:
            raise LyapmetricError("no dense transition data on this trajectory")
        n = self.phi.shape[1]
        flat = np.atleast_1d(self.dense(t))[self.n_state: self.n_state + n * n]
        return flat.reshape(n, n)

    def to_csv(self, path):
        """Write `t, e_1..e_n[, phi_11..phi_nn]` rows, 17 significant digits."""
        n = self.states.shape[1]
        header = ["t"] + [f"e_{i + 1}" for i in range(n)]
        blocks = [self.t[:, None], self.states]
        if self.phi is not None:
            k = self.phi.shape[1]
            header += [f"phi_{i + 1}{j + 1}" for i in range(k) for j in range(k)]
            blocks.append(self.phi.reshape(len(self.t), k * k))
        data = np.hstack(blocks)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class TransverseTrajectory:
    """Nonlinear pair (E, X) plus the drift solution and transverse Phi.

    x_drift solves x' = G(0, x) from the same x0; phi solves
    phi' = dF/de(0, x_drift) phi, the transition of the transversally
    linear dynamics.
    """

    t: np.ndarray
    e: np.ndarray          # (m, n_e)
    x: np.ndarray          # (m, n_x)
    x_drift: np.ndarray    # (m, n_x)
    phi: np.ndarray        # (m, n_e, n_e)
    error_estimate: float = 0.0


def flow(model, e0, horizon, tol=1e-9, dense=False, blowup_norm=1e8):
    """Integrate e' = F(e) from e0 over [0, horizon]."""
    _check_tol(tol)
    e0 = np.atleast_1d(np.asarray(e0, dtype=float))
    if e0.size != model.dim:
        raise LyapmetricError(f"initial state has size {e0.size}, expected {model.dim}")
    f = model.f

    def rhs(t, y):
        return f(y)

    sol = integrate.solve(rhs, e0, horizon, rtol=tol, dense=dense,
                          blowup_norm=blowup_norm)
    return Trajectory(t=sol.t, states=sol.y, dense=sol.dense,
                      n_state=model.dim, error_estimate=sol.max_error_estimate,
                      tol=tol)


def variational_flow(model, e0, horizon, tol=1e-9, dense=False,
                     blowup_norm=1e8):
    """Jointly integrate the state and its transition matrix."""
    _check_tol(tol)
    n = model.dim
    e0 = np.atleast_1d(np.asarray(e0, dtype=float))
    if e0.size != n:
        raise LyapmetricError(f"initial state has size {e0.size}, expected {n}")
    f, jac = model.f, model.jac

    def rhs(t, y):
        e = y[:n]
        phi = y[n:].reshape(n, n)
        out = np.empty(n + n * n)
        out[:n] = f(e)
        out[n:] = (jac(e) @ phi).ravel()
        return out

    y0 = np.concatenate([e0, np.eye(n).ravel()])
    sol = integrate.solve(rhs, y0, horizon, rtol=tol, dense=dense,
                          blowup_norm=blowup_norm)
    m = len(sol.t)
    return Trajectory(t=sol.t, states=sol.y[:, :n],
                      phi=sol.y[:, n:].reshape(m, n, n), dense=sol.dense,
                      n_state=n, error_estimate=sol.max_error_estimate, tol=tol)


def transverse_flow(model, e0, x0, horizon, tol=1e-9, blowup_norm=1e8):
    """Nonlinear (E, X) flow plus the transverse transition matrix.

    The augmented system carries (e, x, x_drift, phi): the nonlinear pair
    from (e0, x0), the drift solution of x' = G(0, x) from x0, and the
    transition phi' = dF/de(0, x_drift) phi with phi(0) = I.
    """
    _check_tol(tol)
    n_e, n_x = model.n_e, model.n_x
    e0 = np.atleast_1d(np.asarray(e0, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if e0.size != n_e or x0.size != n_x:
        raise LyapmetricError("initial condition dimensions disagree with model")

    full_f = model.full.f
    full_jac = model.full.jac
    zeros_e = np.zeros(n_e)

    def rhs(t, y):
        ex = y[: n_e + n_x]
        xd = y[n_e + n_x: n_e + n_x + n_x]
        phi = y[n_e + n_x + n_x:].reshape(n_e, n_e)
        on_manifold = np.concatenate([zeros_e, xd])
        out = np.empty(y.size)
        out[: n_e + n_x] = full_f(ex)
        out[n_e + n_x: n_e + n_x + n_x] = full_f(on_manifold)[n_e:]
        a = full_jac(on_manifold)[:n_e, :n_e]
        out[n_e + n_x + n_x:] = (a @ phi).ravel()
        return out

    y0 = np.concatenate([e0, x0, x0, np.eye(n_e).ravel()])
    sol = integrate.solve(rhs, y0, horizon, rtol=tol, blowup_norm=blowup_norm)
    m = len(sol.t)
    split1, split2 = n_e, n_e + n_x
    return TransverseTrajectory(
        t=sol.t,
        e=sol.y[:, :split1],
        x=sol.y[:, split1:split2],
        x_drift=sol.y[:, split2: split2 + n_x],
        phi=sol.y[:, split2 + n_x:].reshape(m, n_e, n_e),
        error_estimate=sol.max_error_estimate,
    )
