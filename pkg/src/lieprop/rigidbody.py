"""Rigid-body attitude and angular-momentum uncertainty on SO(3) x R^3.

The physical system is the right SDE on g = (R, l)

    (g^-1 dg)^v = h*(g, t) dt + B' dW,
    h*(g, t) = (I^-1 l ; l x I^-1 l - C I^-1 l + N*(t)),   B' = diag(0, B).

All propagators here carry the left statistics (mu*, Sigma*) of g, i.e.
g = mu* exp(x) with x ~ N(0, Sigma*) -- the same statistics that the
Monte-Carlo ensemble reports -- and return the left mean velocity
u = (mu*^-1 mu*')^v together with Sigma*'.

Methods:

* ``EMD2`` - closed-form second-order expansion of moments.
* ``EMD0`` - same covariance equation, mean driven by h*(mu*) only.
* ``UTD``  - exact moment equations averaged with 13 unscented points.
* ``UKF-LA`` - unscented propagation in exponential coordinates about the
  current mean, converted back to a concentrated Gaussian each step.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from lieprop.lie import SO3xR3, so3
from lieprop.lie.groups import ProductPoint
from lieprop.propagators import (
    DEFAULT_KAPPA,
    PSD_CHECK_EVERY,
    PropagationError,
    PropagationResult,
    RhsEvaluation,
    SystemModel,
    check_psd,
    unscented_points,
)
from lieprop.sim import RigidBodyModel, SimulationGrid, reference_momentum
from lieprop.stats import GaussianState

METHODS = ("UKF-LA", "EMD0", "EMD2", "UTD")
QUADRATURE_INITIAL_VARIANCE = 1e-8

_GROUP = SO3xR3()
# K[:, i, j] = E_i I^-1 e_j is built per model from this constant basis
_E = so3.BASIS


def canonical_method(name: str) -> str:
    key = name.strip().upper().replace("_", "-")
    if key in ("UKFLA", "UKF"):
        key = "UKF-LA"
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return key


class RigidBodyDynamics:
    """Drift, noise and cached constant tensors for one RigidBodyModel.

    The model must carry a torque table (``RigidBodyModel.with_torque``).
    """

    def __init__(self, model: RigidBodyModel) -> None:
        if model.torque is None:
            raise ValueError("model has no torque table; call model.with_torque(grid)")
        self.model = model
        self.inv_inertia = 1.0 / np.asarray(model.inertia_diag, dtype=float)
        self.I_inv = np.diag(self.inv_inertia)
        self.C = model.C
        self.c = float(model.c)
        self.BBt = model.B @ model.B.T
        self.K = np.einsum("iab,b,bj->aij", _E, self.inv_inertia, np.eye(3))
        # contraction K_aij S_ij as a (3, 9) matrix acting on S.ravel()
        self.K_flat = self.K.reshape(3, 9)
        self.Q = np.zeros((6, 6))
        self.Q[3:, 3:] = self.BBt

    def torque(self, t: float) -> np.ndarray:
        return self.model.torque(t)

    # --- drifts ---------------------------------------------------------
    def drift_right(self, l: np.ndarray, t: float) -> np.ndarray:
        """h*(g, t); depends on g only through the momentum (batched over l)."""
        w = l * self.inv_inertia
        mom = so3.cross(l, w) - self.c * w + self.torque(t)
        return np.concatenate([w, mom], axis=-1)

    def drift_left(self, l: np.ndarray, t: float) -> np.ndarray:
        """Left-converted drift h(g, t) = -h*(g^-1, t) for a momentum block l."""
        return -self.drift_right(-l, t)

    def jacobian_right(self, l: np.ndarray) -> np.ndarray:
        """d h*(g exp(y)) / dy at y = 0 (rotation columns vanish)."""
        w = l * self.inv_inertia
        D = np.zeros((6, 6))
        D[:3, 3:] = self.I_inv
        D[3:, 3:] = so3.hat(l) @ self.I_inv - so3.hat(w) - self.c * self.I_inv
        return D

    def hessian_right(self) -> np.ndarray:
        """Second derivatives of h*: hess[:, 3+i, 3+j] = (e_i x I^-1 e_j + e_j x I^-1 e_i, below)."""
        H = np.zeros((6, 6, 6))
        for i in range(3):
            for j in range(3):
                v = so3.cross(np.eye(3)[i], self.I_inv[:, j]) + so3.cross(np.eye(3)[j], self.I_inv[:, i])
                H[3:, 3 + i, 3 + j] = v
        return H

    def system_model(self) -> SystemModel:
        """The right SDE as a generic SystemModel with analytic derivatives."""
        B_prime = np.zeros((6, 6))
        B_prime[3:, 3:] = self.model.B
        hess = self.hessian_right()
        return SystemModel(
            _GROUP,
            drift=lambda g, t: self.drift_right(np.asarray(g.momentum, dtype=float), t),
            noise=lambda t: B_prime,
            handedness="right",
            drift_jacobian=lambda g, t: self.jacobian_right(np.asarray(g.momentum, dtype=float)),
            drift_hessian=lambda g, t: hess,
            vectorized=True,
        )


def product_drift(g: ProductPoint, t: float, dynamics: RigidBodyDynamics, left: bool = False) -> np.ndarray:
    """h*(g, t), or the left-converted drift -h*(g^-1, t) when ``left``."""
    l = np.asarray(g.momentum, dtype=float)
    return dynamics.drift_left(l, t) if left else dynamics.drift_right(l, t)


# ---------------------------------------------------------------------------
# right-hand sides on (mu*, Sigma*)


def _split(sigma: np.ndarray):
    return sigma[:3, :3], sigma[:3, 3:], sigma[3:, 3:]


def _assemble(S_RR, S_Rl, S_ll) -> np.ndarray:
    out = np.empty((6, 6))
    out[:3, :3] = S_RR
    out[:3, 3:] = S_Rl
    out[3:, :3] = S_Rl.T
    out[3:, 3:] = S_ll
    return out


def _emd2_core(l: np.ndarray, sigma: np.ndarray, t: float, dyn: RigidBodyDynamics, zeroth_order_mean: bool = False):
    S_RR, S_Rl, S_ll = _split(sigma)
    inv_I = dyn.inv_inertia  # I is diagonal: X @ I^-1 scales columns, I^-1 @ X scales rows
    w = l * inv_I

    u_R = w + 0.5 * (dyn.K_flat @ S_Rl.ravel())
    W = so3.hat(w)
    Lh = so3.hat(l)
    UW = so3.hat(0.5 * (u_R + w))  # (u_R^ + w^) / 2

    S_Rl_I = S_Rl * inv_I
    A = S_Rl_I - UW @ S_RR
    d_RR = A + A.T
    d_Rl = -UW @ S_Rl + inv_I[:, None] * S_ll + S_Rl @ W - S_Rl_I @ (dyn.C + Lh)
    F = (Lh - dyn.C) * inv_I - W
    FS = F @ S_ll
    d_ll = dyn.BBt + FS + FS.T

    u = np.empty(6)
    u[3:] = so3.cross(l, w) - dyn.c * w + dyn.torque(t)
    if zeroth_order_mean:
        u[:3] = w
    else:
        u[:3] = u_R
        u[3:] += dyn.K_flat @ S_ll.ravel()
    return u, _assemble(d_RR, d_Rl, d_ll)


def emd2_rigidbody_rhs(state: GaussianState, t: float, dyn: RigidBodyDynamics, zeroth_order_mean: bool = False) -> RhsEvaluation:
    """Closed-form second-order moment equations.

    Mean:  (R^T R')^v = I^-1 l + 1/2 (Sigma_Rl)_ij E_i I^-1 e_j,
           l'         = (l^ - C) I^-1 l + N* + (Sigma_ll)_ij E_i I^-1 e_j,
    and the block covariance equations with the B B^T source in Sigma_ll'.
    With ``zeroth_order_mean`` (EMD0) the mean velocity drops the covariance
    terms; the covariance rate is the same in both cases.
    """
    u, rate = _emd2_core(np.asarray(state.mu.momentum, dtype=float), state.sigma, t, dyn, zeroth_order_mean)
    return RhsEvaluation(u, rate)


def emd0_rigidbody_rhs(state: GaussianState, t: float, dyn: RigidBodyDynamics) -> RhsEvaluation:
    return emd2_rigidbody_rhs(state, t, dyn, zeroth_order_mean=True)


def _utd_core(l_bar: np.ndarray, sigma: np.ndarray, t: float, dyn: RigidBodyDynamics, kappa: float = DEFAULT_KAPPA):
    xi, wts = unscented_points(sigma, kappa)
    xR, xl = xi[:, :3], xi[:, 3:]
    m = xl - l_bar
    Im = m * dyn.inv_inertia
    hl_l = -dyn.c * Im - so3.cross(m, Im) - dyn.torque(t)

    # J_l^-1 = I - X/2 + c X^2 and J_r^-1 = I + X/2 + c X^2 share everything but the sign
    X = so3.hat(xR)
    X2 = X @ X
    coef = so3.inverse_coefficient(np.sqrt(np.einsum("pi,pi->p", xR, xR)))
    sym_part = np.eye(3) + coef[:, None, None] * X2
    Jr_inv = sym_part + 0.5 * X
    Jl_inv = sym_part - 0.5 * X

    a_R = np.einsum("pab,pb->pa", Jl_inv, Im)
    mean_Jr = np.einsum("p,pab->ab", wts, Jr_inv)
    try:
        u_R = -np.linalg.solve(mean_Jr, wts @ a_R)
    except np.linalg.LinAlgError as exc:
        raise PropagationError("averaged inverse right Jacobian is singular") from exc
    u_l = -(wts @ hl_l)

    r = np.empty_like(xi)
    r[:, :3] = np.einsum("pab,b->pa", Jr_inv, u_R) + a_R
    r[:, 3:] = u_l + hl_l
    M = np.einsum("p,pa,pb->ab", wts, r, xi)
    u = np.empty(6)
    u[:3], u[3:] = u_R, u_l
    return u, M + M.T + dyn.Q


def utd_rigidbody_rhs(state: GaussianState, t: float, dyn: RigidBodyDynamics, kappa: float = DEFAULT_KAPPA) -> RhsEvaluation:
    """Exact moment equations averaged over 13 unscented points.

    u = -<J_r^-1>^-1 <J_l^-1 h^c_l>,
    Sigma' = < sym[(J_r^-1 u + J_l^-1 h^c_l) x^T] > + B'B'^T,
    with h^c_l(x) = (I^-1 m ; -(C + m^) I^-1 m - N*), m = x_l - mean_l.
    The derivative-of-Jacobian noise term vanishes (no rotation noise) and
    Jacobians are identity on the momentum block.
    """
    u, rate = _utd_core(np.asarray(state.mu.momentum, dtype=float), state.sigma, t, dyn, kappa)
    return RhsEvaluation(u, rate)


# ---------------------------------------------------------------------------
# integration


def _exp_right(mu: ProductPoint, u: np.ndarray) -> ProductPoint:
    return ProductPoint(mu.rotation @ so3.exp(u[:3]), mu.momentum + u[3:])


def _heun(core: Callable, R: np.ndarray, l: np.ndarray, sigma: np.ndarray, t: float, dt: float):
    """Improved Euler on (R, l, Sigma).

    None of the moment equations depend on the mean rotation, so the
    predictor only needs the momentum and covariance.
    """
    u1, d1 = core(l, sigma, t)
    u2, d2 = core(l + dt * u1[3:], sigma + dt * d1, t + dt)
    u = 0.5 * dt * (u1 + u2)
    sig = sigma + 0.5 * dt * (d1 + d2)
    return R @ so3.exp(u[:3]), l + u[3:], 0.5 * (sig + sig.T)


def ukf_la_forward(mu: ProductPoint, sigma: np.ndarray, t: float, dt: float, dyn: RigidBodyDynamics, kappa: float = DEFAULT_KAPPA):
    """One Euler step of the unscented filter in exponential coordinates.

    Sigma points xi_i of Sigma parametrize g_i = mu exp(xi_i); each moves by
    xi_i + dt diag(J_r^-1(xi_R), I) h*(g_i, t). The resulting non-zero-mean
    Gaussian (xi_bar, P) is re-centred as mu exp(xi_bar) with covariance
    J_r(xi_bar) P J_r(xi_bar)^T. Returns (mu_new, sigma_new, xi_bar).
    """
    xi, wts = unscented_points(sigma, kappa)
    h = dyn.drift_right(mu.momentum + xi[:, 3:], t)
    moved = xi.copy()
    moved[:, :3] += dt * np.einsum("pab,pb->pa", so3.jr_inv(xi[:, :3]), h[:, :3])
    moved[:, 3:] += dt * h[:, 3:]
    xi_bar = wts @ moved
    d = moved - xi_bar
    P = np.einsum("p,pa,pb->ab", wts, d, d) + dt * dyn.Q
    J = np.eye(6)
    J[:3, :3] = so3.jr(xi_bar[:3])
    P = J @ P @ J.T
    return _exp_right(mu, xi_bar), 0.5 * (P + P.T), xi_bar


def _ukf_la_step(mu, sigma, t, dt, dyn, kappa):
    mu1, sig1, xb1 = ukf_la_forward(mu, sigma, t, dt, dyn, kappa)
    _, sig2, xb2 = ukf_la_forward(mu1, sig1, t + dt, dt, dyn, kappa)
    mu_new = _exp_right(mu, 0.5 * (xb1 + xb2))
    sig = 0.5 * (sigma + sig2)
    return mu_new, 0.5 * (sig + sig.T)


def initial_state(model: RigidBodyModel, method: str) -> GaussianState:
    """Deterministic start (I, l*(0)); quadrature methods need a tiny covariance."""
    mu = ProductPoint(np.eye(3), reference_momentum(model.trajectory, 0.0))
    var = QUADRATURE_INITIAL_VARIANCE if canonical_method(method) in ("UTD", "UKF-LA") else 0.0
    return GaussianState(mu, var * np.eye(6), "left")


def propagate_rigidbody(
    model: RigidBodyModel,
    grid: SimulationGrid,
    method: str,
    initial: GaussianState | None = None,
    kappa: float = DEFAULT_KAPPA,
) -> PropagationResult:
    """Integrate one method with the improved-Euler scheme; states at checkpoints."""
    method = canonical_method(method)
    if model.torque is None:
        model = model.with_torque(grid)
    dyn = RigidBodyDynamics(model)
    state = initial if initial is not None else initial_state(model, method)
    if state.handedness != "left":
        raise ValueError("rigid-body propagation expects left statistics")

    if method == "EMD2":
        core = lambda l, S, t: _emd2_core(l, S, t, dyn)  # noqa: E731
    elif method == "EMD0":
        core = lambda l, S, t: _emd2_core(l, S, t, dyn, True)  # noqa: E731
    elif method == "UTD":
        core = lambda l, S, t: _utd_core(l, S, t, dyn, kappa)  # noqa: E731
    else:
        core = None

    R = np.array(state.mu.rotation, dtype=float)
    l = np.array(state.mu.momentum, dtype=float)
    sigma = np.array(state.sigma, dtype=float)
    checkpoints = list(grid.checkpoints)
    result = PropagationResult(np.asarray(checkpoints, dtype=float) * grid.dt)

    def record():
        result.states.append(GaussianState(ProductPoint(R.copy(), l.copy()), sigma.copy(), "left"))

    c = 0
    if checkpoints[0] == 0:
        record()
        c = 1
    dt = grid.dt
    for k in range(grid.n_steps):
        t = k * dt
        if core is None:
            mu, sigma = _ukf_la_step(ProductPoint(R, l), sigma, t, dt, dyn, kappa)
            R, l = mu.rotation, mu.momentum
        else:
            R, l, sigma = _heun(core, R, l, sigma, t, dt)
        if (k + 1) % PSD_CHECK_EVERY == 0:
            check_psd(sigma)
        if c < len(checkpoints) and checkpoints[c] == k + 1:
            record()
            c += 1
    return result
