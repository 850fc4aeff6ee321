"""Generic mean/covariance propagation on matrix Lie groups.

Models are Stratonovich SDEs on a group G,

* left:  (dg g^-1)^v = h(g, t) dt + H(t) dW
* right: (g^-1 dg)^v = h(g, t) dt + H(t) dW

The engines work on left models and the concentrated Gaussian g = exp(x) mu,
i.e. a right-handed state (see :mod:`lieprop.stats`). With Q = H H^T,
h^c(x) = h(exp(x) mu, t) and averages <.> over x ~ N(0, Sigma), the exact
moment equations are

    v     = (mu' mu^-1)^v = <J_r^-1>^-1 <n + J_l^-1 h^c>
    Sigma' = < sym[(n - J_r^-1 v + J_l^-1 h^c) x^T] + J_l^-1 Q J_l^-T >

with n = 1/2 sum_k dJ_l^-1/dx_k (Q J_l^-T) e_k and sym(A) = A + A^T. The
quadrature method evaluates the averages with sigma points; the expansion
methods (EMD2, EMD0) Taylor-expand the integrands to second order.

Right models are handled by inverting the process: k = g^-1 solves a left
SDE with drift -h(k^-1, t), and the left statistics of g are the right
statistics of k with the mean inverted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional

import numpy as np

from lieprop.lie.groups import MatrixLieGroup
from lieprop.stats import GaussianState, convert_left_right, invert_state

DEFAULT_KAPPA = -3.0
JACOBIAN_STEP = 1e-5
HESSIAN_STEP = 1e-4
PSD_TOLERANCE = 1e-9
PSD_CHECK_EVERY = 10

METHODS = ("UTD", "EMD2", "EMD0")


class PropagationError(RuntimeError):
    """Raised when a propagated covariance stops being positive semidefinite
    or the quadrature mean matrix becomes singular."""


@dataclass
class SystemModel:
    """Drift h(g, t), noise H(t) and the SDE handedness.

    ``drift_jacobian(g, t)`` and ``drift_hessian(g, t)`` are optional analytic
    derivatives in exponential coordinates: with respect to x in exp(x) g for
    left models and in g exp(x) for right models. Layout: ``jac[:, i]`` and
    ``hess[:, i, j]``. Missing derivatives fall back to central differences.

    If ``vectorized`` is true the drift accepts a batch of group elements
    (leading axis) and returns an (n, N) array.

    ``drift_correction(g, t)`` is an optional extra drift term for noise that
    depends on the state (the Stratonovich correction 1/2 H E(H)); it is added
    to ``drift`` and must follow the same batching convention. The engines are
    exercised only with time-dependent noise, for which the term is zero.
    """

    group: MatrixLieGroup
    drift: Callable[[Any, float], np.ndarray]
    noise: Callable[[float], np.ndarray]
    handedness: str = "left"
    drift_jacobian: Optional[Callable[[Any, float], np.ndarray]] = None
    drift_hessian: Optional[Callable[[Any, float], np.ndarray]] = None
    vectorized: bool = False
    drift_correction: Optional[Callable[[Any, float], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be 'left' or 'right', got {self.handedness!r}")
        if self.drift_correction is not None:
            base, extra = self.drift, self.drift_correction
            self.drift = lambda g, t: np.asarray(base(g, t), dtype=float) + np.asarray(extra(g, t), dtype=float)
            self.drift_correction = None  # folded in; keeps dataclasses.replace idempotent

    def diffusion(self, t: float) -> np.ndarray:
        H = np.atleast_2d(np.asarray(self.noise(t), dtype=float))
        if not np.all(np.isfinite(H)):
            raise ValueError("noise matrix has non-finite entries")
        return H @ H.T


class RhsEvaluation(NamedTuple):
    mean_velocity: np.ndarray
    cov_rate: np.ndarray


class SigmaPointSet(NamedTuple):
    points: np.ndarray  # (2n+1, n)
    weights: np.ndarray  # (2n+1,)


class Emd2Coefficients(NamedTuple):
    mean: np.ndarray  # (N, N, N): mean[:, i, j] is (M^mu)_ij
    cov: np.ndarray  # (N, N, N, N): cov[i, j] is (M^Sigma)_ij
    drift: np.ndarray  # h(mu, t)
    diffusion: np.ndarray  # H H^T


@dataclass
class PropagationResult:
    times: np.ndarray
    states: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)


# ---------------------------------------------------------------------------
# helpers


def _take(g: Any, i: int) -> Any:
    if isinstance(g, tuple):
        return type(g)(*(np.asarray(f)[i] for f in g))
    return np.asarray(g)[i]


def _drift_batch(model: SystemModel, g_batch: Any, n: int, t: float) -> np.ndarray:
    if model.vectorized:
        return np.asarray(model.drift(g_batch, t), dtype=float)
    return np.stack([np.asarray(model.drift(_take(g_batch, i), t), dtype=float) for i in range(n)])


def _perturb(model: SystemModel, mu: Any, x: np.ndarray) -> Any:
    """exp(x) mu for left models, mu exp(x) for right models (batched over x)."""
    G = model.group
    e = G.exp(x)
    if model.handedness == "left":
        return G.compose(e, mu)
    return G.compose(mu, e)


def drift_derivatives(model: SystemModel, mu: Any, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(jac, hess) of x -> h(perturbed mu) at x = 0; analytic when available."""
    N = model.group.dim
    if model.drift_jacobian is not None:
        jac = np.asarray(model.drift_jacobian(mu, t), dtype=float)
    else:
        eps = JACOBIAN_STEP
        xs = np.concatenate([eps * np.eye(N), -eps * np.eye(N)])
        vals = _drift_batch(model, _perturb(model, mu, xs), 2 * N, t)
        jac = ((vals[:N] - vals[N:]) / (2 * eps)).T
    if model.drift_hessian is not None:
        hess = np.asarray(model.drift_hessian(mu, t), dtype=float)
    else:
        eps = HESSIAN_STEP
        E = np.eye(N)
        i, j = np.triu_indices(N)
        a, b = E[i], E[j]
        xs = eps * np.concatenate([a + b, a - b, -a + b, -a - b])
        m = len(i)
        vals = _drift_batch(model, _perturb(model, mu, xs), 4 * m, t)
        pp, pm, mp, mm = vals[:m], vals[m : 2 * m], vals[2 * m : 3 * m], vals[3 * m :]
        d2 = (pp - pm - mp + mm) / (4 * eps * eps)
        hess = np.empty((N, N, N))
        hess[:, i, j] = d2.T
        hess[:, j, i] = d2.T
    return jac, hess


# ---------------------------------------------------------------------------
# conversions


def convert_right_system(model: SystemModel) -> SystemModel:
    """Model of the inverted process k = g^-1, with flipped handedness.

    Drift becomes -h(k^-1, t) and the noise matrix changes sign (H H^T is
    unchanged). Derivatives follow: the Jacobian is preserved and the Hessian
    changes sign. Applying the conversion twice gives back the original drift.
    """
    G = model.group
    h = model.drift

    def drift(g, t):
        return -np.asarray(h(G.inverse(g), t), dtype=float)

    def noise(t):
        return -np.atleast_2d(np.asarray(model.noise(t), dtype=float))

    jac = hess = None
    if model.drift_jacobian is not None:
        dj = model.drift_jacobian

        def jac(g, t):
            return np.asarray(dj(G.inverse(g), t), dtype=float)

    if model.drift_hessian is not None:
        dh = model.drift_hessian

        def hess(g, t):
            return -np.asarray(dh(G.inverse(g), t), dtype=float)

    side = "left" if model.handedness == "right" else "right"
    return SystemModel(G, drift, noise, side, jac, hess, model.vectorized)


# ---------------------------------------------------------------------------
# sigma points


def unscented_points(sigma: np.ndarray, kappa: float = DEFAULT_KAPPA) -> SigmaPointSet:
    """2n+1 points [0, +cols, -cols] of chol((n + kappa) Sigma).

    Weights are kappa/(n+kappa) for the centre and 1/(2(n+kappa)) elsewhere.
    A semidefinite Sigma is regularized by 1e-12 I before factoring.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    lam = n + kappa
    if lam <= 0:
        raise ValueError(f"n + kappa must be positive (n={n}, kappa={kappa})")
    try:
        L = np.linalg.cholesky(lam * sigma)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(lam * (sigma + 1e-12 * np.eye(n)))
        except np.linalg.LinAlgError as exc:
            raise PropagationError("Cholesky factorization of the covariance failed") from exc
    points = np.concatenate([np.zeros((1, n)), L.T, -L.T])
    weights = np.full(2 * n + 1, 0.5 / lam)
    weights[0] = kappa / lam
    return SigmaPointSet(points, weights)


# ---------------------------------------------------------------------------
# right-hand sides (left model, right-handed state)


def _require_left(model: SystemModel) -> None:
    if model.handedness != "left":
        raise ValueError("right-hand sides expect a left model; use convert_right_system first")


def exact_rhs_quadrature(
    model: SystemModel,
    state: GaussianState,
    t: float,
    points: SigmaPointSet | None = None,
    kappa: float = DEFAULT_KAPPA,
) -> RhsEvaluation:
    """Exact moment equations with averages replaced by a sigma-point rule."""
    _require_left(model)
    G = model.group
    if points is None:
        points = unscented_points(state.sigma, kappa)
    xi, w = points
    m = len(w)
    Q = model.diffusion(t)

    # quantities reused between the mean and covariance brackets
    Jr_inv = G.jr_inv(xi)
    Jl_inv = G.jl_inv(xi)
    hc = _drift_batch(model, G.compose(G.exp(xi), state.mu), m, t)
    a = np.einsum("pab,pb->pa", Jl_inv, hc)
    if np.any(Q):
        dJ = G.djl_inv_dx(xi)  # (m, k, N, N)
        QJt = Q @ np.swapaxes(Jl_inv, -1, -2)  # (m, N, N)
        a = a + 0.5 * np.einsum("pkab,pbk->pa", dJ, QJt)
        noise = np.einsum("p,pab,pbc->ac", w, Jl_inv, QJt)
    else:
        noise = np.zeros_like(Q)

    mean_Jr = np.einsum("p,pab->ab", w, Jr_inv)
    try:
        v = np.linalg.solve(mean_Jr, w @ a)
    except np.linalg.LinAlgError as exc:
        raise PropagationError("averaged inverse right Jacobian is singular") from exc

    r = a - np.einsum("pab,b->pa", Jr_inv, v)
    A = np.einsum("p,pa,pb->ab", w, r, xi)
    return RhsEvaluation(v, A + A.T + noise)


def _ad_products(G: MatrixLieGroup, Q: np.ndarray):
    A = G.ad_basis()
    # t1[a,i,j] = sum_k (ad_k Q ad_j^T ad_i^T)[a,k];  t2[a,i,j] = sum_k (ad_i ad_k Q ad_j^T)[a,k]
    t1 = np.einsum("kab,bc,jdc,ikd->aij", A, Q, A, A)
    t2 = np.einsum("iab,kbc,cd,jkd->aij", A, A, Q, A)
    # s1[:, i] = sum_k (ad_k Q ad_i^T)[:, k];  s2[:, i] = sum_k (ad_k ad_i Q)[:, k]
    s1 = np.einsum("kab,bc,ikc->ai", A, Q, A)
    s2 = np.einsum("kab,ibc,ck->ai", A, A, Q)
    return A, t1, t2, s1, s2


def emd2_coefficients(
    model: SystemModel, mu: Any, t: float, velocity: np.ndarray | None = None
) -> Emd2Coefficients:
    """Second-order expansion coefficients at mu.

    ``(M^Sigma)_ij`` contains the mean velocity (mu' mu^-1)^v; pass the
    second-order velocity h + (M^mu)_ij Sigma_ij as ``velocity``. Without it
    the drift h(mu, t) is used, which is the value at Sigma = 0.
    """
    _require_left(model)
    G = model.group
    Q = model.diffusion(t)
    h = np.asarray(model.drift(mu, t), dtype=float)
    jac, hess = drift_derivatives(model, mu, t)
    A, t1, t2, s1, s2 = _ad_products(G, Q)
    Mmu = -(t1 + t2) / 48.0 + 0.5 * hess - 0.5 * np.einsum("iab,bj->aij", A, jac)
    v = h if velocity is None else np.asarray(velocity, dtype=float)
    MS = _sigma_coefficients(A, Q, s1, s2, jac, h, v)
    return Emd2Coefficients(Mmu, MS, h, Q)


def _sigma_coefficients(A, Q, s1, s2, jac, h, v) -> np.ndarray:
    N = Q.shape[0]
    p = s1 / 8.0 + s2 / 24.0 - 0.5 * np.einsum("iab,b->ai", A, h + v) + jac
    eye = np.eye(N)
    inner = np.einsum("ai,jb->ijab", p, eye) + np.einsum("iab,jbc,cd->ijad", A, A, Q) / 12.0
    return inner + np.swapaxes(inner, -1, -2) + 0.25 * np.einsum("iab,bc,jdc->ijad", A, Q, A)


def emd2_rhs(model: SystemModel, state: GaussianState, t: float, zeroth_order_mean: bool = False) -> RhsEvaluation:
    """Second-order expansion of moments; with ``zeroth_order_mean`` the mean
    rate is h(mu, t) alone (EMD0) while the covariance rate is unchanged."""
    _require_left(model)
    G = model.group
    S = state.sigma
    Q = model.diffusion(t)
    h = np.asarray(model.drift(state.mu, t), dtype=float)
    jac, hess = drift_derivatives(model, state.mu, t)
    A, t1, t2, s1, s2 = _ad_products(G, Q)

    mean_corr = (
        -np.einsum("aij,ij->a", t1 + t2, S) / 48.0
        + 0.5 * np.einsum("aij,ij->a", hess, S)
        - 0.5 * np.einsum("iab,bj,ij->a", A, jac, S)
    )
    v2 = h + mean_corr
    # contraction of (M^Sigma)_ij with Sigma without building the 4-index tensor
    p = s1 / 8.0 + s2 / 24.0 - 0.5 * np.einsum("iab,b->ai", A, h + v2) + jac
    T = np.einsum("ij,iab,jbc->ac", S, A, A) @ Q / 12.0
    P = p @ S + T
    rate = Q + P + P.T + 0.25 * np.einsum("ij,iab,bc,jdc->ad", S, A, Q, A)
    return RhsEvaluation(h if zeroth_order_mean else v2, 0.5 * (rate + rate.T))


def emd0_rhs(model: SystemModel, state: GaussianState, t: float) -> RhsEvaluation:
    return emd2_rhs(model, state, t, zeroth_order_mean=True)


# ---------------------------------------------------------------------------
# integration


def _rhs_for(method: str, kappa: float, point_rule: Callable | None):
    key = method.upper()
    if key in ("UTD", "QUADRATURE", "EXACT-QUADRATURE-GENERIC"):
        if point_rule is None:
            return lambda m, s, t: exact_rhs_quadrature(m, s, t, kappa=kappa)
        return lambda m, s, t: exact_rhs_quadrature(m, s, t, points=point_rule(s.sigma))
    if key == "EMD2":
        return emd2_rhs
    if key == "EMD0":
        return emd0_rhs
    raise ValueError(f"unknown propagation method {method!r}")


def check_psd(sigma: np.ndarray, tol: float = PSD_TOLERANCE) -> None:
    eig = np.linalg.eigvalsh(sigma)
    if eig[0] < -tol * max(1.0, float(eig[-1])):
        raise PropagationError(f"covariance lost positive semidefiniteness (min eigenvalue {eig[0]:.3e})")


def heun_step(model: SystemModel, rhs: Callable, mu: Any, sigma: np.ndarray, t: float, dt: float):
    """One improved-Euler step for a left model: the mean moves by
    exp(dt * averaged velocity) on the left, the covariance by the averaged rate."""
    G = model.group
    r1 = rhs(model, GaussianState(mu, sigma, "right"), t)
    mu_p = G.compose(G.exp(dt * r1.mean_velocity), mu)
    sig_p = sigma + dt * r1.cov_rate
    r2 = rhs(model, GaussianState(mu_p, sig_p, "right"), t + dt)
    mu_new = G.compose(G.exp(0.5 * dt * (r1.mean_velocity + r2.mean_velocity)), mu)
    sig_new = sigma + 0.5 * dt * (r1.cov_rate + r2.cov_rate)
    return mu_new, 0.5 * (sig_new + sig_new.T)


def propagate(
    model: SystemModel,
    initial: GaussianState,
    grid,
    method: str = "EMD2",
    kappa: float = DEFAULT_KAPPA,
    point_rule: Callable | None = None,
) -> PropagationResult:
    """Integrate the moment equations on ``grid`` (needs dt, n_steps, checkpoints).

    Returns states at the grid checkpoints with the handedness of ``initial``.
    """
    rhs = _rhs_for(method, kappa, point_rule)
    G = model.group
    if np.any(np.linalg.eigvalsh(initial.sigma) < -PSD_TOLERANCE):
        raise ValueError("initial covariance is not positive semidefinite")

    flipped = model.handedness == "right"
    work_model = convert_right_system(model) if flipped else model
    state = initial
    if flipped:
        # left statistics of g are right statistics of g^-1
        if state.handedness == "right":
            state = convert_left_right(state, G)
        state = invert_state(state, G)
    elif state.handedness == "left":
        state = convert_left_right(state, G)

    def report(mu, sigma) -> GaussianState:
        out = GaussianState(mu, sigma.copy(), "right")
        if flipped:
            out = invert_state(out, G)
        if out.handedness != initial.handedness:
            out = convert_left_right(out, G)
        return out

    checkpoints = list(grid.checkpoints)
    mu, sigma = state.mu, state.sigma
    result = PropagationResult(np.asarray(checkpoints, dtype=float) * grid.dt)
    c = 0
    if checkpoints and checkpoints[0] == 0:
        result.states.append(report(mu, sigma))
        c = 1
    for k in range(grid.n_steps):
        mu, sigma = heun_step(work_model, rhs, mu, sigma, k * grid.dt, grid.dt)
        if (k + 1) % PSD_CHECK_EVERY == 0 or k + 1 == grid.n_steps:
            check_psd(sigma)
        if c < len(checkpoints) and checkpoints[c] == k + 1:
            result.states.append(report(mu, sigma))
            c += 1
    return result


def euclidean_prediction(
    model: SystemModel, state: GaussianState, grid, variant: str = "UKF", kappa: float | None = None
) -> PropagationResult:
    """Continuous-time Kalman prediction on the diagonal-exponential group.

    ``UKF`` evaluates the exact equations by quadrature (commutative group, all
    Jacobians are identity). ``EKF`` linearizes: mean rate h(x), covariance rate
    H H^T + F Sigma + Sigma F^T; on a commutative group this is exactly EMD0.
    The UKF default ``kappa`` is 3 - n, i.e. the scaled spread n + kappa = 3.
    """
    if np.any(model.group.ad_basis()):
        raise ValueError("Euclidean prediction requires a commutative (diagonal-exponential) group")
    key = variant.upper()
    if key == "UKF":
        if kappa is None:
            kappa = 3.0 - model.group.dim
        return propagate(model, state, grid, "UTD", kappa=kappa)
    if key == "EKF":
        return propagate(model, state, grid, "EMD0")
    raise ValueError(f"unknown variant {variant!r}; expected 'UKF' or 'EKF'")

