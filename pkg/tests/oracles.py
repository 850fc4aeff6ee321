"""Closed-form references shared by the test modules."""

import numpy as np
from scipy.linalg import expm


def linear_gaussian_prediction(A, Q, x0, S0, t):
    """Mean and covariance of dx = A x dt + H dW with H H^T = Q (Van Loan)."""
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = Q
    M[n:, n:] = A.T
    E = expm(M * t)
    Phi = E[n:, n:].T
    Qd = Phi @ E[:n, n:]
    return Phi @ x0, Phi @ S0 @ Phi.T + 0.5 * (Qd + Qd.T)
