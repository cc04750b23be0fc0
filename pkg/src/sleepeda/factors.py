"""Exploratory factor analysis.

Maximum-likelihood extraction on the correlation matrix, Kaiser retention
(eigenvalue > 1), varimax-then-promax oblique rotation and regression
(Thomson) factor scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConfigError, NoFactorsRetained, NumericalError

UNIQUENESS_FLOOR = 0.005


@dataclass(frozen=True)
class StandardizedMatrix:
    values: np.ndarray
    columns: tuple

    @classmethod
    def from_array(cls, X, columns=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ConfigError("data must be a 2-D array")
        if not np.all(np.isfinite(X)):
            raise ConfigError("data contain missing or non-finite values")
        sd = X.std(axis=0, ddof=1)
        if np.any(sd <= 0):
            raise NumericalError("a column has zero variance")
        Z = (X - X.mean(axis=0)) / sd
        # second pass removes residual rounding in the mean
        Z -= Z.mean(axis=0)
        Z /= Z.std(axis=0, ddof=1)
        if columns is None:
            columns = tuple(f"x{j}" for j in range(X.shape[1]))
        return cls(Z, tuple(columns))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def correlation(self):
        R = self.values.T @ self.values / (self.n - 1)
        R = (R + R.T) / 2
        np.fill_diagonal(R, 1.0)
        return R


@dataclass(frozen=True)
class FactorSolution:
    k: int
    loadings: np.ndarray
    uniquenesses: np.ndarray
    eigenvalues: np.ndarray
    factor_correlations: np.ndarray
    variance_explained: np.ndarray
    unrotated_loadings: np.ndarray
    heywood: np.ndarray
    columns: tuple = ()
    converged: bool = True
    discrepancy: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def structure(self):
        return self.loadings @ self.factor_correlations

    def implied_correlation(self):
        L = self.loadings
        return L @ self.factor_correlations @ L.T + np.diag(self.uniquenesses)

    def to_dict(self):
        return {
            "k": self.k,
            "columns": list(self.columns),
            "eigenvalues": self.eigenvalues.tolist(),
            "loadings": self.loadings.tolist(),
            "unrotated_loadings": self.unrotated_loadings.tolist(),
            "uniquenesses": self.uniquenesses.tolist(),
            "factor_correlations": self.factor_correlations.tolist(),
            "variance_explained": self.variance_explained.tolist(),
            "heywood": [bool(h) for h in self.heywood],
            "converged": bool(self.converged),
            "discrepancy": float(self.discrepancy),
        }


def _orient(L, phi=None):
    """Flip columns so each one's largest-magnitude entry is positive."""
    L = L.copy()
    signs = np.ones(L.shape[1])
    for j in range(L.shape[1]):
        if L[np.argmax(np.abs(L[:, j])), j] < 0:
            signs[j] = -1.0
    L *= signs
    if phi is None:
        return L
    return L, phi * np.outer(signs, signs)


def _ml_loadings(R, psi, k):
    s = 1.0 / np.sqrt(psi)
    Rs = R * np.outer(s, s)
    theta, vecs = np.linalg.eigh(Rs)
    order = np.argsort(theta)[::-1]
    theta, vecs = theta[order], vecs[:, order]
    lam = np.sqrt(np.maximum(theta[:k] - 1.0, 0.0))
    return (np.sqrt(psi)[:, None] * vecs[:, :k]) * lam, theta


def ml_discrepancy(R, psi, k):
    """Concentrated ML discrepancy and its gradient in the uniquenesses."""
    L, theta = _ml_loadings(R, psi, k)
    rest = theta[k:]
    f = float(np.sum(rest - np.log(rest) - 1.0))
    sigma_diag = np.sum(L * L, axis=1) + psi
    grad = (sigma_diag - np.diag(R)) / psi**2
    return f, grad


def ml_extract(R, k, max_iter=500, tol=1e-7):
    """Fit ``k`` factors by maximum likelihood.

    The uniquenesses are optimized within [UNIQUENESS_FLOOR, 1]; loadings
    follow in closed form from the eigen-structure of the
    uniqueness-scaled correlation matrix.

    Returns
    -------
    loadings : ndarray (p, k)
    psi : ndarray (p,)
    info : dict with ``converged``, ``discrepancy``, ``iterations``
    """
    p = R.shape[0]
    try:
        start = (1.0 - 0.5 * k / p) / np.diag(np.linalg.inv(R))
    except np.linalg.LinAlgError:
        raise NumericalError("correlation matrix is singular") from None
    start = np.clip(start, UNIQUENESS_FLOOR, 1.0)
    res = optimize.minimize(
        lambda psi: ml_discrepancy(R, psi, k),
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(UNIQUENESS_FLOOR, 1.0)] * p,
        options={"maxiter": max_iter, "ftol": 1e-15, "gtol": tol * 1e-2},
    )
    psi = res.x
    L, _ = _ml_loadings(R, psi, k)
    return _orient(L), psi, {
        "converged": bool(res.success) or res.nit < max_iter,
        "discrepancy": float(res.fun),
        "iterations": int(res.nit),
    }


def varimax(L, normalize=False, max_iter=1000, tol=1e-12):
    """Orthogonal varimax rotation (SVD iteration).

    Returns the rotated loadings and the rotation matrix ``T`` with
    ``rotated = L @ T``.
    """
    L = np.asarray(L, dtype=np.float64)
    p, k = L.shape
    if k < 2:
        return L.copy(), np.eye(k)
    h = np.sqrt(np.sum(L * L, axis=1)) if normalize else np.ones(p)
    A = L / h[:, None]
    T = np.eye(k)
    # the criterion is flat at the optimum, so convergence is judged on
    # the rotation itself rather than on the criterion value
    for _ in range(max_iter):
        B = A @ T
        G = A.T @ (B**3 - B @ np.diag(np.sum(B * B, axis=0)) / p)
        U, _, Vt = np.linalg.svd(G)
        T_new = U @ Vt
        step = np.abs(T_new - T).max()
        T = T_new
        if step < tol:
            break
    return (A @ T) * h[:, None], T


def promax_rotate(L, power=4, normalize=False):
    """Promax rotation of unrotated loadings.

    Varimax first, then a least-squares oblique transform of the varimax
    loadings toward the target ``sign(V) * |V| ** power``; the transform's
    columns are scaled so the factor correlation matrix has a unit
    diagonal. Factors are returned ordered by explained variance and
    sign-oriented.

    Returns
    -------
    pattern : ndarray (p, k)
    factor_correlations : ndarray (k, k)
    """
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[1] < 1:
        raise ConfigError("need at least one factor")
    if power < 1:
        raise ConfigError("promax power must be >= 1")
    k = L.shape[1]
    if k == 1:
        return L.copy(), np.eye(1)
    V, _ = varimax(L, normalize=normalize)
    target = np.sign(V) * np.abs(V) ** power
    if np.linalg.matrix_rank(V) < k or np.linalg.matrix_rank(target) < k:
        raise NumericalError("promax target is rank deficient")
    U, *_ = np.linalg.lstsq(V, target, rcond=None)
    try:
        d = np.diag(np.linalg.inv(U.T @ U))
        U = U * np.sqrt(d)
        Ui = np.linalg.inv(U)
    except np.linalg.LinAlgError:
        raise NumericalError("promax transform is singular") from None
    pattern = V @ U
    phi = Ui @ Ui.T
    order = np.argsort(-np.sum(pattern * pattern, axis=0), kind="stable")
    pattern = pattern[:, order]
    phi = phi[np.ix_(order, order)]
    pattern, phi = _orient(pattern, phi)
    return pattern, (phi + phi.T) / 2


def efa_fit(data: StandardizedMatrix, power=4, n_factors=None, max_iter=500) -> FactorSolution:
    """Run the full EFA: Kaiser retention, ML extraction, promax rotation.

    ``n_factors`` overrides the Kaiser rule when given.
    """
    n, p = data.values.shape
    if n <= p:
        raise ConfigError(f"EFA needs more rows than columns (n={n}, p={p})")
    R = data.correlation()
    eig = np.sort(np.linalg.eigvalsh(R))[::-1]
    if eig[-1] < 1e-10:
        raise NumericalError("correlation matrix is singular")
    k = int(np.sum(eig > 1.0)) if n_factors is None else int(n_factors)
    if k == 0:
        raise NoFactorsRetained(eig)
    if k >= p:
        raise ConfigError(f"cannot extract {k} factors from {p} variables")
    L0, psi, info = ml_extract(R, k, max_iter=max_iter)
    pattern, phi = promax_rotate(L0, power=power)
    return FactorSolution(
        k=k,
        loadings=pattern,
        uniquenesses=psi,
        eigenvalues=eig,
        factor_correlations=phi,
        variance_explained=eig[:k] / p,
        unrotated_loadings=L0,
        heywood=psi <= UNIQUENESS_FLOOR + 1e-8,
        columns=data.columns,
        converged=info["converged"],
        discrepancy=info["discrepancy"],
    )


def factor_scores(data: StandardizedMatrix, solution: FactorSolution) -> np.ndarray:
    """Regression (Thomson) scores ``Z R^-1 S`` with S the structure matrix."""
    if solution.columns and tuple(solution.columns) != tuple(data.columns):
        raise ConfigError("solution was fitted on different columns")
    R = data.correlation()
    try:
        W = np.linalg.solve(R, solution.structure)
    except np.linalg.LinAlgError:
        raise NumericalError("correlation matrix is singular") from None
    scores = data.values @ W
    return scores - scores.mean(axis=0)
