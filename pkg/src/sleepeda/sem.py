"""Path models with latent variables, fitted by maximum likelihood.

Models use the reticular action (RAM) form: every variable, observed or
latent, is a node; ``A`` holds directed coefficients (``A[to, from]``),
``S`` the variances and covariances of exogenous variables and residuals,
and the observed covariance is ``F (I - A)^-1 S (I - A)^-T F'``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import graphs
from .dataset import MixedDataset
from .errors import ConfigError, ContractError, NumericalError

_TINY = 1e-12


@dataclass(frozen=True)
class PathModelSpec:
    """Measurement part (``latents``: name -> indicators) plus structural
    edges over latents and observed variables.

    The first indicator of each latent has its loading fixed to 1; a
    latent with a single indicator also has that indicator's residual
    variance fixed to 0, making the latent an exact copy of it.
    Variables without incoming structural edges are exogenous and get
    free variances and free covariances among themselves.
    """

    latents: dict
    edges: tuple = ()
    observed: tuple = ()

    def __post_init__(self):
        latents = {str(k): tuple(v) for k, v in dict(self.latents).items()}
        object.__setattr__(self, "latents", latents)
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        object.__setattr__(self, "observed", tuple(self.observed))
        seen = {}
        for lat, inds in latents.items():
            if not inds:
                raise ConfigError(f"latent {lat} has no indicators")
            for x in inds:
                if x in seen:
                    raise ConfigError(f"indicator {x} appears under both {seen[x]} and {lat}")
                if x in latents:
                    raise ConfigError(f"{x} is both a latent and an indicator")
                seen[x] = lat
        for a, b in self.edges:
            if a == b:
                raise ConfigError(f"self loop on {a}")
            if a in seen or b in seen:
                raise ConfigError("structural edges may not touch indicators; use the latent")
        nodes = self.structural_nodes()
        if graphs.topological_order(nodes, self.edges) is None:
            raise ConfigError("structural graph has a directed cycle")

    def structural_nodes(self):
        out = list(self.latents)
        for v in [x for e in self.edges for x in e] + list(self.observed):
            if v not in out:
                out.append(v)
        return tuple(out)

    def observed_variables(self):
        out = [x for inds in self.latents.values() for x in inds]
        out += [v for v in self.structural_nodes() if v not in self.latents]
        return tuple(out)

    def to_dict(self):
        return {
            "latents": {k: list(v) for k, v in self.latents.items()},
            "edges": [list(e) for e in self.edges],
            "observed": list(self.observed),
        }


@dataclass(frozen=True)
class Parameter:
    kind: str  # "loading", "path", "variance", "covariance"
    lhs: str
    rhs: str
    free: bool
    estimate: float
    std_error: float
    standardized: float

    @property
    def z(self):
        if not self.free or not self.std_error > 0:
            return float("nan")
        return self.estimate / self.std_error

    @property
    def p_value(self):
        z = self.z
        return float("nan") if math.isnan(z) else float(2 * stats.norm.sf(abs(z)))

    def label(self):
        op = {"loading": "=~", "path": "->", "variance": "~~", "covariance": "~~"}[self.kind]
        return f"{self.lhs} {op} {self.rhs}"

    def to_dict(self):
        return {
            "kind": self.kind, "lhs": self.lhs, "rhs": self.rhs, "free": self.free,
            "estimate": self.estimate, "std_error": self.std_error,
            "standardized": self.standardized, "z": self.z, "p_value": self.p_value,
        }


@dataclass(frozen=True)
class SemFit:
    parameters: tuple
    chi_square: float
    df: int
    p_value: float
    rmsea: float
    cfi: float
    chi_square_baseline: float
    df_baseline: int
    n: int
    discrepancy: float
    converged: bool
    iterations: int
    implied_covariance: np.ndarray = field(repr=False)
    variables: tuple = ()

    def parameter(self, kind, lhs, rhs):
        for p in self.parameters:
            if p.kind == kind and p.lhs == lhs and p.rhs == rhs:
                return p
        raise KeyError((kind, lhs, rhs))

    def path(self, source, target):
        return self.parameter("path", source, target)

    def to_dict(self):
        return {
            "parameters": [p.to_dict() for p in self.parameters],
            "chi_square": self.chi_square, "df": self.df, "p_value": self.p_value,
            "rmsea": self.rmsea, "cfi": self.cfi,
            "chi_square_baseline": self.chi_square_baseline, "df_baseline": self.df_baseline,
            "n": self.n, "discrepancy": self.discrepancy,
            "converged": self.converged, "iterations": self.iterations,
            "variables": list(self.variables),
        }

    def table(self) -> str:
        """Plain-text parameter table: estimate, SE, z, p, standardized."""
        rows = [f"{'parameter':<34}{'estimate':>10}{'SE':>9}{'z':>8}{'p':>8}{'std':>8}"]
        for p in self.parameters:
            se = f"{p.std_error:9.3f}" if p.free else f"{'fixed':>9}"
            z = f"{p.z:8.2f}" if p.free else f"{'':>8}"
            pv = f"{p.p_value:8.3f}" if p.free else f"{'':>8}"
            rows.append(f"{p.label():<34}{p.estimate:10.3f}{se}{z}{pv}{p.standardized:8.3f}")
        rows.append(
            f"chi2({self.df}) = {self.chi_square:.2f}, p = {self.p_value:.3f}, "
            f"RMSEA = {self.rmsea:.3f}, CFI = {self.cfi:.3f}, n = {self.n}"
        )
        return "\n".join(rows) + "\n"


def fit_indices(chi_square, df, n, chi_square_baseline, df_baseline):
    """RMSEA, CFI and the chi-square p-value.

    Returns
    -------
    rmsea, cfi, p_value : float
    """
    if df < 0 or n < 2:
        raise ContractError(f"need df >= 0 and n >= 2 (df={df}, n={n})")
    if chi_square < 0:
        raise ContractError("chi-square must be non-negative")
    if df == 0:
        if chi_square > 1e-8:
            raise ContractError(f"df = 0 with chi-square {chi_square:g} > 0")
        rmsea, p = 0.0, 1.0
    else:
        rmsea = math.sqrt(max(chi_square - df, 0.0) / (df * (n - 1)))
        p = float(stats.chi2.sf(chi_square, df))
    excess = max(chi_square - df, 0.0)
    denom = max(chi_square_baseline - df_baseline, chi_square - df, _TINY)
    cfi = min(max(1.0 - excess / denom, 0.0), 1.0)
    return rmsea, cfi, p


def ml_discrepancy(sigma, S):
    """``ln|Sigma| + tr(S Sigma^-1) - ln|S| - p``; inf if Sigma is not PD."""
    p = S.shape[0]
    try:
        c = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return math.inf
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    _, logdet_s = np.linalg.slogdet(S)
    inv = np.linalg.inv(sigma)
    return float(logdet + np.trace(S @ inv) - logdet_s - p)


class _Ram:
    """Free/fixed parameter layout of one model over an observed order."""

    def __init__(self, spec: PathModelSpec):
        self.spec = spec
        self.observed = spec.observed_variables()
        self.latent = tuple(spec.latents)
        self.names = self.observed + self.latent
        idx = {v: i for i, v in enumerate(self.names)}
        self.idx = idx
        m = len(self.names)
        self.m = m
        self.p = len(self.observed)
        self.A0 = np.zeros((m, m))
        self.S0 = np.zeros((m, m))
        self.free = []  # (matrix, i, j, kind, lhs, rhs)
        self.fixed = []
        for lat, inds in spec.latents.items():
            for k, x in enumerate(inds):
                entry = ("A", idx[x], idx[lat], "loading", lat, x)
                if k == 0:
                    self.A0[idx[x], idx[lat]] = 1.0
                    self.fixed.append(entry)
                else:
                    self.free.append(entry)
        for a, b in spec.edges:
            self.free.append(("A", idx[b], idx[a], "path", a, b))
        has_parent = {b for _, b in spec.edges}
        single = {inds[0] for inds in spec.latents.values() if len(inds) == 1}
        exo = [v for v in spec.structural_nodes() if v not in has_parent]
        for v in self.names:
            if v in single:
                self.fixed.append(("S", idx[v], idx[v], "variance", v, v))
            else:
                self.free.append(("S", idx[v], idx[v], "variance", v, v))
        for a_i, a in enumerate(exo):
            for b in exo[a_i + 1:]:
                self.free.append(("S", idx[a], idx[b], "covariance", a, b))
        self.F = np.zeros((self.p, m))
        self.F[np.arange(self.p), np.arange(self.p)] = 1.0

    @property
    def q(self):
        return len(self.free)

    def matrices(self, theta):
        A, S = self.A0.copy(), self.S0.copy()
        for t, (mat, i, j, *_) in zip(theta, self.free):
            if mat == "A":
                A[i, j] = t
            else:
                S[i, j] = S[j, i] = t
        return A, S

    def implied(self, theta):
        A, S = self.matrices(theta)
        B = np.linalg.inv(np.eye(self.m) - A)
        G = self.F @ B
        return G @ S @ G.T, A, S, B, G

    def objective(self, theta, Sobs):
        sigma, A, S, B, G = self.implied(theta)
        f = ml_discrepancy(sigma, Sobs)
        if not math.isfinite(f):
            return 1e10, np.zeros_like(theta)
        inv = np.linalg.inv(sigma)
        M = inv - inv @ Sobs @ inv
        GMG = G.T @ M @ G
        dA = 2.0 * GMG @ S @ B.T
        grad = np.empty_like(theta)
        for k, (mat, i, j, *_) in enumerate(self.free):
            if mat == "A":
                grad[k] = dA[i, j]
            else:
                grad[k] = GMG[i, j] * (1.0 if i == j else 2.0)
        return f, grad

    def rescale(self, theta, d):
        """Parameters of the same model after multiplying observed
        variable ``i`` by ``d[i]``. Each latent takes its marker's scale,
        which keeps the fixed unit loadings at 1."""
        A, S = self.matrices(theta)
        t = np.ones(self.m)
        t[: self.p] = d
        for lat, inds in self.spec.latents.items():
            t[self.idx[lat]] = d[self.idx[inds[0]]]
        A = A * np.outer(t, 1.0 / t)
        S = S * np.outer(t, t)
        return np.array([(A if mat == "A" else S)[i, j] for mat, i, j, *_ in self.free])

    def jacobians(self, theta):
        """d Sigma / d theta_k for every free parameter."""
        _, A, S, B, G = self.implied(theta)
        out = []
        for mat, i, j, *_ in self.free:
            if mat == "A":
                E = np.zeros((self.m, self.m))
                E[i, j] = 1.0
                D = G @ E @ B @ S @ G.T
                out.append(D + D.T)
            else:
                out.append(np.outer(G[:, i], G[:, j]) + (np.outer(G[:, j], G[:, i]) if i != j else 0.0))
        return out

    def start(self, Sobs):
        v = np.diag(Sobs)
        idx = self.idx
        theta = []
        lat_var = {}
        for lat, inds in self.spec.latents.items():
            first = idx[inds[0]]
            lat_var[lat] = v[first] if len(inds) == 1 else 0.5 * v[first]
        for mat, i, j, kind, lhs, rhs in self.free:
            if kind == "loading":
                first = idx[self.spec.latents[lhs][0]]
                c = Sobs[i, first]
                theta.append(c / lat_var[lhs] if abs(c) > 1e-8 else 0.5)
            elif kind == "path" or kind == "covariance":
                theta.append(0.0)
            elif lhs in lat_var:
                theta.append(lat_var[lhs])
            else:
                theta.append(0.5 * v[i] if self._has_parent(lhs) or self._is_indicator(lhs) else v[i])
        return np.asarray(theta, dtype=np.float64)

    def _has_parent(self, v):
        return any(b == v for _, b in self.spec.edges)

    def _is_indicator(self, v):
        return any(v in inds for inds in self.spec.latents.values())


def _sample_covariance(data: MixedDataset, names):
    X = data.matrix(names)
    S = np.cov(X, rowvar=False, ddof=1)
    S = np.atleast_2d(S)
    if np.linalg.eigvalsh(S)[0] <= 1e-12 * max(1.0, np.max(np.diag(S))):
        raise NumericalError("sample covariance is not positive definite")
    return S


def fit_path_model(spec: PathModelSpec, data: MixedDataset, max_iter=1000, gtol=1e-6) -> SemFit:
    """Fit ``spec`` to ``data`` by maximum likelihood.

    Discrete columns enter as numeric codes. The chi-square is
    ``(n - 1) F`` at the optimum, with ``S`` the unbiased sample
    covariance; standard errors come from the expected information.
    """
    ram = _Ram(spec)
    missing = [v for v in ram.observed if v not in data.names]
    if missing:
        raise ConfigError(f"variables not in the data: {', '.join(missing)}")
    n = data.n
    if n <= ram.q:
        raise ConfigError(f"n = {n} does not exceed the {ram.q} free parameters")
    Sobs = _sample_covariance(data, ram.observed)
    p = ram.p
    # fit on the correlation scale so that the search path does not depend
    # on the units of the columns, then map the solution back exactly
    d = np.sqrt(np.diag(Sobs))
    Sc = Sobs / np.outer(d, d)
    res = optimize.minimize(
        ram.objective, ram.start(Sc), args=(Sc,), jac=True, method="BFGS",
        options={"gtol": gtol, "maxiter": max_iter},
    )
    f, grad = ram.objective(res.x, Sc)
    converged = bool(np.max(np.abs(grad)) < gtol * 10) and f < 1e9
    theta = ram.rescale(res.x, d)
    sigma, A, S, B, _ = ram.implied(theta)
    df = p * (p + 1) // 2 - ram.q
    if df < 0:
        raise ConfigError(f"model is not identified: {ram.q} parameters for {p * (p + 1) // 2} moments")
    f = max(f, 0.0)
    chi = (n - 1) * f
    if df == 0 and chi <= 1e-6:
        chi = 0.0
    chi_b = (n - 1) * (float(np.sum(np.log(np.diag(Sobs)))) - float(np.linalg.slogdet(Sobs)[1]))
    df_b = p * (p + 1) // 2 - p
    rmsea, cfi, pval = fit_indices(chi, df, n, chi_b, df_b)

    inv = np.linalg.inv(sigma)
    J = ram.jacobians(theta)
    P = [inv @ d for d in J]
    info = np.array([[0.5 * (n - 1) * np.trace(a @ b) for b in P] for a in P])
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(ram.q, np.nan)

    omega = B @ S @ B.T  # all-variable implied covariance
    sd = np.sqrt(np.clip(np.diag(omega), 0.0, None))

    def standardize(mat, i, j, value):
        if mat == "A":
            return value * sd[j] / sd[i] if sd[i] > 0 else float("nan")
        if sd[i] > 0 and sd[j] > 0:
            return value / (sd[i] * sd[j])
        return float("nan")

    params = []
    entries = [(e, True, k) for k, e in enumerate(ram.free)] + [(e, False, None) for e in ram.fixed]
    for (mat, i, j, kind, lhs, rhs), free, k in entries:
        value = (A if mat == "A" else S)[i, j]
        params.append(Parameter(
            kind, lhs, rhs, free, float(value),
            float(se[k]) if free else 0.0,
            float(standardize(mat, i, j, value)),
        ))
    order = {"loading": 0, "path": 1, "covariance": 2, "variance": 3}
    params.sort(key=lambda p: (order[p.kind], ram.names.index(p.lhs), ram.names.index(p.rhs)))
    return SemFit(
        parameters=tuple(params), chi_square=float(chi), df=int(df), p_value=pval,
        rmsea=rmsea, cfi=cfi, chi_square_baseline=chi_b, df_baseline=df_b, n=n,
        discrepancy=f, converged=converged, iterations=int(res.nit),
        implied_covariance=sigma, variables=ram.observed,
    )


def figure_model(magnitude=("peak_epoch_count", "storm_mean", "storm_sd", "storm_max", "peak_count"),
                 storms=("storm_count",), se="SE", sq="SQ", extra_edges=()) -> PathModelSpec:
    """The two-factor measurement model with Magnitude -> SE -> SQ."""
    edges = (("Magnitude", se), (se, sq)) + tuple(extra_edges)
    return PathModelSpec({"Magnitude": tuple(magnitude), "Storms": tuple(storms)}, edges)
