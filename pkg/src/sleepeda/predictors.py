"""Regression and classification of sleep outcomes.

OLS for SE, logistic regression (IRLS) and Gaussian naive Bayes for SQ,
k-fold cross-validation with pooled out-of-fold predictions, and the
reporting metrics (AUC, support-weighted F1/precision/recall, RMSE, MAE).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import graphs
from .errors import ConfigError, DomainError, FoldError, SeparationError, SingularError

VARIANCE_FLOOR = 1e-9


def _design(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ConfigError("predictors must be a 2-D array")
    return X


def _names(names, p):
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ConfigError(f"{len(names)} names for {p} predictor columns")
    return names


def _binary(y):
    y = np.asarray(y)
    if not np.all(np.isin(y, (0, 1))):
        raise ConfigError("binary outcome must be coded 0/1")
    y = y.astype(np.float64)
    if y.min() == y.max():
        raise DomainError("outcome has a single class")
    return y


# ------------------------------------------------------------------- OLS

@dataclass(frozen=True)
class RegressionFit:
    names: tuple
    coefficients: np.ndarray
    intercept: float
    residual_variance: float
    r_squared: float
    r_squared_adjusted: float
    f_statistic: float
    df: tuple
    p_value: float
    n: int

    def coefficient(self, name):
        return float(self.coefficients[self.names.index(name)])

    def predict(self, X):
        return self.intercept + _design(X) @ self.coefficients

    def to_dict(self):
        return {
            "coefficients": dict(zip(self.names, map(float, self.coefficients))),
            "intercept": self.intercept,
            "residual_variance": self.residual_variance,
            "r_squared": self.r_squared,
            "r_squared_adjusted": _num(self.r_squared_adjusted),
            "f_statistic": _num(self.f_statistic),
            "df": list(self.df),
            "p_value": _num(self.p_value),
            "n": self.n,
        }


def ols_fit(y, X, names=None) -> RegressionFit:
    """Least squares with intercept; F test against the intercept-only model.

    With exactly ``p + 1`` rows the fit interpolates: R^2 = 1 and the
    adjusted R^2, F and p are undefined (NaN).
    """
    X = _design(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,):
        raise ConfigError("y and X differ in length")
    if n < p + 1:
        raise ConfigError(f"need at least {p + 1} rows for {p} predictors, got {n}")
    D = np.column_stack([np.ones(n), X])
    beta, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
    if rank < p + 1:
        raise SingularError("design matrix is rank deficient")
    resid = y - D @ beta
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    df_res = n - p - 1
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    if df_res == 0:
        return RegressionFit(_names(names, p), beta[1:], float(beta[0]), 0.0, 1.0,
                             math.nan, math.nan, (p, 0), math.nan, n)
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / df_res
    sigma2 = rss / df_res
    if p == 0:
        f, pv = math.nan, math.nan
    elif rss <= 1e-300:
        f, pv = math.inf, 0.0
    else:
        f = ((tss - rss) / p) / sigma2
        pv = float(stats.f.sf(f, p, df_res))
    return RegressionFit(_names(names, p), beta[1:], float(beta[0]), sigma2, r2, r2_adj, f, (p, df_res), pv, n)


# -------------------------------------------------------------- logistic

def logistic_loglik_grad(beta, D, y, ridge=0.0):
    """Log-likelihood and gradient; ``D`` includes the intercept column.

    The optional ridge term ``-ridge/2 * |beta[1:]|^2`` leaves the
    intercept unpenalized.
    """
    eta = D @ beta
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    mu = 1.0 / (1.0 + np.exp(-eta))
    grad = D.T @ (y - mu)
    if ridge:
        b = beta.copy()
        b[0] = 0.0
        ll -= 0.5 * ridge * float(b @ b)
        grad = grad - ridge * b
    return ll, grad


@dataclass(frozen=True)
class LogisticFit:
    names: tuple
    coefficients: np.ndarray
    intercept: float
    std_errors: np.ndarray
    wald_chi_square: np.ndarray
    wald_p: np.ndarray
    loglik: float
    loglik_null: float
    model_chi_square: float
    model_df: int
    model_p: float
    cox_snell_r2: float
    converged: bool
    iterations: int
    loglik_history: tuple = ()
    n: int = 0

    @property
    def odds_ratios(self):
        return np.exp(self.coefficients)

    def coefficient(self, name):
        return float(self.coefficients[self.names.index(name)])

    def predict_proba(self, X):
        eta = self.intercept + _design(X) @ self.coefficients
        return 1.0 / (1.0 + np.exp(-eta))

    def to_dict(self):
        return {
            "coefficients": dict(zip(self.names, map(float, self.coefficients))),
            "intercept": self.intercept,
            "odds_ratios": dict(zip(self.names, map(float, self.odds_ratios))),
            "std_errors": dict(zip(self.names, map(float, self.std_errors[1:]))),
            "wald_chi_square": dict(zip(self.names, map(float, self.wald_chi_square[1:]))),
            "wald_p": dict(zip(self.names, map(float, self.wald_p[1:]))),
            "loglik": self.loglik,
            "model_chi_square": self.model_chi_square,
            "model_df": self.model_df,
            "model_p": self.model_p,
            "cox_snell_r2": self.cox_snell_r2,
            "converged": self.converged,
            "iterations": self.iterations,
            "n": self.n,
        }


def logistic_fit(y, X, names=None, ridge=0.0, max_iter=100, tol=1e-10, max_coef=30.0) -> LogisticFit:
    """Binary logistic regression by iteratively reweighted least squares.

    Each Newton step is halved until the log-likelihood does not decrease.
    Raises :class:`SeparationError` when a standardized coefficient runs
    past ``max_coef`` (the likelihood has no finite maximum).
    """
    X = _design(X)
    y = _binary(y)
    n, p = X.shape
    if y.shape != (n,):
        raise ConfigError("y and X differ in length")
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    names = _names(names, p)
    D = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(D) < p + 1:
        raise SingularError("design matrix is rank deficient")
    scale = np.concatenate([[1.0], X.std(axis=0)])
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    beta = np.zeros(p + 1)
    ybar = y.mean()
    beta[0] = math.log(ybar / (1 - ybar))
    ll, _ = logistic_loglik_grad(beta, D, y, ridge)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 1.0 / (1.0 + np.exp(-(D @ beta)))
        w = mu * (1 - mu)
        H = D.T @ (D * w[:, None]) + np.diag(pen)
        _, g = logistic_loglik_grad(beta, D, y, ridge)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new, _ = logistic_loglik_grad(cand, D, y, ridge)
            if ll_new >= ll - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        beta, ll_old, ll = cand, ll, ll_new
        history.append(ll)
        big = np.abs(beta[1:] * scale[1:])
        if big.size and big.max() > max_coef:
            j = int(np.argmax(big))
            direction = "positive" if beta[j + 1] > 0 else "negative"
            raise SeparationError(names[j], direction)
        if abs(ll - ll_old) < tol * (abs(ll) + tol) and np.max(np.abs(t * step)) < 1e-8:
            converged = True
            break
    mu = 1.0 / (1.0 + np.exp(-(D @ beta)))
    H = D.T @ (D * (mu * (1 - mu))[:, None]) + np.diag(pen)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularError("information matrix is singular") from None
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    wald = (beta / se) ** 2
    ll_model = float(np.sum(y * np.log(np.clip(mu, 1e-300, 1)) + (1 - y) * np.log(np.clip(1 - mu, 1e-300, 1))))
    ll0 = float(n * (ybar * math.log(ybar) + (1 - ybar) * math.log(1 - ybar)))
    chi = max(2.0 * (ll_model - ll0), 0.0)
    return LogisticFit(
        names=names, coefficients=beta[1:].copy(), intercept=float(beta[0]), std_errors=se,
        wald_chi_square=wald, wald_p=stats.chi2.sf(wald, 1), loglik=ll_model, loglik_null=ll0,
        model_chi_square=chi, model_df=p, model_p=float(stats.chi2.sf(chi, p)) if p else math.nan,
        cox_snell_r2=1.0 - math.exp(-chi / n), converged=converged, iterations=it,
        loglik_history=tuple(history), n=n,
    )


# ----------------------------------------------------------- naive Bayes

@dataclass(frozen=True)
class NaiveBayesFit:
    names: tuple
    priors: np.ndarray  # (2,) for classes 0, 1
    means: np.ndarray  # (2, p)
    variances: np.ndarray  # (2, p)
    floored: np.ndarray  # (2, p) bool

    def log_joint(self, X):
        X = _design(X)
        out = np.empty((X.shape[0], 2))
        for c in range(2):
            v = self.variances[c]
            out[:, c] = math.log(self.priors[c]) - 0.5 * np.sum(
                np.log(2 * np.pi * v) + (X - self.means[c]) ** 2 / v, axis=1
            )
        return out

    def predict_proba(self, X):
        lj = self.log_joint(X)
        lj -= np.logaddexp(lj[:, 0], lj[:, 1])[:, None]
        return np.exp(lj)

    def to_dict(self):
        return {
            "names": list(self.names),
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "floored": self.floored.tolist(),
        }


def naive_bayes_fit(y, X, names=None) -> NaiveBayesFit:
    """Gaussian class-conditional densities (ML variances) and empirical priors."""
    X = _design(X)
    y = _binary(y)
    n, p = X.shape
    if y.shape != (n,):
        raise ConfigError("y and X differ in length")
    means = np.empty((2, p))
    var = np.empty((2, p))
    for c in range(2):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        var[c] = Xc.var(axis=0)
    floored = var < VARIANCE_FLOOR
    var = np.maximum(var, VARIANCE_FLOOR)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    return NaiveBayesFit(_names(names, p), priors, means, var, floored)


def naive_bayes_predict(fit: NaiveBayesFit, X):
    """Posterior class probabilities, shape (n, 2)."""
    return fit.predict_proba(X)


# ---------------------------------------------------------------- metrics

def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _binary(labels)
    ranks = stats.rankdata(scores)
    n1 = labels.sum()
    n0 = labels.size - n1
    return float((ranks[labels == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


@dataclass(frozen=True)
class ClassificationMetrics:
    auc: float
    f1: float
    precision: float
    recall: float
    per_class: dict
    threshold: float

    def to_dict(self):
        return {
            "auc": self.auc, "f1": self.f1, "precision": self.precision, "recall": self.recall,
            "per_class": {str(k): v for k, v in self.per_class.items()}, "threshold": self.threshold,
        }


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def classification_metrics(scores, labels, threshold=0.5) -> ClassificationMetrics:
    """AUC plus precision, recall and F1 per class and support-weighted."""
    scores = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    if scores.shape != y.shape:
        raise ConfigError("scores and labels differ in length")
    pred = (scores >= threshold).astype(np.float64)
    per = {}
    for c in (0, 1):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        pr, rc, f1 = _prf(tp, fp, fn)
        per[c] = {"precision": pr, "recall": rc, "f1": f1, "support": int(np.sum(y == c))}
    w = np.array([per[0]["support"], per[1]["support"]], dtype=np.float64) / y.size
    avg = {m: float(w[0] * per[0][m] + w[1] * per[1][m]) for m in ("precision", "recall", "f1")}
    return ClassificationMetrics(auc_score(scores, y), avg["f1"], avg["precision"], avg["recall"], per, threshold)


def partial_correlation(x, y, controls=None):
    """Correlation of x and y after regressing both on ``controls``.

    Returns
    -------
    r, p_value : float
        p from ``t = r sqrt(df / (1 - r^2))`` with ``df = n - c - 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    C = np.zeros((n, 0)) if controls is None else _design(controls)
    c = C.shape[1]
    if y.size != n or C.shape[0] != n:
        raise ConfigError("columns differ in length")
    if n <= c + 2:
        raise ConfigError(f"need more than {c + 2} rows, got {n}")
    D = np.column_stack([np.ones(n), C])
    rx = x - D @ np.linalg.lstsq(D, x, rcond=None)[0]
    ry = y - D @ np.linalg.lstsq(D, y, rcond=None)[0]
    sx, sy = math.sqrt(rx @ rx), math.sqrt(ry @ ry)
    tiny = 1e-12
    if sx <= tiny * max(1.0, math.sqrt(x @ x)) or sy <= tiny * max(1.0, math.sqrt(y @ y)):
        raise DomainError("a residual has zero variance")
    r = float(np.clip(rx @ ry / (sx * sy), -1.0, 1.0))
    df = n - c - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt(df / (1 - r * r))
    return r, float(2 * stats.t.sf(abs(t), df))


# ------------------------------------------------------- cross-validation

class ModelKind(enum.Enum):
    OLS = "ols"
    LOGISTIC = "logistic"
    NB = "nb"


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class EvalReport:
    model: str
    k: int
    seed: int
    n: int
    predictors: tuple
    auc: float = math.nan
    f1: float = math.nan
    precision: float = math.nan
    recall: float = math.nan
    rmse: float = math.nan
    mae: float = math.nan
    per_class: dict = field(default_factory=dict)
    folds: tuple = ()
    fold_of: np.ndarray = field(default=None, repr=False)
    predictions: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "model": self.model, "k": self.k, "seed": self.seed, "n": self.n,
            "predictors": list(self.predictors),
            "auc": _num(self.auc), "f1": _num(self.f1), "precision": _num(self.precision),
            "recall": _num(self.recall), "rmse": _num(self.rmse), "mae": _num(self.mae),
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "folds": [{k: (_num(v) if isinstance(v, float) else v) for k, v in f.items()} for f in self.folds],
        }


def fold_assignment(n, k, seed):
    """Fold index per row: seeded permutation split into ``k`` near-equal parts."""
    if not 2 <= k <= n:
        raise ConfigError(f"k must lie in [2, {n}], got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for f, rows in enumerate(np.array_split(perm, k)):
        fold_of[rows] = f
    return fold_of


def _fit_predict(kind, y_tr, X_tr, X_te, ridge):
    if kind is ModelKind.OLS:
        return ols_fit(y_tr, X_tr).predict(X_te)
    if kind is ModelKind.LOGISTIC:
        return logistic_fit(y_tr, X_tr, ridge=ridge).predict_proba(X_te)
    return naive_bayes_fit(y_tr, X_tr).predict_proba(X_te)[:, 1]


def cross_validate(model_kind, y, X, k=10, seed=0, names=None, threshold=0.5, ridge=0.0) -> EvalReport:
    """k-fold cross-validation; metrics are computed once on the pooled
    out-of-fold predictions. Per-fold rows carry the fold's own RMSE/MAE
    (regression) or accuracy and Brier score (classification)."""
    kind = ModelKind(model_kind)
    X = _design(X)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if y.shape != (n,):
        raise ConfigError("y and X differ in length")
    if kind is not ModelKind.OLS:
        _binary(y)
    fold_of = fold_assignment(n, k, seed)
    pred = np.empty(n)
    folds = []
    for f in range(k):
        te = fold_of == f
        tr = ~te
        if kind is not ModelKind.OLS and np.unique(y[tr]).size < 2:
            raise FoldError(f"training data for fold {f} has a single class")
        pred[te] = _fit_predict(kind, y[tr], X[tr], X[te], ridge)
        err = pred[te] - y[te]
        row = {"fold": f, "n_test": int(te.sum())}
        if kind is ModelKind.OLS:
            row.update(rmse=float(np.sqrt(np.mean(err**2))), mae=float(np.mean(np.abs(err))))
        else:
            row.update(accuracy=float(np.mean((pred[te] >= threshold) == (y[te] == 1))),
                       brier=float(np.mean(err**2)))
        folds.append(row)
    names = _names(names, X.shape[1])
    common = dict(model=kind.value, k=k, seed=int(seed), n=n, predictors=names,
                  folds=tuple(folds), fold_of=fold_of, predictions=pred)
    if kind is ModelKind.OLS:
        err = pred - y
        return EvalReport(rmse=float(np.sqrt(np.mean(err**2))), mae=float(np.mean(np.abs(err))), **common)
    m = classification_metrics(pred, y, threshold)
    return EvalReport(auc=m.auc, f1=m.f1, precision=m.precision, recall=m.recall,
                      per_class=m.per_class, **common)


def roc_points(scores, labels):
    """ROC curve vertices (fpr, tpr, threshold), from (0, 0) to (1, 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    thr = np.unique(scores)[::-1]
    n1, n0 = y.sum(), y.size - y.sum()
    pts = [(0.0, 0.0, math.inf)]
    for t in thr:
        pos = scores >= t
        pts.append((float(np.sum(pos & (y == 0)) / n0), float(np.sum(pos & (y == 1)) / n1), float(t)))
    return pts


def blanket_predictors(dag: graphs.Dag, target) -> tuple:
    """Features offered to a model of ``target``: its Markov blanket, sorted."""
    return tuple(sorted(graphs.markov_blanket(dag, target)))
