"""Full-covariance Gaussian mixture fitting by expectation-maximization.

Hand-rolled rather than delegated so the pieces the rest of the package
depends on are actually guaranteed: a per-iteration log-likelihood trace,
deterministic k-means++ / Lloyd initialisation from an explicit seed, a
documented empty-component rule, and covariance regularisation that
escalates instead of silently producing garbage.

All probability work happens in the log domain.  Per-component densities go
through a Cholesky factor of the regularised covariance; responsibilities
are normalised with log-sum-exp.  With a fixed seed the whole fit is
bit-for-bit reproducible on a given platform.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .rng import np_generator

_LOG_2PI = float(np.log(2.0 * np.pi))
_EMPTY_NK = 1e-10       # below this a component is treated as empty
_REG_CEILING = 1e-2     # escalation stops here
_LLOYD_ITERS = 10


class GmmDataError(ValueError):
    """Input data unusable: wrong shape, non-finite, or fewer points than components."""


class GmmNumericalError(RuntimeError):
    """Covariance stayed non-positive-definite at the maximum regularisation."""


@dataclass(frozen=True)
class GmmConfig:
    n_components: int
    reg_covar: float = 1e-6
    max_iter: int = 100
    tol: float = 1e-3
    seed: int = 0
    n_init: int = 1

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        if not self.reg_covar > 0:
            raise ValueError(f"reg_covar must be > 0, got {self.reg_covar}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {self.n_init}")


@dataclass
class GmmModel:
    weights: np.ndarray          # (M,)  sum to 1
    means: np.ndarray            # (M, d)
    covariances: np.ndarray      # (M, d, d) regularised, symmetric PD
    converged: bool
    log_likelihood: float        # mean per-sample LL at the last E-step
    log_likelihood_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    chol_factors: np.ndarray | None = None   # lower-triangular factors, cached for predict
    chol_log_dets: np.ndarray | None = None


def _validate_data(data, n_components: int) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise GmmDataError(f"data must be 2-d (n, d), got shape {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise GmmDataError(f"data must be non-empty, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise GmmDataError("data contains non-finite values")
    if x.shape[0] < n_components:
        raise GmmDataError(
            f"need at least as many points as components: n={x.shape[0]}, "
            f"M={n_components}")
    return x


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def kmeans_init(data: np.ndarray, n_components: int, seed: int):
    """k-means++ seeding plus a short Lloyd refinement.

    Returns ``(means, resp)`` where resp is the one-hot assignment of each
    point to its nearest refined center.  With as many components as distinct
    points, every distinct point ends up as its own center because the ++
    sampling only puts mass on points with non-zero distance to the chosen
    set.
    """
    x = _validate_data(data, n_components)
    n, d = x.shape
    m = n_components
    rng = np_generator(seed, "kmeans")

    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers = np.empty((m, d))
    centers[0] = x[first]
    chosen[first] = True
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for k in range(1, m):
        total = d2.sum()
        if total <= 0.0:
            # remaining mass is zero: duplicate-heavy data, take the lowest
            # index not yet used so the choice stays deterministic
            idx = int(np.flatnonzero(~chosen)[0])
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[k] = x[idx]
        chosen[idx] = True
        d2 = np.minimum(d2, np.sum((x - centers[k]) ** 2, axis=1))

    labels = None
    for _ in range(_LLOYD_ITERS):
        dist = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * (x @ centers.T)
            + np.sum(centers * centers, axis=1)[None, :]
        )
        new_labels = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(m):
            members = labels == k
            if members.any():
                centers[k] = x[members].mean(axis=0)
            # an empty cluster keeps its previous center

    resp = np.zeros((n, m))
    resp[np.arange(n), labels] = 1.0
    return centers, resp


# ---------------------------------------------------------------------------
# EM steps
# ---------------------------------------------------------------------------


def _chol_with_escalation(cov_raw: np.ndarray, reg: float, component: int):
    """Cholesky of cov_raw + reg*I, escalating reg tenfold on failure."""
    d = cov_raw.shape[0]
    eye = np.eye(d)
    while True:
        try:
            cov = cov_raw + reg * eye
            return np.linalg.cholesky(cov), cov
        except np.linalg.LinAlgError:
            if reg >= _REG_CEILING:
                raise GmmNumericalError(
                    f"component {component}: covariance not positive definite "
                    f"even with regularisation {reg:g}") from None
            reg = min(reg * 10.0, _REG_CEILING)


def _m_step(x: np.ndarray, resp: np.ndarray, reg: float):
    n, d = x.shape
    m = resp.shape[1]
    nk = resp.sum(axis=0)
    empty = np.flatnonzero(nk < _EMPTY_NK)

    weights = nk / n
    safe_nk = np.where(nk < _EMPTY_NK, 1.0, nk)
    means = (resp.T @ x) / safe_nk[:, None]

    global_cov = None
    if empty.size:
        # re-seed each dead component at the point the current mixture
        # explains worst, i.e. whose best responsibility is lowest
        max_resp = resp.max(axis=1)
        taken = np.zeros(n, dtype=bool)
        center = x.mean(axis=0)
        dev_all = x - center
        global_cov = (dev_all.T @ dev_all) / n
        for k in empty:
            order = np.argsort(max_resp, kind="stable")
            for idx in order:
                if not taken[idx]:
                    break
            taken[idx] = True
            means[k] = x[idx]
            weights[k] = 1.0 / n
        weights = weights / weights.sum()

    covs = np.empty((m, d, d))
    chols = np.empty((m, d, d))
    log_dets = np.empty(m)
    for k in range(m):
        if k in empty:
            cov_raw = global_cov
        else:
            dev = x - means[k]
            cov_raw = ((resp[:, k][:, None] * dev).T @ dev) / nk[k]
        chols[k], covs[k] = _chol_with_escalation(cov_raw, reg, k)
        log_dets[k] = np.log(np.diag(chols[k])).sum()
    return weights, means, covs, chols, log_dets


def _weighted_log_prob(x, weights, means, chols, log_dets):
    n, d = x.shape
    m = means.shape[0]
    out = np.empty((n, m))
    for k in range(m):
        sol = solve_triangular(chols[k], (x - means[k]).T, lower=True,
                               check_finite=False)
        maha = np.einsum("ij,ij->j", sol, sol)
        out[:, k] = -0.5 * (d * _LOG_2PI + maha) - log_dets[k]
    return out + np.log(weights)[None, :]


def _fit_single(x: np.ndarray, config: GmmConfig, seed: int) -> GmmModel:
    means0, resp = kmeans_init(x, config.n_components, seed)
    weights, means, covs, chols, log_dets = _m_step(x, resp, config.reg_covar)

    trace: list[float] = []
    prev_ll = None
    converged = False
    n_iter = 0
    for it in range(config.max_iter):
        n_iter = it + 1
        weighted = _weighted_log_prob(x, weights, means, chols, log_dets)
        log_norm = logsumexp(weighted, axis=1)
        ll = float(log_norm.mean())
        trace.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) <= config.tol * max(1.0, abs(prev_ll)):
            converged = True
            break
        prev_ll = ll
        resp = np.exp(weighted - log_norm[:, None])
        weights, means, covs, chols, log_dets = _m_step(x, resp, config.reg_covar)

    return GmmModel(
        weights=weights, means=means, covariances=covs,
        converged=converged, log_likelihood=trace[-1],
        log_likelihood_trace=trace, n_iter=n_iter,
        chol_factors=chols, chol_log_dets=log_dets,
    )


def fit(config: GmmConfig, data) -> GmmModel:
    """Fit the mixture.  Deterministic for a fixed (config, data) pair.

    With ``n_init > 1`` the initialisation with the best final mean
    log-likelihood wins; ties go to the earliest initialisation.
    """
    x = _validate_data(data, config.n_components)
    best = None
    for i in range(config.n_init):
        seed = config.seed if config.n_init == 1 else config.seed + i
        model = _fit_single(x, config, seed)
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    return best


def predict(model: GmmModel, data) -> np.ndarray:
    """Most likely component per point; ties resolve to the lowest index."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.means.shape[1]:
        raise GmmDataError(
            f"expected data of shape (n, {model.means.shape[1]}), got {x.shape}")
    if not np.isfinite(x).all():
        raise GmmDataError("data contains non-finite values")
    chols = model.chol_factors
    log_dets = model.chol_log_dets
    if chols is None or log_dets is None:
        chols = np.linalg.cholesky(model.covariances)
        log_dets = np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(axis=1)
    weighted = _weighted_log_prob(x, model.weights, model.means, chols, log_dets)
    return np.argmax(weighted, axis=1)
