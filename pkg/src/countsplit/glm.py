"""Log-link Poisson and negative binomial GLMs with offsets, fitted by IRLS.

The batched entry points (:func:`fit_poisson_batch`, :func:`fit_negbin_batch`)
fit many responses against one shared design, which is the pattern every
pipeline uses (all genes regressed on the same latent estimate). The
single-response functions wrap them and raise on structural failures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import _kernels
from .count_matrix import SizeFactors
from .errors import (
    InvalidConfigError,
    RankDeficientError,
    SeparationError,
    ThetaDivergedError,
    UnconvergedFitError,
)

STATUS_OK = _kernels.STATUS_OK
STATUS_MAXITER = _kernels.STATUS_MAXITER
STATUS_SEPARATION = _kernels.STATUS_SEPARATION
STATUS_SINGULAR = _kernels.STATUS_SINGULAR
STATUS_THETA_DIVERGED = 4

DEFAULT_TOL = 1e-8
DEFAULT_MAXIT = 25
THETA_CAP = 1e6


@dataclass(frozen=True)
class GlmFit:
    """One fitted regression. ``coefficients[0]`` is the intercept."""

    family: str
    coefficients: np.ndarray
    standard_errors: np.ndarray
    deviance: float
    iterations: int
    converged: bool
    fitted_values: np.ndarray
    dispersion: float | None = None

    def predict(self, Z=None, offsets=None) -> np.ndarray:
        """Fitted means; for new data pass ``Z`` and ``offsets``."""
        if Z is None:
            return self.fitted_values
        A = design_matrix(Z)
        if isinstance(offsets, SizeFactors):
            offsets = offsets.gamma
        log_off = np.zeros(A.shape[0]) if offsets is None else np.log(np.asarray(offsets, dtype=np.float64))
        return np.exp(A @ self.coefficients + log_off)


@dataclass(frozen=True)
class BatchFit:
    """Many fits against one design; row ``g`` belongs to response column ``g``."""

    family: str
    coefficients: np.ndarray
    standard_errors: np.ndarray
    deviance: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    dispersion: np.ndarray | None = None

    @property
    def converged(self) -> np.ndarray:
        return self.status == STATUS_OK

    @property
    def usable(self) -> np.ndarray:
        """Fits whose coefficients and standard errors can be reported.

        Includes theta-diverged negative binomial fits, which carry the
        Poisson-limit estimates.
        """
        return (self.status == STATUS_OK) | (self.status == STATUS_THETA_DIVERGED)


@dataclass(frozen=True)
class WaldResult:
    estimate: float
    std_error: float
    z_value: float
    p_value: float


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float


def design_matrix(Z) -> np.ndarray:
    """``[1, Z]`` as a float array; ``Z`` may be 1D (one regressor) or 2D."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise InvalidConfigError("Z must be 1D or 2D")
    return np.column_stack([np.ones(Z.shape[0]), Z])


def _prepare(Y, Z, offsets):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    A = design_matrix(Z) if Z is not None else np.ones((Y.shape[0], 1))
    n, q = A.shape
    if Y.shape[0] != n:
        raise InvalidConfigError(f"response has {Y.shape[0]} rows but design has {n}")
    if n <= q:
        raise InvalidConfigError(f"need more observations ({n}) than coefficients ({q})")
    if np.any(Y < 0) or not np.all(np.isfinite(Y)):
        raise InvalidConfigError("responses must be finite and non-negative")
    if not np.all(np.isfinite(A)):
        raise InvalidConfigError("design contains non-finite values")
    if np.linalg.matrix_rank(A) < q:
        raise RankDeficientError("design [1, Z] is rank deficient")
    if offsets is None:
        log_off = np.zeros(n)
    else:
        off = np.asarray(offsets.gamma if isinstance(offsets, SizeFactors) else offsets, dtype=np.float64)
        if off.shape != (n,) or np.any(off <= 0) or not np.all(np.isfinite(off)):
            raise InvalidConfigError("offsets must be positive and match the number of observations")
        log_off = np.log(off)
    return Y, A, log_off


def fit_poisson_batch(Y, Z, offsets=None, tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT) -> BatchFit:
    """Fit ``E[Y_ig] = offsets_i * exp(b0_g + Z_i b1_g)`` for each column of ``Y``.

    ``offsets`` are on the count scale (size factors), not logged.
    """
    Y, A, log_off = _prepare(Y, Z, offsets)
    beta, se, dev, iters, status = _kernels.poisson_irls(A, log_off, Y, tol, maxit)
    return BatchFit("poisson", beta, se, dev, iters, status)


def _nb_deviance(Y, mu, theta):
    with np.errstate(divide="ignore", invalid="ignore"):
        ylog = np.where(Y > 0, Y * np.log(np.where(Y > 0, Y, 1.0) / mu), 0.0)
        return 2.0 * (ylog - (Y + theta) * np.log((Y + theta) / (mu + theta))).sum(axis=0)


def _nb_irls(A, log_off, Y, theta, B, tol, maxit):
    """IRLS for coefficients at fixed per-column theta, starting from ``B``."""
    n, q = A.shape
    m = Y.shape[1]
    B = B.copy()
    eta = A @ B.T
    mu = np.exp(eta + log_off[:, None])
    dev = _nb_deviance(Y, mu, theta)
    status = np.full(m, STATUS_MAXITER)
    live = np.ones(m, dtype=bool)
    for _ in range(maxit):
        if not live.any():
            break
        g = np.flatnonzero(live)
        th = theta[g]
        mu_g = mu[:, g]
        w = mu_g / (1.0 + mu_g / th)
        z = eta[:, g] + (Y[:, g] - mu_g) / mu_g
        XtWX = np.einsum("ic,ig,id->gcd", A, w, A)
        XtWz = np.einsum("ic,ig->gc", A, w * z)
        try:
            B_new = np.linalg.solve(XtWX, XtWz[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            status[g] = STATUS_SINGULAR
            live[g] = False
            continue
        with np.errstate(over="ignore"):
            eta_new = A @ B_new.T
            mu_new = np.exp(eta_new + log_off[:, None])
        dev_new = _nb_deviance(Y[:, g], mu_new, th)
        for _h in range(30):
            worse = ~np.isfinite(dev_new) | (dev_new > dev[g])
            if not worse.any():
                break
            B_new[worse] = 0.5 * (B_new[worse] + B[g[worse]])
            with np.errstate(over="ignore"):
                eta_new[:, worse] = A @ B_new[worse].T
                mu_new[:, worse] = np.exp(eta_new[:, worse] + log_off[:, None])
            dev_new[worse] = _nb_deviance(Y[:, g[worse]], mu_new[:, worse], th[worse])
        B[g], eta[:, g], mu[:, g] = B_new, eta_new, mu_new
        bad = ~np.isfinite(dev_new)
        status[g[bad]] = STATUS_SEPARATION
        live[g[bad]] = False
        conv = ~bad & (np.abs(dev_new - dev[g]) / (np.abs(dev_new) + 0.1) < tol)
        status[g[conv]] = STATUS_OK
        live[g[conv]] = False
        dev[g] = dev_new
    return B, mu, dev, status


def _theta_ml(Y, mu, theta0, cap, maxit=25, eps=1.220703125e-4):
    """Newton iterations for the NB size parameter at fixed means, per column."""
    th = np.clip(np.abs(theta0), 1e-8, cap).astype(np.float64)
    live = np.isfinite(th) & (th < cap)
    for _ in range(maxit):
        if not live.any():
            break
        g = np.flatnonzero(live)
        t, y, m = th[g], Y[:, g], mu[:, g]
        score = (special.digamma(t + y) - special.digamma(t) + np.log(t) + 1.0
                 - np.log(t + m) - (y + t) / (m + t)).sum(axis=0)
        info = (-special.polygamma(1, t + y) + special.polygamma(1, t) - 1.0 / t
                + 2.0 / (m + t) - (y + t) / (m + t) ** 2).sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = score / info
        step = np.where(np.isfinite(step), step, np.inf)
        t_new = t + step
        t_new = np.where(t_new <= 0, t / 10.0, t_new)
        th[g] = np.minimum(t_new, cap)
        done = (np.abs(step) <= eps) | (th[g] >= cap)
        live[g[done]] = False
    return th


def fit_negbin_batch(
    Y,
    Z,
    offsets=None,
    tol: float = DEFAULT_TOL,
    maxit: int = DEFAULT_MAXIT,
    theta_cap: float = THETA_CAP,
) -> BatchFit:
    """Negative binomial GLMs (variance ``mu + mu^2 / theta``) for each column.

    Coefficients and theta are updated alternately: a full IRLS pass at fixed
    theta, then Newton steps for the maximum-likelihood theta at fixed means.
    Columns whose theta reaches ``theta_cap`` get status
    ``STATUS_THETA_DIVERGED`` and carry the Poisson-limit fit.
    """
    Y, A, log_off = _prepare(Y, Z, offsets)
    n, q = A.shape
    m = Y.shape[1]
    pois = BatchFit("poisson", *_kernels.poisson_irls(A, log_off, Y, tol, maxit))
    beta = np.full((m, q), np.nan)
    se = np.full((m, q), np.nan)
    dev_out = np.full(m, np.nan)
    iters = np.zeros(m, dtype=np.int64)
    status = pois.status.copy()
    theta_out = np.full(m, np.nan)

    g0 = np.flatnonzero(pois.status == STATUS_OK)
    if g0.size:
        B = pois.coefficients[g0]
        Yg = Y[:, g0]
        mu = np.exp(A @ B.T + log_off[:, None])
        with np.errstate(divide="ignore"):
            theta = n / ((Yg / mu - 1.0) ** 2).sum(axis=0)
        theta = _theta_ml(Yg, mu, theta, theta_cap)
        st = np.full(g0.size, STATUS_MAXITER)
        dev = np.full(g0.size, np.inf)
        for outer in range(maxit):
            live = st == STATUS_MAXITER
            if not live.any():
                break
            g = np.flatnonzero(live & (theta < theta_cap))
            st[live & (theta >= theta_cap)] = STATUS_THETA_DIVERGED
            if g.size == 0:
                break
            iters[g0[g]] = outer + 1
            B_g, mu_g, dev_g, inner = _nb_irls(A, log_off, Yg[:, g], theta[g], B[g], tol, maxit)
            B[g] = B_g
            mu[:, g] = mu_g
            failed = (inner == STATUS_SEPARATION) | (inner == STATUS_SINGULAR)
            st[g[failed]] = inner[failed]
            th_old = theta[g]
            th_new = _theta_ml(Yg[:, g], mu_g, th_old, theta_cap)
            theta[g] = th_new
            conv = (~failed & (np.abs(th_new - th_old) <= 1e-6 * th_old)
                    & (np.abs(dev_g - dev[g]) / (np.abs(dev_g) + 0.1) < tol))
            st[g[conv]] = STATUS_OK
            st[g[~failed & (th_new >= theta_cap)]] = STATUS_THETA_DIVERGED
            dev[g] = dev_g

        diverged = st == STATUS_THETA_DIVERGED
        fitted = ~diverged & ((st == STATUS_OK) | (st == STATUS_MAXITER))
        g = np.flatnonzero(fitted)
        if g.size:
            mu_g = np.exp(A @ B[g].T + log_off[:, None])
            w = mu_g / (1.0 + mu_g / theta[g])
            info = np.einsum("ic,ig,id->gcd", A, w, A)
            cov = np.linalg.inv(info)
            beta[g0[g]] = B[g]
            se[g0[g]] = np.sqrt(np.diagonal(cov, axis1=1, axis2=2))
            dev_out[g0[g]] = _nb_deviance(Yg[:, g], mu_g, theta[g])
            theta_out[g0[g]] = theta[g]
        d = np.flatnonzero(diverged)
        beta[g0[d]] = pois.coefficients[g0[d]]
        se[g0[d]] = pois.standard_errors[g0[d]]
        dev_out[g0[d]] = pois.deviance[g0[d]]
        theta_out[g0[d]] = np.inf
        status[g0] = st
    return BatchFit("negative_binomial", beta, se, dev_out, iters, status, dispersion=theta_out)


def _single(batch: BatchFit, y, Z, offsets) -> GlmFit:
    code = int(batch.status[0])
    if code == STATUS_SEPARATION:
        raise SeparationError("fitted means under- or overflowed (all-zero or separated response)")
    if code == STATUS_SINGULAR:
        raise RankDeficientError("information matrix is singular at the fit")
    coef = batch.coefficients[0]
    disp = None if batch.dispersion is None else float(batch.dispersion[0])
    fit = GlmFit(
        family=batch.family,
        coefficients=coef,
        standard_errors=batch.standard_errors[0],
        deviance=float(batch.deviance[0]),
        iterations=int(batch.iterations[0]),
        converged=code in (STATUS_OK, STATUS_THETA_DIVERGED),
        fitted_values=GlmFit.predict(_Stub(coef), Z if Z is not None else np.zeros((len(y), 0)), offsets)
        if not np.any(np.isnan(coef)) else np.full(len(y), np.nan),
        dispersion=disp,
    )
    return fit


class _Stub:
    def __init__(self, coefficients):
        self.coefficients = coefficients


def fit_poisson_glm(y, Z=None, offsets=None, tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT) -> GlmFit:
    """Poisson regression of ``y`` on ``[1, Z]`` with ``log(offsets)`` added to the linear predictor.

    ``y`` may be non-integer (expected counts are allowed). Standard errors
    come from the inverse Fisher information at the fit. If IRLS runs out of
    iterations the fit is returned with ``converged=False``.

    Raises
    ------
    RankDeficientError
        ``[1, Z]`` does not have full column rank.
    SeparationError
        Fitted means under- or overflow, e.g. for an all-zero response.
    """
    y = np.asarray(y, dtype=np.float64)
    return _single(fit_poisson_batch(y, Z, offsets, tol, maxit), y, Z, offsets)


def fit_negbin_glm(y, Z=None, offsets=None, tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT,
                   theta_cap: float = THETA_CAP) -> GlmFit:
    """Negative binomial regression; ``dispersion`` holds the estimated theta.

    Raises
    ------
    ThetaDivergedError
        Theta reached ``theta_cap``; ``exc.fit`` holds the Poisson-limit fit.
    """
    y = np.asarray(y, dtype=np.float64)
    batch = fit_negbin_batch(y, Z, offsets, tol, maxit, theta_cap)
    fit = _single(batch, y, Z, offsets)
    if int(batch.status[0]) == STATUS_THETA_DIVERGED:
        raise ThetaDivergedError(f"theta exceeded cap {theta_cap:g}; data look Poisson", fit=fit)
    return fit


def wald_p(estimate, std_error):
    """Two-sided normal-reference p-value, vectorised."""
    z = np.asarray(estimate, dtype=np.float64) / np.asarray(std_error, dtype=np.float64)
    return 2.0 * stats.norm.sf(np.abs(z))


def wald_test(fit: GlmFit, index: int = 1) -> WaldResult:
    """Wald test of ``coefficient[index] == 0``."""
    if not fit.converged:
        raise UnconvergedFitError("cannot test an unconverged fit")
    if not 0 <= index < fit.coefficients.size:
        raise InvalidConfigError(f"coefficient index {index} out of range")
    est = float(fit.coefficients[index])
    se = float(fit.standard_errors[index])
    z = est / se
    return WaldResult(est, se, z, float(2.0 * stats.norm.sf(abs(z))))


def wald_ci(fit: GlmFit, index: int = 1, level: float = 0.95) -> ConfidenceInterval:
    """Symmetric normal-quantile interval ``estimate +/- z * SE``."""
    if not fit.converged:
        raise UnconvergedFitError("cannot build an interval from an unconverged fit")
    if not 0.0 < level < 1.0:
        raise InvalidConfigError("level must lie strictly between 0 and 1")
    est = float(fit.coefficients[index])
    half = float(stats.norm.ppf(0.5 + level / 2.0)) * float(fit.standard_errors[index])
    return ConfidenceInterval(est - half, est + half, float(level))


def target_parameter(expected_counts, Z, gamma: SizeFactors | np.ndarray | None = None,
                     tol: float = 1e-13, maxit: int = 100) -> np.ndarray:
    """Population GLM coefficients: the Poisson fit with expected counts as response.

    ``expected_counts`` may be a vector or an (n, m) array of columns; the
    result has shape (k + 1,) or (m, k + 1) accordingly.
    """
    E = np.asarray(expected_counts, dtype=np.float64)
    if not np.all(np.isfinite(E)) or np.any(E <= 0):
        raise InvalidConfigError("expected counts must be finite and positive")
    batch = fit_poisson_batch(E, Z, gamma, tol=tol, maxit=maxit)
    bad = batch.status != STATUS_OK
    if bad.any():
        raise UnconvergedFitError(f"{int(bad.sum())} target fit(s) did not converge")
    return batch.coefficients[0] if E.ndim == 1 else batch.coefficients
