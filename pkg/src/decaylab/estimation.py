"""Decay-curve estimation with spatially robust standard errors.

Nonlinear least squares is solved by a damped Gauss-Newton
(Levenberg-Marquardt) iteration with the analytic Jacobian of each
decay family; the log-linear family is linear in its parameters and is
solved exactly by ordinary least squares. Standard errors come from a
Conley-style spatial HAC sandwich: score cross-products of observation
pairs within a distance cutoff, weighted by a Bartlett or uniform
kernel, with the covariance projected back to the positive
semidefinite cone if rounding pushes an eigenvalue below zero.

Model comparison uses the Gaussian concentrated log-likelihood

    loglik = -(n / 2) * (ln(2 pi ssr / n) + 1)

with k = 3 parameters charged (two mean parameters plus the error
variance) in both AIC and BIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .errors import (
    InvalidConfig,
    MissingResiduals,
    NonPositiveOutcome,
    SingularJacobian,
    TooFewObservations,
    EstimationError,
    DuplicateUnitId,
)
from .geo import neighbor_pairs_within
from .models import DecayModelKind, DecayParams

__all__ = [
    "Sample",
    "HacConfig",
    "FitResult",
    "LogOlsResult",
    "ModelComparison",
    "LMResult",
    "N_PARAMS_IC",
    "levenberg_marquardt",
    "fit_nls",
    "fit_ols_log",
    "conley_hac_se",
    "information_criteria",
    "aic_bic",
    "compare_models",
    "delta_method_se",
]

# Parameters charged by the information criteria: q, rate, and the
# error variance of the Gaussian likelihood.
N_PARAMS_IC = 3

_MAX_ITER = 200
_SSR_RTOL = 1e-10
_GRAD_ATOL = 1e-8


@dataclass
class Sample:
    """A cross-section of units with distances, outcomes, and locations.

    Locations are needed for the spatial HAC covariance; covariates are
    optional and used by stratified fits.
    """

    unit_ids: list[str]
    distances_km: np.ndarray
    outcomes: np.ndarray
    latitudes: np.ndarray
    longitudes: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.unit_ids = [str(u) for u in self.unit_ids]
        self.distances_km = np.asarray(self.distances_km, dtype=float)
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        self.latitudes = np.asarray(self.latitudes, dtype=float)
        self.longitudes = np.asarray(self.longitudes, dtype=float)
        n = len(self.unit_ids)
        for name, arr in (
            ("distances_km", self.distances_km),
            ("outcomes", self.outcomes),
            ("latitudes", self.latitudes),
            ("longitudes", self.longitudes),
        ):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
        if len(set(self.unit_ids)) != n:
            raise DuplicateUnitId("sample unit ids must be unique")
        if np.any(~np.isfinite(self.distances_km)) or np.any(self.distances_km < 0):
            raise ValueError("distances must be finite and nonnegative")
        if np.any(~np.isfinite(self.outcomes)):
            raise ValueError("outcomes must be finite")
        self.covariates = {
            k: np.asarray(v, dtype=float) for k, v in self.covariates.items()
        }
        for k, v in self.covariates.items():
            if v.shape != (n,):
                raise ValueError(f"covariate {k!r} must have shape ({n},)")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    def subset(self, mask: np.ndarray) -> "Sample":
        mask = np.asarray(mask, dtype=bool)
        return Sample(
            unit_ids=[u for u, m in zip(self.unit_ids, mask) if m],
            distances_km=self.distances_km[mask],
            outcomes=self.outcomes[mask],
            latitudes=self.latitudes[mask],
            longitudes=self.longitudes[mask],
            covariates={k: v[mask] for k, v in self.covariates.items()},
        )

    def with_distances(self, distances_km: np.ndarray) -> "Sample":
        return Sample(
            unit_ids=list(self.unit_ids),
            distances_km=np.asarray(distances_km, dtype=float),
            outcomes=self.outcomes.copy(),
            latitudes=self.latitudes.copy(),
            longitudes=self.longitudes.copy(),
            covariates={k: v.copy() for k, v in self.covariates.items()},
        )


@dataclass(frozen=True)
class HacConfig:
    """Spatial HAC settings: kernel cutoff in km and kernel shape."""

    cutoff_km: float = 50.0
    kernel: str = "bartlett"

    def __post_init__(self) -> None:
        if not self.cutoff_km > 0:
            raise InvalidConfig(f"HAC cutoff must be positive, got {self.cutoff_km}")
        if self.kernel not in ("bartlett", "uniform"):
            raise InvalidConfig(f"unknown HAC kernel {self.kernel!r}")

    def weights(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        if self.kernel == "bartlett":
            return np.maximum(0.0, 1.0 - d / self.cutoff_km)
        return (d <= self.cutoff_km).astype(float)


@dataclass
class FitResult:
    """A fitted decay curve with spatial HAC uncertainty."""

    params: DecayParams
    se: np.ndarray
    cov: np.ndarray
    r2: float
    rmse: float
    loglik: float
    aic: float
    bic: float
    n: int
    residuals: np.ndarray
    converged: bool
    iterations: int

    def summary_dict(self) -> dict:
        return {
            "kind": self.params.kind.value,
            "q": self.params.q,
            "rate": self.params.rate,
            "se_q": float(self.se[0]),
            "se_rate": float(self.se[1]),
            "r2": self.r2,
            "rmse": self.rmse,
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass
class LogOlsResult:
    """OLS of log outcome on distance; slope sign flipped gives kappa_eff."""

    intercept: float
    slope: float
    kappa_eff: float
    se: np.ndarray
    se_hac: np.ndarray
    cov: np.ndarray
    cov_hac: np.ndarray
    r2: float
    rmse: float
    n: int
    residuals: np.ndarray

    def summary_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "kappa_eff": self.kappa_eff,
            "se_intercept": float(self.se[0]),
            "se_slope": float(self.se[1]),
            "se_intercept_hac": float(self.se_hac[0]),
            "se_slope_hac": float(self.se_hac[1]),
            "r2": self.r2,
            "rmse": self.rmse,
            "n": self.n,
        }


@dataclass
class LMResult:
    theta: np.ndarray
    ssr: float
    ssr_history: list[float]
    converged: bool
    iterations: int


@dataclass
class ModelComparison:
    """Fits of several families on the identical sample."""

    fits: dict[DecayModelKind, FitResult]
    best: DecayModelKind
    delta_aic: dict[DecayModelKind, float]
    ties: tuple[DecayModelKind, ...]
    failed: dict[DecayModelKind, str]


def levenberg_marquardt(
    residual_fn,
    jacobian_fn,
    theta0: np.ndarray,
    max_iter: int = _MAX_ITER,
    ssr_rtol: float = _SSR_RTOL,
    grad_atol: float = _GRAD_ATOL,
) -> LMResult:
    """Minimize sum(residual_fn(theta)**2) by damped Gauss-Newton steps.

    ``residual_fn`` returns data minus model, ``jacobian_fn`` the model
    Jacobian (n x p). Converges when the relative SSR decrease of an
    accepted step falls below ``ssr_rtol`` or the max-abs SSR gradient
    falls below ``grad_atol``; otherwise returns the best iterate found
    with ``converged=False``. Accepted steps never increase the SSR.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    resid = residual_fn(theta)
    ssr = float(resid @ resid)
    if not math.isfinite(ssr):
        raise EstimationError("non-finite SSR at the initial point")
    lam = 1e-3
    history = [ssr]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        jac = jacobian_fn(theta)
        grad = 2.0 * (jac.T @ resid)  # gradient of SSR is -2 J'r; sign irrelevant to the norm
        if np.max(np.abs(grad)) < grad_atol:
            converged = True
            break
        jtj = jac.T @ jac
        diag = np.maximum(np.diag(jtj), 1e-300)
        accepted = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), jac.T @ resid)
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian(f"normal equations singular: {exc}") from exc
            trial = theta + step
            # a wild trial step may overflow the model; the inf SSR is
            # rejected below, so don't surface the numpy warning
            with np.errstate(over="ignore", invalid="ignore"):
                trial_resid = residual_fn(trial)
                trial_ssr = float(trial_resid @ trial_resid)
            if math.isfinite(trial_ssr) and trial_ssr <= ssr:
                rel_drop = (ssr - trial_ssr) / max(ssr, 1e-300)
                theta, resid, ssr = trial, trial_resid, trial_ssr
                history.append(ssr)
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop < ssr_rtol:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            break
    return LMResult(theta=theta, ssr=ssr, ssr_history=history, converged=converged, iterations=iterations)


def _initial_values(kind: DecayModelKind, d: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
    """Primary start plus the fallback multi-start grid."""
    near = d <= np.percentile(d, 10.0)
    q0 = float(np.mean(y[near])) if near.any() else float(np.mean(y))
    if q0 == 0.0:
        q0 = float(np.mean(y)) or 1.0
    starts: list[np.ndarray] = []
    if kind is DecayModelKind.EXPONENTIAL:
        mean_d = float(np.mean(d))
        if mean_d > 0:
            starts.append(np.array([q0, 1.0 / mean_d]))
        for kappa0 in (1e-4, 1e-3, 1e-2, 1e-1):
            starts.append(np.array([q0, kappa0]))
    else:  # power law
        starts.append(np.array([q0, 0.05]))
        for alpha0 in (0.01, 0.2, 0.5):
            starts.append(np.array([q0, alpha0]))
    return starts


def _ols(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise SingularJacobian("design matrix is rank deficient")
    return coef


def _concentrated_loglik(ssr: float, n: int) -> float:
    if ssr <= 0.0:
        return math.inf
    sigma2 = ssr / n
    return -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)


def aic_bic(loglik: float, n: int, k: int = N_PARAMS_IC) -> tuple[float, float]:
    """Information criteria from a log-likelihood; k defaults to 3."""
    if n <= 0:
        raise ValueError("n must be positive")
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * math.log(n)


def information_criteria(fit: FitResult) -> tuple[float, float]:
    """(AIC, BIC) of a fitted curve, recomputed from its log-likelihood."""
    return aic_bic(fit.loglik, fit.n)


def _fit_statistics(y: np.ndarray, fitted: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    resid = y - fitted
    ssr = float(resid @ resid)
    sst = float(np.sum((y - np.mean(y)) ** 2))
    if sst > 0.0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr == 0.0 else -math.inf
    rmse = math.sqrt(ssr / y.size)
    return resid, ssr, r2, rmse


def fit_nls(
    sample: Sample,
    kind: DecayModelKind,
    init: DecayParams | None = None,
    hac: HacConfig | None = None,
    pairs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> FitResult:
    """Fit one decay family by nonlinear least squares.

    The log-linear family is linear in (q, rate) and solved exactly by
    OLS; the others run Levenberg-Marquardt from a data-driven start
    plus a fallback rate grid, keeping the lowest SSR. Distances below
    the domain floor are clamped for the log-based families. Returns a
    FitResult with HAC standard errors; a fit that exhausts its
    iteration budget is returned with ``converged=False`` rather than
    raised.
    """
    kind = DecayModelKind(kind)
    hac = hac or HacConfig()
    if sample.n < 3:
        raise TooFewObservations(f"need at least 3 observations, got {sample.n}")
    d = models.clamp_distances(sample.distances_km, kind)
    y = sample.outcomes
    if np.ptp(d) == 0.0:
        raise SingularJacobian("all distances are equal; decay rate is not identified")

    if kind is DecayModelKind.LOG_LINEAR:
        x = np.column_stack([np.ones_like(d), np.log(d)])
        coef = _ols(x, y)
        params = DecayParams(kind, float(coef[0]), float(-coef[1]))
        converged, iterations = True, 0
    else:
        def residual_fn(theta, _kind=kind, _d=d, _y=y):
            return _y - models.predict(DecayParams(_kind, theta[0], theta[1]), _d)

        def jacobian_fn(theta, _kind=kind, _d=d):
            return models.jacobian(DecayParams(_kind, theta[0], theta[1]), _d)

        if init is not None:
            starts = [np.array([init.q, init.rate], dtype=float)]
        else:
            starts = _initial_values(kind, d, y)
        best: LMResult | None = None
        errors: list[str] = []
        for theta0 in starts:
            try:
                result = levenberg_marquardt(residual_fn, jacobian_fn, theta0)
            except (SingularJacobian, EstimationError) as exc:
                errors.append(str(exc))
                continue
            if best is None or result.ssr < best.ssr:
                best = result
        if best is None:
            raise SingularJacobian(
                "no start point produced a usable fit: " + "; ".join(errors[:3])
            )
        params = DecayParams(kind, float(best.theta[0]), float(best.theta[1]))
        converged, iterations = best.converged, best.iterations

    fitted = models.predict(params, d)
    resid, ssr, r2, rmse = _fit_statistics(y, fitted)
    loglik = _concentrated_loglik(ssr, sample.n)
    aic, bic = aic_bic(loglik, sample.n)
    fit_sample = sample if np.array_equal(d, sample.distances_km) else sample.with_distances(d)
    se, cov = conley_hac_se(fit_sample, params, resid, hac, pairs=pairs)
    return FitResult(
        params=params,
        se=se,
        cov=cov,
        r2=r2,
        rmse=rmse,
        loglik=loglik,
        aic=aic,
        bic=bic,
        n=sample.n,
        residuals=resid,
        converged=converged,
        iterations=iterations,
    )


def fit_ols_log(sample: Sample, hac: HacConfig | None = None) -> LogOlsResult:
    """OLS of ln(outcome) on an intercept and distance.

    The slope of this regression, sign flipped, is the effective decay
    rate kappa_eff. Both plain heteroskedasticity-robust and spatial
    HAC standard errors are reported. Outcomes must be strictly
    positive.
    """
    hac = hac or HacConfig()
    if sample.n < 3:
        raise TooFewObservations(f"need at least 3 observations, got {sample.n}")
    y = sample.outcomes
    bad = y <= 0.0
    if bad.any():
        offenders = [u for u, b in zip(sample.unit_ids, bad) if b]
        shown = ", ".join(offenders[:10])
        more = "" if len(offenders) <= 10 else f" (+{len(offenders) - 10} more)"
        raise NonPositiveOutcome(f"log outcome undefined for units: {shown}{more}")
    d = sample.distances_km
    if np.ptp(d) == 0.0:
        raise SingularJacobian("all distances are equal; slope is not identified")
    x = np.column_stack([np.ones_like(d), d])
    logy = np.log(y)
    coef = _ols(x, logy)
    fitted = x @ coef
    resid, ssr, r2, rmse = _fit_statistics(logy, fitted)
    cov_hc = _hc_sandwich(x, resid)
    cov_hac = _spatial_hac_sandwich(x, resid, sample.latitudes, sample.longitudes, hac)
    return LogOlsResult(
        intercept=float(coef[0]),
        slope=float(coef[1]),
        kappa_eff=float(-coef[1]),
        se=np.sqrt(np.diag(cov_hc)),
        se_hac=np.sqrt(np.diag(cov_hac)),
        cov=cov_hc,
        cov_hac=cov_hac,
        r2=r2,
        rmse=rmse,
        n=sample.n,
        residuals=resid,
    )


def _project_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and floor eigenvalues at zero."""
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    if np.all(vals >= 0.0):
        return sym
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.T


def _bread(jac: np.ndarray) -> np.ndarray:
    jtj = jac.T @ jac
    try:
        return np.linalg.inv(jtj)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(f"J'J singular in sandwich covariance: {exc}") from exc


def _hc_sandwich(jac: np.ndarray, resid: np.ndarray) -> np.ndarray:
    bread = _bread(jac)
    scores = jac * resid[:, None]
    meat = scores.T @ scores
    return _project_psd(bread @ meat @ bread)


def _spatial_hac_sandwich(
    jac: np.ndarray,
    resid: np.ndarray,
    lats: np.ndarray,
    lons: np.ndarray,
    config: HacConfig,
    pairs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    bread = _bread(jac)
    scores = jac * resid[:, None]
    meat = scores.T @ scores  # self pairs, kernel weight 1 at distance 0
    ii, jj, dd = pairs if pairs is not None else neighbor_pairs_within(
        lats, lons, config.cutoff_km
    )
    if ii.size:
        w = config.weights(dd)
        n, p = scores.shape
        # sum_pairs w * s_i s_j' as scores.T @ V with V_i = sum_j w_ij s_j,
        # accumulated per column; avoids materializing (n_pairs, p) gathers
        v = np.empty_like(scores)
        for c in range(p):
            v[:, c] = np.bincount(ii, weights=w * scores[jj, c], minlength=n)
        cross = scores.T @ v
        meat = meat + cross + cross.T
    return _project_psd(bread @ meat @ bread)


def conley_hac_se(
    sample: Sample,
    params: DecayParams,
    residuals: np.ndarray,
    config: HacConfig | None = None,
    pairs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Spatial HAC (kernel-weighted sandwich) standard errors.

    Pairs of observations within ``config.cutoff_km`` of each other
    contribute score cross-products weighted by the kernel; everything
    farther apart is treated as independent, so with no close pairs the
    result equals the plain heteroskedasticity-robust sandwich. Returns
    (se, cov) for (q, rate).

    ``pairs`` accepts a precomputed ``neighbor_pairs_within`` triple so
    repeated fits on a fixed geometry skip the neighbour search.
    """
    config = config or HacConfig()
    if residuals is None:
        raise MissingResiduals("HAC covariance needs the fitted residuals")
    resid = np.asarray(residuals, dtype=float)
    if resid.shape != (sample.n,):
        raise MissingResiduals(
            f"residuals shape {resid.shape} does not match sample size {sample.n}"
        )
    d = models.clamp_distances(sample.distances_km, params.kind)
    jac = models.jacobian(params, d)
    cov = _spatial_hac_sandwich(
        jac, resid, sample.latitudes, sample.longitudes, config, pairs=pairs
    )
    return np.sqrt(np.diag(cov)), cov


def compare_models(
    sample: Sample,
    kinds: list[DecayModelKind],
    hac: HacConfig | None = None,
) -> ModelComparison:
    """Fit several families on the identical clamped sample and rank by AIC.

    Distances are clamped to the domain floor once, so every family
    sees the same observations and the criteria are comparable. A
    family whose fit raises is excluded and flagged in ``failed``.
    Families within 2 AIC of the best form the tie set.
    """
    kinds = [DecayModelKind(k) for k in kinds]
    deduped: list[DecayModelKind] = []
    for k in kinds:
        if k not in deduped:
            deduped.append(k)
    if len(deduped) < 2:
        raise InvalidConfig("model comparison needs at least two distinct families")
    clamped = sample.with_distances(models.clamp_distances(sample.distances_km))
    fits: dict[DecayModelKind, FitResult] = {}
    failed: dict[DecayModelKind, str] = {}
    for kind in deduped:
        try:
            fits[kind] = fit_nls(clamped, kind, hac=hac)
        except EstimationError as exc:
            failed[kind] = f"{type(exc).__name__}: {exc}"
    if not fits:
        raise EstimationError(f"every family failed to fit: {failed}")
    best = min(fits, key=lambda k: (fits[k].aic, deduped.index(k)))
    best_aic = fits[best].aic
    delta_aic: dict[DecayModelKind, float] = {}
    for kind, fit in fits.items():
        if fit.aic == best_aic:
            delta_aic[kind] = 0.0
        else:
            delta_aic[kind] = fit.aic - best_aic
    ties = tuple(k for k in deduped if k in fits and delta_aic[k] < 2.0)
    return ModelComparison(fits=fits, best=best, delta_aic=delta_aic, ties=ties, failed=failed)


def delta_method_se(g_value: float, g_prime: float, param_se: float) -> float:
    """First-order (delta method) standard error of g(theta_hat).

    ``g_value`` is the transformed point estimate (carried for the
    caller's bookkeeping); the SE is |g'(theta_hat)| * param_se.
    """
    if param_se < 0:
        raise ValueError(f"parameter SE must be nonnegative, got {param_se}")
    return abs(g_prime) * param_se
