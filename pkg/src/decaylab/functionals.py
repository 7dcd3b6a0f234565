"""Functionals of a fitted exponential decay curve.

From a fitted rate kappa these derive the spatial boundary where the
effect falls to a retained fraction epsilon of its source level, the
diffusivity implied by treating the fitted curve as the steady state of
a unit-decay diffusion process, the time evolution and velocity of the
boundary, cumulative exposure, and a categorical diagnostic verdict for
whether distance decay applies at all. Group-level decompositions of
effective decay rates live here too.

Boundary functionals are defined for the exponential family only; a
non-positive fitted rate raises BoundaryUndefined, which is a
diagnostic outcome (no decay), not a numerical failure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .errors import (
    BoundaryUndefined,
    MissingColumn,
    NonPositiveKappa,
    NonPositiveTime,
    StratumTooSmall,
    TooFewObservations,
)
from .estimation import (
    FitResult,
    HacConfig,
    Sample,
    delta_method_se,
    fit_nls,
    _ols,
)
from .models import DecayModelKind, DecayParams, ThresholdSpec

__all__ = [
    "BoundaryEstimate",
    "DiffusionSummary",
    "ExposureSpec",
    "Verdict",
    "DiagnosticVerdict",
    "SplitRule",
    "StratifiedResult",
    "KappaDecomposition",
    "BUILTIN_SPLITS",
    "DEFAULT_DOMAIN_SPAN_KM",
    "spatial_boundary",
    "implied_diffusion",
    "boundary_evolution",
    "boundary_velocity",
    "cumulative_exposure",
    "classify_decay",
    "sign_reversal_test",
    "stratified_fit",
    "decompose_kappa",
]

# Roughly the continental span available to a national cross-section;
# a boundary beyond this cannot be observed in the data.
DEFAULT_DOMAIN_SPAN_KM = 4500.0

_Z95 = 1.96


def _exponential_rate(params: DecayParams) -> float:
    if params.kind is not DecayModelKind.EXPONENTIAL:
        raise BoundaryUndefined(
            f"boundary functionals are defined for the exponential family, got {params.kind.value}"
        )
    return params.rate


@dataclass(frozen=True)
class BoundaryEstimate:
    """Distance at which the effect falls to epsilon of its source level."""

    d_star_km: float
    epsilon: float
    se_km: float
    ci95_km: tuple[float, float]


@dataclass(frozen=True)
class DiffusionSummary:
    """Diffusivity implied by reading the fitted curve as a steady state.

    With unit decay per unit time, kappa = sqrt(1 / (2 nu)) inverts to
    nu = 1 / (2 kappa^2); nu is therefore in km^2 per unit time and all
    time-dependent quantities downstream inherit that unit convention.
    """

    nu: float
    xi_star: float
    sensitivity_d_nu: float
    elasticity: float
    epsilon: float


@dataclass(frozen=True)
class ExposureSpec:
    """Exposure horizon in the same time unit as the diffusivity."""

    horizon_years: float

    def __post_init__(self) -> None:
        if not self.horizon_years > 0:
            raise NonPositiveTime(f"horizon must be positive, got {self.horizon_years}")


class Verdict(str, enum.Enum):
    APPLIES = "Applies"
    WEAK_APPLIES = "WeakApplies"
    MARGINAL = "Marginal"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class DiagnosticVerdict:
    verdict: Verdict
    kappa: float
    se: float
    z: float
    r2: float
    d_star_km: float | None
    domain_span_km: float


def spatial_boundary(fit: FitResult, threshold: ThresholdSpec | float = 0.9) -> BoundaryEstimate:
    """Boundary distance d* = -ln(epsilon) / kappa with delta-method CI.

    Requires an exponential fit with a strictly positive rate;
    otherwise the boundary does not exist and BoundaryUndefined is
    raised.
    """
    spec = threshold if isinstance(threshold, ThresholdSpec) else ThresholdSpec(float(threshold))
    kappa = _exponential_rate(fit.params)
    if kappa <= 0.0:
        raise BoundaryUndefined(
            f"fitted rate {kappa:.6g} is not positive; the outcome does not decay"
        )
    d_star = -math.log(spec.epsilon) / kappa
    g_prime = math.log(spec.epsilon) / kappa**2
    se_kappa = float(fit.se[1])
    se = delta_method_se(d_star, g_prime, se_kappa)
    return BoundaryEstimate(
        d_star_km=d_star,
        epsilon=spec.epsilon,
        se_km=se,
        ci95_km=(d_star - _Z95 * se, d_star + _Z95 * se),
    )


def implied_diffusion(fit: FitResult, threshold: ThresholdSpec | float = 0.9) -> DiffusionSummary:
    """Implied diffusivity and boundary-growth coefficient.

    nu = 1 / (2 kappa^2); the boundary grows as xi* sqrt(t) with
    xi* = 2 sqrt(nu ln(1/epsilon)). The sensitivity of the static
    boundary to nu is d*(epsilon) / (2 nu) and its elasticity is
    exactly one half.
    """
    spec = threshold if isinstance(threshold, ThresholdSpec) else ThresholdSpec(float(threshold))
    kappa = _exponential_rate(fit.params)
    if kappa <= 0.0:
        raise BoundaryUndefined(
            f"fitted rate {kappa:.6g} is not positive; no diffusion interpretation"
        )
    nu = 1.0 / (2.0 * kappa**2)
    xi_star = 2.0 * math.sqrt(nu * math.log(1.0 / spec.epsilon))
    d_star = -math.log(spec.epsilon) / kappa
    return DiffusionSummary(
        nu=nu,
        xi_star=xi_star,
        sensitivity_d_nu=d_star / (2.0 * nu),
        elasticity=0.5,
        epsilon=spec.epsilon,
    )


def boundary_evolution(summary: DiffusionSummary, t):
    """Boundary position xi* sqrt(t) at time(s) t > 0."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0.0):
        raise NonPositiveTime("boundary evolution requires t > 0")
    out = summary.xi_star * np.sqrt(arr)
    return float(out) if arr.ndim == 0 else out


def boundary_velocity(summary: DiffusionSummary, t):
    """Boundary growth rate xi* / (2 sqrt(t)) at time(s) t > 0."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0.0):
        raise NonPositiveTime("boundary velocity requires t > 0")
    out = summary.xi_star / (2.0 * np.sqrt(arr))
    return float(out) if arr.ndim == 0 else out


def cumulative_exposure(fit: FitResult, spec: ExposureSpec, d):
    """Exposure accumulated over the horizon at distance d.

    With a time-constant effect level this is horizon * q * exp(-kappa d),
    in percentage-point-years when the outcome is in percentage points.
    """
    kappa = _exponential_rate(fit.params)
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0.0):
        raise NonPositiveTime("distance must be nonnegative")
    out = spec.horizon_years * fit.params.q * np.exp(-kappa * arr)
    return float(out) if arr.ndim == 0 else out


def classify_decay(
    kappa: float,
    se: float,
    r2: float,
    epsilon: float = 0.9,
    z_crit: float = _Z95,
    r2_cutoff: float = 0.01,
    domain_span_km: float = DEFAULT_DOMAIN_SPAN_KM,
) -> DiagnosticVerdict:
    """Categorical verdict on whether distance decay applies.

    Rejected when the rate is non-positive or statistically
    indistinguishable from zero; Marginal when significant but the
    implied boundary lies beyond the observable domain span;
    WeakApplies when significant and in-domain but the fit explains
    almost none of the variance; Applies otherwise. The mapping is a
    pure function of its inputs.
    """
    z = math.inf if se == 0.0 and kappa != 0.0 else (abs(kappa) / se if se > 0.0 else 0.0)
    d_star = -math.log(epsilon) / kappa if kappa > 0.0 else None
    if kappa <= 0.0 or z < z_crit:
        verdict = Verdict.REJECTED
    elif d_star is not None and d_star > domain_span_km:
        verdict = Verdict.MARGINAL
    elif r2 < r2_cutoff:
        verdict = Verdict.WEAK_APPLIES
    else:
        verdict = Verdict.APPLIES
    return DiagnosticVerdict(
        verdict=verdict,
        kappa=kappa,
        se=se,
        z=z,
        r2=r2,
        d_star_km=d_star,
        domain_span_km=domain_span_km,
    )


def sign_reversal_test(fit: FitResult, **kwargs) -> DiagnosticVerdict:
    """Apply the decay verdict to a fitted exponential curve."""
    kappa = _exponential_rate(fit.params)
    return classify_decay(kappa, float(fit.se[1]), fit.r2, **kwargs)


@dataclass(frozen=True)
class SplitRule:
    """Two-sided covariate split with an excluded middle.

    Units with covariate >= high_threshold form the high stratum, units
    with covariate < low_threshold the low stratum; everything between
    is excluded so the strata are well separated.
    """

    name: str
    covariate: str
    high_threshold: float
    low_threshold: float

    def __post_init__(self) -> None:
        if not self.low_threshold <= self.high_threshold:
            raise ValueError("low_threshold must not exceed high_threshold")


BUILTIN_SPLITS: dict[str, SplitRule] = {
    "elderly": SplitRule("elderly", "median_age", 60.0, 40.0),
    "education": SplitRule("education", "pct_bachelors", 30.0, 20.0),
    "female": SplitRule("female", "pct_female", 52.0, 48.0),
}


@dataclass
class StratifiedResult:
    """Separate fits for the high and low strata of a covariate split."""

    rule: SplitRule
    fits: dict[str, FitResult]
    ratio: float | None
    n_high: int
    n_low: int
    n_excluded: int


def stratified_fit(
    sample: Sample,
    rule: SplitRule,
    kind: DecayModelKind = DecayModelKind.EXPONENTIAL,
    min_n: int = 30,
    hac: HacConfig | None = None,
) -> StratifiedResult:
    """Fit the decay curve separately above and below a covariate split.

    The ratio of high to low rates is reported when both rates share a
    sign; with opposite signs the ratio is meaningless and left None
    while both fits are still returned.
    """
    if rule.covariate not in sample.covariates:
        raise MissingColumn(f"covariate {rule.covariate!r} not present in sample")
    values = sample.covariates[rule.covariate]
    high_mask = values >= rule.high_threshold
    low_mask = values < rule.low_threshold
    n_high, n_low = int(high_mask.sum()), int(low_mask.sum())
    if n_high < min_n or n_low < min_n:
        raise StratumTooSmall(
            f"strata sizes high={n_high} low={n_low} below minimum {min_n}"
        )
    fit_high = fit_nls(sample.subset(high_mask), kind, hac=hac)
    fit_low = fit_nls(sample.subset(low_mask), kind, hac=hac)
    rate_high, rate_low = fit_high.params.rate, fit_low.params.rate
    if rate_low != 0.0 and rate_high * rate_low > 0.0:
        ratio = rate_high / rate_low
    else:
        ratio = None
    return StratifiedResult(
        rule=rule,
        fits={"high": fit_high, "low": fit_low},
        ratio=ratio,
        n_high=n_high,
        n_low=n_low,
        n_excluded=int(sample.n - n_high - n_low),
    )


@dataclass
class KappaDecomposition:
    """Regression of log effective decay rates on group covariates.

    Variance shares are sequential: the mobility block enters first,
    the health block second, and whatever neither explains is the
    residual share, so the three shares sum to one.
    """

    coefficients: dict[str, float]
    intercept: float
    dropped: tuple[str, ...]
    variance_shares: dict[str, float]
    r2: float
    n_groups: int


DEFAULT_MOBILITY_BLOCK = ("road_density", "transit")
DEFAULT_HEALTH_BLOCK = ("poverty", "age_share")


def decompose_kappa(
    groups: list[tuple[float, dict[str, float]]],
    mobility_block: tuple[str, ...] = DEFAULT_MOBILITY_BLOCK,
    health_block: tuple[str, ...] = DEFAULT_HEALTH_BLOCK,
) -> KappaDecomposition:
    """Decompose variation in group-level decay rates across covariates.

    ``groups`` is a list of (kappa_eff, covariates) per group; all
    rates must be positive since the regression is on ln(kappa_eff).
    Covariates constant across groups are dropped (their coefficient is
    not identified) and reported. Requires at least two more groups
    than used covariates.
    """
    if not groups:
        raise TooFewObservations("no groups supplied")
    kappas = np.array([float(k) for k, _ in groups])
    if np.any(kappas <= 0.0):
        bad = [i for i, k in enumerate(kappas) if k <= 0.0]
        raise NonPositiveKappa(f"groups at positions {bad} have non-positive rates")
    ordered = [c for c in (*mobility_block, *health_block)]
    present = [c for c in ordered if all(c in cov for _, cov in groups)]
    if not present:
        raise MissingColumn(
            f"none of the block covariates {ordered} present in every group"
        )
    data = {c: np.array([float(cov[c]) for _, cov in groups]) for c in present}
    dropped = tuple(c for c in present if np.ptp(data[c]) == 0.0)
    used = [c for c in present if c not in dropped]
    n = len(groups)
    if n < len(used) + 2:
        raise TooFewObservations(
            f"need at least {len(used) + 2} groups for {len(used)} covariates, got {n}"
        )
    logk = np.log(kappas)
    sst = float(np.sum((logk - logk.mean()) ** 2))

    def sse_of(cols: list[str]) -> float:
        x = np.column_stack([np.ones(n)] + [data[c] for c in cols])
        coef, *_ = np.linalg.lstsq(x, logk, rcond=None)
        resid = logk - x @ coef
        return float(resid @ resid)

    mobility_used = [c for c in used if c in mobility_block]
    sse0 = sst
    sse_mob = sse_of(mobility_used) if mobility_used else sse0
    sse_full = sse_of(used)
    if sst > 0.0:
        share_mobility = (sse0 - sse_mob) / sst
        share_health = (sse_mob - sse_full) / sst
        residual = sse_full / sst
        r2 = 1.0 - sse_full / sst
    else:
        share_mobility = share_health = 0.0
        residual = 1.0
        r2 = 0.0
    x_full = np.column_stack([np.ones(n)] + [data[c] for c in used])
    coef = _ols(x_full, logk)
    return KappaDecomposition(
        coefficients={c: float(b) for c, b in zip(used, coef[1:])},
        intercept=float(coef[0]),
        dropped=dropped,
        variance_shares={
            "mobility": share_mobility,
            "health": share_health,
            "residual": residual,
        },
        r2=r2,
        n_groups=n,
    )
