"""Synthetic treatment panels and two-way fixed-effects benchmarks.

The data generator produces a balanced unit-by-year panel in which a
small share of units receives treatment at staggered opening years,
with a dynamic effect path (anticipation one period ahead, onset, a
peak, then geometric fade) modulated by distance to the unit's source.
Every constant of the generating process is recorded in the config and
echoed through ``PanelConfig.to_metadata`` so the truth behind any
generated panel is recoverable.

Estimators: the within (two-way fixed effects) regression with
cluster-robust standard errors by unit, an event study around the
opening year with the period before treatment as the omitted
reference, per-distance-band effects, and a treatment-by-modifier
interaction model. All of them require a balanced panel.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyBand,
    InsufficientPrePeriods,
    InvalidConfig,
    ModifierMissing,
    NoModifierVariation,
    NoVariationInTreatment,
    UnbalancedPanel,
)

__all__ = [
    "PanelObservation",
    "PanelConfig",
    "DidResult",
    "EventStudyResult",
    "BandEffect",
    "InteractionDidResult",
    "DEFAULT_PANEL_SEED",
    "DEFAULT_PANEL_CONFIG",
    "BANDED_EFFECT_CONFIG",
    "generate_synthetic_panel",
    "fit_twfe",
    "event_study",
    "distance_band_effects",
    "interaction_did",
]


@dataclass(frozen=True)
class PanelObservation:
    """One unit-year row of a treatment panel."""

    unit_id: str
    year: int
    outcome: float
    treated_post: int
    distance_km: float
    modifiers: tuple[tuple[str, int], ...] = ()

    def modifier(self, name: str) -> int | None:
        for key, value in self.modifiers:
            if key == name:
                return value
        return None


@dataclass(frozen=True)
class PanelConfig:
    """Constants of the synthetic panel generating process.

    The dynamic effect path assigns ``anticipation`` at event time -1,
    ``onset`` at 0, ``peak`` at +1, and ``peak * fade**(k-1)`` at
    k >= 2; event times at or below -2 carry no effect. The path is
    scaled by exp(-kappa_dgp * distance) per unit unless
    ``band_multipliers`` replaces that with a per-band profile. Setting
    ``homogeneous_effect`` switches to a constant effect for every
    treated post period with no dynamics and no distance modulation.
    """

    n_units: int = 1000
    start_year: int = 2015
    n_years: int = 10
    treated_share: float = 0.05
    opening_years: tuple[int, ...] = (2018, 2019)
    base_level: float = 25.0
    unit_effect_sd: float = 4.0
    year_effect_sd: float = 0.8
    noise_sd: float = 1.5
    anticipation: float = -0.3
    onset: float = -2.51
    peak: float = -3.04
    fade: float = 0.95
    effect_scale: float = 1.0
    kappa_dgp: float = 0.002837
    distance_log_mean: float = math.log(20.0)
    distance_log_sd: float = 0.9
    modifier_shares: tuple[tuple[str, float], ...] = (
        ("good_roads", 0.5),
        ("high_transit", 0.5),
    )
    interaction_effects: tuple[tuple[str, float], ...] = ()
    homogeneous_effect: float | None = None
    band_multipliers: tuple[tuple[float, float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.n_units < 2 or self.n_years < 2:
            raise InvalidConfig("panel needs at least 2 units and 2 years")
        if not 0.0 < self.treated_share <= 0.5:
            raise InvalidConfig(f"treated share must be in (0, 0.5], got {self.treated_share}")
        if not 0.0 <= self.fade < 1.0:
            raise InvalidConfig(f"fade must be in [0, 1), got {self.fade}")
        if self.noise_sd < 0 or self.unit_effect_sd < 0 or self.year_effect_sd < 0:
            raise InvalidConfig("standard deviations must be nonnegative")
        years = set(self.years)
        if not self.opening_years or not set(self.opening_years) <= years:
            raise InvalidConfig("opening years must fall inside the panel span")
        names = [name for name, _ in self.modifier_shares]
        if len(set(names)) != len(names):
            raise InvalidConfig("modifier names must be unique")
        for name, _ in self.interaction_effects:
            if name not in names:
                raise InvalidConfig(f"interaction references unknown modifier {name!r}")

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(range(self.start_year, self.start_year + self.n_years))

    def path_effect(self, event_time: int) -> float:
        if self.homogeneous_effect is not None:
            return self.homogeneous_effect if event_time >= 0 else 0.0
        if event_time <= -2:
            return 0.0
        if event_time == -1:
            base = self.anticipation
        elif event_time == 0:
            base = self.onset
        elif event_time == 1:
            base = self.peak
        else:
            base = self.peak * self.fade ** (event_time - 1)
        return base * self.effect_scale

    def distance_multiplier(self, distance_km: float) -> float:
        if self.homogeneous_effect is not None:
            return 1.0
        if self.band_multipliers is not None:
            for lo, hi, mult in self.band_multipliers:
                if lo <= distance_km < hi:
                    return mult
            return 1.0
        return math.exp(-self.kappa_dgp * distance_km)

    def to_metadata(self) -> dict:
        meta = dataclasses.asdict(self)
        meta["modifier_shares"] = dict(self.modifier_shares)
        meta["interaction_effects"] = dict(self.interaction_effects)
        if self.band_multipliers is not None:
            meta["band_multipliers"] = [list(b) for b in self.band_multipliers]
        return meta


DEFAULT_PANEL_SEED = 20240817

# Calibrated once against the reference replication targets (overall
# effect near -2.87, onset near -2.51, peak near -3.04) and then frozen
# together with DEFAULT_PANEL_SEED; regenerating with these values
# reproduces the committed benchmark panel bit for bit.
DEFAULT_PANEL_CONFIG = PanelConfig(effect_scale=1.15)

# A frozen demonstration process whose treatment effect is constant
# within distance bands rather than smoothly decaying; per-band
# estimates on this panel land on the band multipliers.
BANDED_EFFECT_CONFIG = PanelConfig(
    noise_sd=0.6,
    anticipation=0.0,
    onset=-1.0,
    peak=-1.0,
    fade=0.999,
    effect_scale=1.0,
    distance_log_mean=math.log(60.0),
    distance_log_sd=0.8,
    band_multipliers=(
        (0.0, 25.0, 0.92),
        (25.0, 50.0, 1.67),
        (50.0, 75.0, 0.57),
        (75.0, 100.0, 3.30),
        (100.0, 200.0, 2.80),
        (200.0, math.inf, 2.80),
    ),
)


def generate_synthetic_panel(config: PanelConfig, seed: int) -> list[PanelObservation]:
    """Generate a balanced panel from the configured process.

    The same (config, seed) pair always yields a bit-identical panel:
    every random draw happens in a fixed order from one generator.
    """
    rng = np.random.default_rng(seed)
    n, years = config.n_units, config.years
    distances = rng.lognormal(config.distance_log_mean, config.distance_log_sd, n)
    unit_effects = rng.normal(0.0, config.unit_effect_sd, n)
    year_effects = rng.normal(0.0, config.year_effect_sd, len(years))
    n_treated = max(1, int(round(config.treated_share * n)))
    treated_idx = rng.permutation(n)[:n_treated]
    openings = rng.choice(np.asarray(config.opening_years), size=n_treated)
    modifier_names = [name for name, _ in config.modifier_shares]
    modifier_flags = {
        name: (rng.random(n) < share).astype(int) for name, share in config.modifier_shares
    }
    noise = rng.normal(0.0, config.noise_sd, (n, len(years)))

    opening_by_unit = {int(i): int(o) for i, o in zip(treated_idx, openings)}
    interactions = dict(config.interaction_effects)
    width = len(str(n - 1))
    panel: list[PanelObservation] = []
    for i in range(n):
        uid = f"u{i:0{width}d}"
        opening = opening_by_unit.get(i)
        mods = tuple((name, int(modifier_flags[name][i])) for name in modifier_names)
        multiplier = config.distance_multiplier(float(distances[i]))
        for t, year in enumerate(years):
            effect = 0.0
            treated_post = 0
            if opening is not None:
                k = year - opening
                treated_post = int(k >= 0)
                effect = config.path_effect(k) * multiplier
                if treated_post and interactions:
                    effect += sum(
                        beta * modifier_flags[name][i] for name, beta in interactions.items()
                    )
            outcome = (
                config.base_level
                + unit_effects[i]
                + year_effects[t]
                + effect
                + noise[i, t]
            )
            panel.append(
                PanelObservation(
                    unit_id=uid,
                    year=int(year),
                    outcome=float(outcome),
                    treated_post=treated_post,
                    distance_km=float(distances[i]),
                    modifiers=mods,
                )
            )
    return panel


@dataclass
class DidResult:
    """A two-way fixed-effects estimate with unit-clustered SE."""

    beta: float
    se: float
    n_obs: int
    n_units: int
    n_treated_units: int
    r2_within: float


@dataclass
class EventStudyResult:
    """Dynamic effects by event time, relative to the period before opening."""

    coefficients: dict[int, tuple[float, float]]
    reference: int
    window: tuple[int, int]
    dropped_bins: tuple[int, ...]
    n_obs: int
    n_treated_units: int


@dataclass
class BandEffect:
    """Per-band TWFE estimate; ``error`` is set when the band is unusable."""

    lo_km: float
    hi_km: float
    n_treated_units: int
    result: DidResult | None
    error: str | None


@dataclass
class InteractionDidResult:
    beta_post: float
    beta_interaction: float
    se_post: float
    se_interaction: float
    n_obs: int
    n_units: int


class _PanelArrays:
    """Balanced-panel arrays with unit/year codes, validated once."""

    def __init__(self, panel: list[PanelObservation]) -> None:
        if not panel:
            raise UnbalancedPanel("empty panel")
        unit_ids = sorted({obs.unit_id for obs in panel})
        years = sorted({obs.year for obs in panel})
        self.unit_index = {u: i for i, u in enumerate(unit_ids)}
        self.year_index = {y: i for i, y in enumerate(years)}
        self.unit_ids = unit_ids
        self.years = years
        n_units, n_years = len(unit_ids), len(years)
        if len(panel) != n_units * n_years:
            raise UnbalancedPanel(
                f"{len(panel)} rows cannot form a balanced {n_units} x {n_years} panel"
            )
        seen = np.zeros((n_units, n_years), dtype=bool)
        n = len(panel)
        self.unit_codes = np.empty(n, dtype=int)
        self.year_codes = np.empty(n, dtype=int)
        self.y = np.empty(n)
        self.d = np.empty(n)
        self.distance = np.empty(n)
        for row, obs in enumerate(panel):
            ui = self.unit_index[obs.unit_id]
            yi = self.year_index[obs.year]
            if seen[ui, yi]:
                raise UnbalancedPanel(f"duplicate row for ({obs.unit_id}, {obs.year})")
            seen[ui, yi] = True
            self.unit_codes[row] = ui
            self.year_codes[row] = yi
            self.y[row] = obs.outcome
            self.d[row] = obs.treated_post
            self.distance[row] = obs.distance_km
        if not seen.all():
            raise UnbalancedPanel("panel has missing unit-year cells")
        self.n_units = n_units
        self.n_years = n_years
        self.n = n

    def demean(self, v: np.ndarray) -> np.ndarray:
        unit_means = np.bincount(self.unit_codes, weights=v, minlength=self.n_units)
        unit_means /= self.n_years
        year_means = np.bincount(self.year_codes, weights=v, minlength=self.n_years)
        year_means /= self.n_units
        return v - unit_means[self.unit_codes] - year_means[self.year_codes] + v.mean()

    def treated_units(self) -> dict[int, int]:
        """Map unit code -> opening year for units ever treated."""
        openings: dict[int, int] = {}
        treated_rows = self.d > 0
        for ui, yi in zip(self.unit_codes[treated_rows], self.year_codes[treated_rows]):
            year = self.years[yi]
            if ui not in openings or year < openings[ui]:
                openings[int(ui)] = int(year)
        return openings


def _cluster_cov(
    x: np.ndarray, resid: np.ndarray, clusters: np.ndarray, n_absorbed: int
) -> np.ndarray:
    """Cluster-robust covariance with the usual finite-sample factor."""
    xtx_inv = np.linalg.inv(x.T @ x)
    scores = x * resid[:, None]
    n_clusters = int(clusters.max()) + 1
    p = x.shape[1]
    sums = np.zeros((n_clusters, p))
    np.add.at(sums, clusters, scores)
    meat = sums.T @ sums
    n = x.shape[0]
    k = n_absorbed + p
    correction = (n_clusters / (n_clusters - 1)) * ((n - 1) / max(n - k, 1))
    return correction * xtx_inv @ meat @ xtx_inv


def fit_twfe(panel: list[PanelObservation]) -> DidResult:
    """Two-way fixed-effects regression of outcome on treated-post.

    The outcome and treatment indicator are demeaned by unit and by
    year (within transformation); the slope on the demeaned indicator
    is the TWFE effect. Standard errors are clustered by unit.
    """
    arrays = _PanelArrays(panel)
    y_t = arrays.demean(arrays.y)
    d_t = arrays.demean(arrays.d)
    sxx = float(d_t @ d_t)
    if np.ptp(arrays.d) == 0.0 or sxx < 1e-12 * arrays.n:
        raise NoVariationInTreatment("treated-post has no within variation")
    beta = float(d_t @ y_t) / sxx
    resid = y_t - beta * d_t
    cov = _cluster_cov(
        d_t[:, None], resid, arrays.unit_codes, arrays.n_units + arrays.n_years - 1
    )
    syy = float(y_t @ y_t)
    r2_within = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    openings = arrays.treated_units()
    return DidResult(
        beta=beta,
        se=float(math.sqrt(cov[0, 0])),
        n_obs=arrays.n,
        n_units=arrays.n_units,
        n_treated_units=len(openings),
        r2_within=r2_within,
    )


def event_study(
    panel: list[PanelObservation], window: tuple[int, int] = (-3, 6)
) -> EventStudyResult:
    """Dynamic treatment effects by event time.

    Event time is the year minus the unit's opening year; event time -1
    is the omitted reference and times beyond the window are binned at
    its endpoints. Requires at least one treated observation earlier
    than the reference period so pre-trends are estimable.
    """
    min_k, max_k = window
    if not (min_k <= -2 and max_k >= 0):
        raise InvalidConfig(f"window must span at least [-2, 0], got {window}")
    arrays = _PanelArrays(panel)
    openings = arrays.treated_units()
    if not openings:
        raise NoVariationInTreatment("no treated units in the panel")
    event_time = np.full(arrays.n, np.iinfo(int).min)
    for row in range(arrays.n):
        opening = openings.get(int(arrays.unit_codes[row]))
        if opening is not None:
            event_time[row] = arrays.years[arrays.year_codes[row]] - opening
    is_treated_unit = event_time > np.iinfo(int).min
    if not (event_time[is_treated_unit] <= -2).any():
        raise InsufficientPrePeriods(
            "no treated observations earlier than the reference period"
        )
    binned = np.clip(event_time, min_k, max_k)
    bins = [k for k in range(min_k, max_k + 1) if k != -1]
    columns = []
    kept_bins = []
    dropped = []
    for k in bins:
        col = ((binned == k) & is_treated_unit).astype(float)
        if col.any():
            columns.append(col)
            kept_bins.append(k)
        else:
            dropped.append(k)
    x = np.column_stack([arrays.demean(c) for c in columns])
    y_t = arrays.demean(arrays.y)
    coef, _, rank, _ = np.linalg.lstsq(x, y_t, rcond=None)
    if rank < x.shape[1]:
        raise NoVariationInTreatment("event-time design is collinear after demeaning")
    resid = y_t - x @ coef
    cov = _cluster_cov(x, resid, arrays.unit_codes, arrays.n_units + arrays.n_years - 1)
    ses = np.sqrt(np.diag(cov))
    coefficients = {k: (float(b), float(s)) for k, b, s in zip(kept_bins, coef, ses)}
    coefficients[-1] = (0.0, 0.0)
    return EventStudyResult(
        coefficients=dict(sorted(coefficients.items())),
        reference=-1,
        window=window,
        dropped_bins=tuple(dropped),
        n_obs=arrays.n,
        n_treated_units=len(openings),
    )


def distance_band_effects(
    panel: list[PanelObservation], bands: list[tuple[float, float]]
) -> list[BandEffect]:
    """TWFE effect per distance band of treated units.

    Each band's subsample keeps the treated units whose distance falls
    in [lo, hi) together with every never-treated unit. A band with no
    treated units (or a failing fit) is flagged and the rest proceed.
    """
    if not bands:
        raise InvalidConfig("no distance bands supplied")
    for lo, hi in bands:
        if not lo < hi:
            raise InvalidConfig(f"band [{lo}, {hi}) is empty")
    for (lo1, hi1), (lo2, hi2) in zip(bands, bands[1:]):
        if hi1 > lo2:
            raise InvalidConfig("bands must be disjoint and ordered")
    treated_ids = {obs.unit_id for obs in panel if obs.treated_post}
    unit_distance: dict[str, float] = {}
    for obs in panel:
        unit_distance.setdefault(obs.unit_id, obs.distance_km)
    control_rows = [obs for obs in panel if obs.unit_id not in treated_ids]
    results: list[BandEffect] = []
    for lo, hi in bands:
        in_band = {
            uid for uid in treated_ids if lo <= unit_distance[uid] < hi
        }
        if not in_band:
            results.append(
                BandEffect(lo, hi, 0, None, f"EmptyBand: no treated units in [{lo}, {hi})")
            )
            continue
        sub = [obs for obs in panel if obs.unit_id in in_band] + control_rows
        try:
            fit = fit_twfe(sub)
        except (NoVariationInTreatment, UnbalancedPanel) as exc:
            results.append(BandEffect(lo, hi, len(in_band), None, f"{type(exc).__name__}: {exc}"))
            continue
        results.append(BandEffect(lo, hi, len(in_band), fit, None))
    if all(band.error is not None for band in results):
        raise EmptyBand("every requested band is empty or failed")
    return results


def interaction_did(panel: list[PanelObservation], modifier: str) -> InteractionDidResult:
    """TWFE with treated-post and its interaction with a binary modifier."""
    arrays = _PanelArrays(panel)
    flags = np.empty(arrays.n)
    for row, obs in enumerate(panel):
        value = obs.modifier(modifier)
        if value is None:
            raise ModifierMissing(f"modifier {modifier!r} missing for unit {obs.unit_id}")
        flags[row] = float(value)
    d = arrays.d
    if np.ptp(d) == 0.0:
        raise NoVariationInTreatment("treated-post has no variation")
    treated_units = {int(u) for u, flag in zip(arrays.unit_codes, d) if flag > 0}
    treated_mask = np.isin(arrays.unit_codes, list(treated_units))
    if np.ptp(flags[treated_mask]) == 0.0:
        raise NoModifierVariation(
            f"modifier {modifier!r} is constant across treated units"
        )
    inter = d * flags
    x = np.column_stack([arrays.demean(d), arrays.demean(inter)])
    y_t = arrays.demean(arrays.y)
    coef, _, rank, _ = np.linalg.lstsq(x, y_t, rcond=None)
    if rank < 2:
        raise NoModifierVariation("interaction design is collinear after demeaning")
    resid = y_t - x @ coef
    cov = _cluster_cov(x, resid, arrays.unit_codes, arrays.n_units + arrays.n_years - 1)
    return InteractionDidResult(
        beta_post=float(coef[0]),
        beta_interaction=float(coef[1]),
        se_post=float(math.sqrt(cov[0, 0])),
        se_interaction=float(math.sqrt(cov[1, 1])),
        n_obs=arrays.n,
        n_units=arrays.n_units,
    )
