"""Boundary, diffusion, exposure, verdict, and heterogeneity functionals."""

import math

import numpy as np
import pytest

from decaylab import (
    BUILTIN_SPLITS,
    BoundaryUndefined,
    DecayModelKind,
    DecayParams,
    ExposureSpec,
    FitResult,
    MissingColumn,
    NonPositiveKappa,
    NonPositiveTime,
    Sample,
    SplitRule,
    StratumTooSmall,
    ThresholdSpec,
    TooFewObservations,
    Verdict,
    boundary_evolution,
    boundary_velocity,
    classify_decay,
    cumulative_exposure,
    decompose_kappa,
    fit_nls,
    implied_diffusion,
    predict,
    sign_reversal_test,
    spatial_boundary,
    stratified_fit,
)

EXP = DecayModelKind.EXPONENTIAL

# reference curve: 10.74 pp at the source fading at 0.002837 per km
KAPPA = 0.002837
Q = 10.74
SE_KAPPA = 0.000155


def fake_fit(kind=EXP, q=Q, rate=KAPPA, se_q=0.05, se_rate=SE_KAPPA, r2=0.84, n=4000):
    """Hand-assembled fit carrying just the fields the functionals read."""
    se = np.array([se_q, se_rate])
    return FitResult(
        params=DecayParams(kind, q, rate),
        se=se,
        cov=np.diag(se**2),
        r2=r2,
        rmse=1.0,
        loglik=-100.0,
        aic=206.0,
        bic=210.0,
        n=n,
        residuals=np.zeros(n),
        converged=True,
        iterations=7,
    )


class TestSpatialBoundary:
    def test_reference_values(self):
        b = spatial_boundary(fake_fit(), threshold=0.9)
        assert b.d_star_km == pytest.approx(37.13800340423911, abs=1e-9)
        assert b.se_km == pytest.approx(2.0290414267384778, abs=1e-9)
        assert b.ci95_km[0] == pytest.approx(33.16108220783169, abs=1e-6)
        assert b.ci95_km[1] == pytest.approx(41.114924600646525, abs=1e-6)
        assert b.epsilon == 0.9

    def test_effect_at_boundary_is_epsilon_of_source(self):
        fit = fake_fit()
        b = spatial_boundary(fit, threshold=0.9)
        at_boundary = predict(fit.params, b.d_star_km)
        assert at_boundary == pytest.approx(0.9 * Q, rel=1e-12)

    def test_threshold_spec_and_float_agree(self):
        fit = fake_fit()
        a = spatial_boundary(fit, ThresholdSpec(0.8))
        b = spatial_boundary(fit, 0.8)
        assert a == b

    def test_higher_epsilon_means_tighter_boundary(self):
        fit = fake_fit()
        assert (
            spatial_boundary(fit, 0.95).d_star_km
            < spatial_boundary(fit, 0.9).d_star_km
        )

    def test_nonexponential_fit_rejected(self):
        for kind in (DecayModelKind.POWER_LAW, DecayModelKind.LOG_LINEAR):
            with pytest.raises(BoundaryUndefined):
                spatial_boundary(fake_fit(kind=kind))

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(BoundaryUndefined):
            spatial_boundary(fake_fit(rate=-0.001))
        with pytest.raises(BoundaryUndefined):
            spatial_boundary(fake_fit(rate=0.0))


class TestImpliedDiffusion:
    def test_reference_values(self):
        s = implied_diffusion(fake_fit(), 0.9)
        assert s.nu == pytest.approx(62122.84444601269, rel=1e-12)
        assert s.xi_star == pytest.approx(161.80599401706763, rel=1e-12)
        assert s.sensitivity_d_nu == pytest.approx(0.0002989077829212534, rel=1e-12)
        assert s.elasticity == 0.5

    def test_sensitivity_matches_finite_difference(self):
        # d*(nu) = -ln(eps) * sqrt(2 nu): differentiate numerically
        s = implied_diffusion(fake_fit(), 0.9)
        L = math.log(1 / 0.9)

        def d_star(nu):
            return L * math.sqrt(2.0 * nu)

        h = s.nu * 1e-6
        fd = (d_star(s.nu + h) - d_star(s.nu - h)) / (2.0 * h)
        assert s.sensitivity_d_nu == pytest.approx(fd, rel=1e-8)

    def test_elasticity_from_parts(self):
        s = implied_diffusion(fake_fit(), 0.9)
        d_star = spatial_boundary(fake_fit(), 0.9).d_star_km
        assert s.sensitivity_d_nu * s.nu / d_star == pytest.approx(0.5, rel=1e-12)

    def test_nonexponential_rejected(self):
        with pytest.raises(BoundaryUndefined):
            implied_diffusion(fake_fit(kind=DecayModelKind.POWER_LAW))


class TestBoundaryEvolution:
    def test_square_root_law(self):
        s = implied_diffusion(fake_fit(), 0.9)
        assert boundary_evolution(s, 1.0) == pytest.approx(161.80599401706763)
        assert boundary_evolution(s, 4.0) == pytest.approx(323.61198803413527)
        assert boundary_evolution(s, 9.0) == pytest.approx(485.4179820512029)

    def test_velocity_law(self):
        s = implied_diffusion(fake_fit(), 0.9)
        assert boundary_velocity(s, 1.0) == pytest.approx(80.90299700853382)
        assert boundary_velocity(s, 4.0) == pytest.approx(40.45149850426691)
        assert boundary_velocity(s, 9.0) == pytest.approx(26.967665669511273)

    def test_velocity_is_derivative_of_position(self):
        s = implied_diffusion(fake_fit(), 0.9)
        t, h = 3.7, 1e-6
        fd = (boundary_evolution(s, t + h) - boundary_evolution(s, t - h)) / (2 * h)
        assert boundary_velocity(s, t) == pytest.approx(fd, rel=1e-8)

    def test_array_input(self):
        s = implied_diffusion(fake_fit(), 0.9)
        out = boundary_evolution(s, np.array([1.0, 4.0]))
        assert isinstance(out, np.ndarray)
        assert out[1] == pytest.approx(2.0 * out[0])

    def test_nonpositive_time_rejected(self):
        s = implied_diffusion(fake_fit(), 0.9)
        for t in (0.0, -1.0, np.array([1.0, 0.0])):
            with pytest.raises(NonPositiveTime):
                boundary_evolution(s, t)
            with pytest.raises(NonPositiveTime):
                boundary_velocity(s, t)


class TestCumulativeExposure:
    def test_reference_value(self):
        phi = cumulative_exposure(fake_fit(), ExposureSpec(10.0), 10.0)
        assert phi == pytest.approx(104.39587697319465, rel=1e-12)

    def test_linear_in_horizon(self):
        fit = fake_fit()
        a = cumulative_exposure(fit, ExposureSpec(5.0), 25.0)
        b = cumulative_exposure(fit, ExposureSpec(10.0), 25.0)
        assert b == pytest.approx(2.0 * a, rel=1e-12)

    def test_at_boundary_equals_horizon_q_epsilon(self):
        fit = fake_fit()
        d_star = spatial_boundary(fit, 0.9).d_star_km
        phi = cumulative_exposure(fit, ExposureSpec(10.0), d_star)
        assert phi == pytest.approx(10.0 * Q * 0.9, rel=1e-12)

    def test_array_input(self):
        out = cumulative_exposure(fake_fit(), ExposureSpec(1.0), np.array([0.0, 10.0]))
        assert out[0] == pytest.approx(Q)
        assert out[1] < out[0]

    def test_bad_inputs(self):
        with pytest.raises(NonPositiveTime):
            ExposureSpec(0.0)
        with pytest.raises(NonPositiveTime):
            ExposureSpec(-3.0)
        with pytest.raises(NonPositiveTime):
            cumulative_exposure(fake_fit(), ExposureSpec(1.0), -1.0)
        with pytest.raises(BoundaryUndefined):
            cumulative_exposure(
                fake_fit(kind=DecayModelKind.LOG_LINEAR), ExposureSpec(1.0), 1.0
            )


class TestClassifyDecay:
    def test_applies(self):
        v = classify_decay(0.002837, 0.000155, 0.0129)
        assert v.verdict is Verdict.APPLIES
        assert v.z == pytest.approx(0.002837 / 0.000155)
        assert v.d_star_km == pytest.approx(37.13800340423911)

    def test_rejected_when_rate_nonpositive(self):
        assert classify_decay(0.0, 0.001, 0.5).verdict is Verdict.REJECTED
        assert classify_decay(-0.002, 0.0001, 0.5).verdict is Verdict.REJECTED
        assert classify_decay(-0.002, 0.0001, 0.5).d_star_km is None

    def test_rejected_when_insignificant(self):
        v = classify_decay(0.0001, 0.0001, 0.5)
        assert v.z == pytest.approx(1.0)
        assert v.verdict is Verdict.REJECTED

    def test_weak_applies_on_low_r2(self):
        v = classify_decay(0.000346, 0.0001, 0.008)
        assert v.verdict is Verdict.WEAK_APPLIES
        assert v.d_star_km == pytest.approx(304.5101608607698)

    def test_marginal_when_boundary_beyond_domain(self):
        v = classify_decay(2e-5, 1e-6, 0.5)
        assert v.verdict is Verdict.MARGINAL
        assert v.d_star_km == pytest.approx(5268.025782891317)
        assert v.d_star_km > v.domain_span_km

    def test_domain_span_override(self):
        assert classify_decay(2e-5, 1e-6, 0.5, domain_span_km=6000.0).verdict is (
            Verdict.APPLIES
        )

    def test_r2_cutoff_is_strict(self):
        assert classify_decay(0.002837, 0.000155, 0.01).verdict is Verdict.APPLIES
        assert (
            classify_decay(0.002837, 0.000155, 0.0099999).verdict
            is Verdict.WEAK_APPLIES
        )

    def test_zero_se_with_positive_rate_is_infinitely_significant(self):
        v = classify_decay(0.002837, 0.0, 0.5)
        assert v.z == math.inf
        assert v.verdict is Verdict.APPLIES

    def test_verdict_values_are_strings(self):
        assert Verdict.APPLIES.value == "Applies"
        assert Verdict.WEAK_APPLIES.value == "WeakApplies"
        assert Verdict.MARGINAL.value == "Marginal"
        assert Verdict.REJECTED.value == "Rejected"


class TestSignReversalTest:
    def test_wraps_exponential_fit(self):
        v = sign_reversal_test(fake_fit(r2=0.84))
        assert v.verdict is Verdict.APPLIES
        assert v.kappa == KAPPA
        assert v.se == pytest.approx(SE_KAPPA)

    def test_negative_fitted_rate_is_rejected(self):
        v = sign_reversal_test(fake_fit(rate=-0.001))
        assert v.verdict is Verdict.REJECTED

    def test_nonexponential_fit_rejected(self):
        with pytest.raises(BoundaryUndefined):
            sign_reversal_test(fake_fit(kind=DecayModelKind.POWER_LAW))

    def test_kwargs_forwarded(self):
        v = sign_reversal_test(fake_fit(r2=0.005), r2_cutoff=0.001)
        assert v.verdict is Verdict.APPLIES


def _stratified_sample(
    n=200, rate_high=0.006, rate_low=0.002, seed=0, noise_sd=0.0
):
    """Half the units sit above the age split, half below, with
    stratum-specific decay rates planted noiselessly by default."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(1.0, 400.0, n)
    age = np.where(np.arange(n) % 2 == 0, 65.0, 30.0)
    rate = np.where(age >= 60.0, rate_high, rate_low)
    y = 8.0 * np.exp(-rate * d)
    if noise_sd:
        y = y + rng.normal(0, noise_sd, n)
    return Sample(
        unit_ids=[f"u{i}" for i in range(n)],
        distances_km=d,
        outcomes=y,
        latitudes=np.linspace(-50, 50, n),
        longitudes=np.full(n, 5.0),
        covariates={"median_age": age},
    )


class TestStratifiedFit:
    RULE = SplitRule("elderly", "median_age", 60.0, 40.0)

    def test_recovers_planted_rate_ratio(self):
        res = stratified_fit(_stratified_sample(), self.RULE)
        assert res.ratio == pytest.approx(3.0, rel=1e-6)
        assert res.fits["high"].params.rate == pytest.approx(0.006, rel=1e-6)
        assert res.fits["low"].params.rate == pytest.approx(0.002, rel=1e-6)

    def test_counts_account_for_every_unit(self):
        s = _stratified_sample(n=101)
        res = stratified_fit(s, self.RULE)
        assert res.n_high + res.n_low + res.n_excluded == s.n
        assert res.n_excluded == 0

    def test_excluded_middle_between_thresholds(self):
        rng = np.random.default_rng(4)
        n = 150
        d = rng.uniform(1.0, 300.0, n)
        age = np.tile([65.0, 50.0, 30.0], n // 3)
        y = 8.0 * np.exp(-np.where(age >= 60.0, 0.006, 0.002) * d)
        s = Sample(
            [f"u{i}" for i in range(n)], d, y,
            np.linspace(-40, 40, n), np.full(n, 5.0),
            covariates={"median_age": age},
        )
        res = stratified_fit(s, self.RULE)
        assert res.n_excluded == 50
        assert res.n_high == res.n_low == 50
        assert res.ratio == pytest.approx(3.0, rel=1e-6)

    def test_missing_covariate(self):
        s = _stratified_sample()
        with pytest.raises(MissingColumn):
            stratified_fit(s, SplitRule("x", "income", 1.0, 0.0))

    def test_stratum_too_small(self):
        with pytest.raises(StratumTooSmall):
            stratified_fit(_stratified_sample(n=40), self.RULE, min_n=30)
        # and the override lets a small stratum through
        res = stratified_fit(_stratified_sample(n=40), self.RULE, min_n=10)
        assert res.n_high == 20

    def test_opposite_signs_leave_ratio_undefined(self):
        res = stratified_fit(
            _stratified_sample(rate_high=-0.002, rate_low=0.004), self.RULE
        )
        assert res.ratio is None
        assert set(res.fits) == {"high", "low"}

    def test_builtin_splits(self):
        assert set(BUILTIN_SPLITS) == {"elderly", "education", "female"}
        for rule in BUILTIN_SPLITS.values():
            assert rule.low_threshold <= rule.high_threshold

    def test_split_rule_threshold_order_enforced(self):
        with pytest.raises(ValueError):
            SplitRule("bad", "x", low_threshold=2.0, high_threshold=1.0)


def _factorial_groups(b_road, b_transit, c_pov, c_age, e_noise):
    """2^5 full factorial in +-1 codes: all columns exactly orthogonal,
    with the noise column hidden from the regression."""
    groups = []
    for i in range(32):
        bits = [1.0 if i >> k & 1 else -1.0 for k in range(5)]
        road, transit, pov, age, noise = bits
        logk = (
            -4.0
            + b_road * road
            + b_transit * transit
            + c_pov * pov
            + c_age * age
            + e_noise * noise
        )
        groups.append(
            (
                math.exp(logk),
                {
                    "road_density": road,
                    "transit": transit,
                    "poverty": pov,
                    "age_share": age,
                },
            )
        )
    return groups


class TestDecomposeKappa:
    def test_orthogonal_design_shares_are_exact(self):
        # mobility block carries 0.6 of the log-rate variance, health
        # 0.3, and the hidden orthogonal column the remaining 0.1
        groups = _factorial_groups(
            math.sqrt(0.3), math.sqrt(0.3), math.sqrt(0.15), math.sqrt(0.15),
            math.sqrt(0.1),
        )
        dec = decompose_kappa(groups)
        assert dec.variance_shares["mobility"] == pytest.approx(0.6, abs=1e-12)
        assert dec.variance_shares["health"] == pytest.approx(0.3, abs=1e-12)
        assert dec.variance_shares["residual"] == pytest.approx(0.1, abs=1e-12)
        assert dec.r2 == pytest.approx(0.9, abs=1e-12)
        assert dec.n_groups == 32
        assert dec.dropped == ()

    def test_coefficients_recovered_in_orthogonal_design(self):
        groups = _factorial_groups(0.5, -0.25, 0.125, 0.0625, 0.0)
        dec = decompose_kappa(groups)
        assert dec.coefficients["road_density"] == pytest.approx(0.5, abs=1e-12)
        assert dec.coefficients["transit"] == pytest.approx(-0.25, abs=1e-12)
        assert dec.coefficients["poverty"] == pytest.approx(0.125, abs=1e-12)
        assert dec.coefficients["age_share"] == pytest.approx(0.0625, abs=1e-12)
        assert dec.intercept == pytest.approx(-4.0, abs=1e-12)
        assert dec.r2 == pytest.approx(1.0, abs=1e-12)

    def test_shares_sum_to_one_on_noisy_data(self):
        rng = np.random.default_rng(77)
        groups = []
        for _ in range(40):
            cov = {
                "road_density": rng.normal(),
                "transit": rng.normal(),
                "poverty": rng.normal(),
                "age_share": rng.normal(),
            }
            groups.append((math.exp(rng.normal(-4.0, 0.5)), cov))
        dec = decompose_kappa(groups)
        assert sum(dec.variance_shares.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(v >= -1e-12 for v in dec.variance_shares.values())

    def test_nonpositive_rate_rejected_with_positions(self):
        groups = _factorial_groups(0.1, 0.1, 0.1, 0.1, 0.0)
        groups[3] = (0.0, groups[3][1])
        groups[7] = (-0.5, groups[7][1])
        with pytest.raises(NonPositiveKappa, match=r"\[3, 7\]"):
            decompose_kappa(groups)

    def test_constant_covariate_dropped(self):
        groups = _factorial_groups(0.3, 0.2, 0.1, 0.0, 0.05)
        pinned = [
            (k, {**cov, "poverty": 1.0}) for k, cov in groups
        ]
        dec = decompose_kappa(pinned)
        assert dec.dropped == ("poverty",)
        assert "poverty" not in dec.coefficients
        assert sum(dec.variance_shares.values()) == pytest.approx(1.0, abs=1e-12)

    def test_missing_blocks(self):
        groups = [(0.01, {"unrelated": 1.0}), (0.02, {"unrelated": 2.0})]
        with pytest.raises(MissingColumn):
            decompose_kappa(groups)

    def test_too_few_groups(self):
        # three groups only identify road and transit (the health block
        # is constant on this slice) and 3 < 2 covariates + 2
        groups = _factorial_groups(0.1, 0.1, 0.1, 0.1, 0.0)[:3]
        with pytest.raises(TooFewObservations):
            decompose_kappa(groups)
        with pytest.raises(TooFewObservations):
            decompose_kappa([])

    def test_custom_blocks(self):
        rng = np.random.default_rng(5)
        groups = [
            (math.exp(rng.normal(-4, 0.3)), {"a": rng.normal(), "b": rng.normal()})
            for _ in range(20)
        ]
        dec = decompose_kappa(groups, mobility_block=("a",), health_block=("b",))
        assert set(dec.coefficients) == {"a", "b"}
