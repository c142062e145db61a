import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from conftest import make_dataset
from manyiv.core.projections import ProjectionBundle
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import EstimatorId, Flag
from manyiv.services.estimators import (
    DegenerateDenominatorError,
    HighLeverageError,
    InadmissibleWeightsError,
    SaturatedFirstStageError,
    beta1_ijive,
    beta2_naive,
    beta3_zero_diag,
    check_weights,
    concentration,
    estimate,
    jive1,
    jive2,
    jive_se,
    tsls,
    wald_interval,
)
from manyiv.services.zero_diagonal import compute_theta


def test_pair_example_all_estimators_give_two(pair_dataset, pair_bundle):
    assert tsls(pair_dataset, pair_bundle).beta_hat == pytest.approx(2.0)
    out = jive2(pair_dataset, pair_bundle)
    assert out.beta_hat == pytest.approx(2.0)
    assert out.denominator == pytest.approx(2.0)
    assert jive1(pair_dataset, pair_bundle).beta_hat == pytest.approx(2.0)


def test_exact_fit_has_no_standard_error(pair_dataset, pair_bundle):
    out = jive2(pair_dataset, pair_bundle)
    assert out.std_error is None
    assert Flag.ZERO_RESIDUALS in out.flags
    assert jive_se(pair_dataset, pair_bundle, 2.0) == 0.0


def test_zero_outcome_gives_zero(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    zero = random_dataset.with_outcome(np.zeros(random_dataset.n))
    for eid in (EstimatorId.TSLS, EstimatorId.JIVE1, EstimatorId.JIVE2):
        assert estimate(eid, zero, bundle).beta_hat == 0.0


def test_saturated_first_stage():
    n = 5
    z = np.eye(n)[:, :4]
    dataset = Dataset(y=np.arange(5.0), x=np.arange(1.0, 6.0), Z=z, W=np.zeros((n, 0)))
    bundle = ProjectionBundle.build(dataset)
    # P = diag(1, 1, 1, 1, 0): no off-diagonal weight at all
    with pytest.raises(SaturatedFirstStageError):
        jive2(dataset, bundle)
    with pytest.raises(HighLeverageError):
        jive1(dataset, bundle)
    expected = float(dataset.y[:4] @ dataset.x[:4] / (dataset.x[:4] @ dataset.x[:4]))
    assert tsls(dataset, bundle).beta_hat == pytest.approx(expected)


def test_degenerate_denominator(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    flat = random_dataset.with_regressor(np.zeros(random_dataset.n))
    with pytest.raises(DegenerateDenominatorError):
        jive2(flat, bundle)


@pytest.mark.parametrize("seed", range(5))
def test_jack_knife_matches_brute_force(seed):
    dataset = make_dataset(14, 3, seed=seed)
    bundle = ProjectionBundle.build(dataset)
    x, y, Z = np.asarray(dataset.x), np.asarray(dataset.y), np.asarray(dataset.Z)
    p = oracles.projection(Z)
    assert jive2(dataset, bundle).beta_hat == pytest.approx(oracles.jack_ratio(p, x, y), rel=1e-10)
    assert jive1(dataset, bundle).beta_hat == pytest.approx(oracles.jive1_refit(Z, x, y), rel=1e-9)
    assert tsls(dataset, bundle).beta_hat == pytest.approx(float(x @ p @ y / (x @ p @ x)), rel=1e-10)


def test_jive1_equals_jive2_on_balanced_groups(group_dataset):
    bundle = ProjectionBundle.from_groups(group_dataset)
    assert jive1(group_dataset, bundle).beta_hat == pytest.approx(jive2(group_dataset, bundle).beta_hat, rel=1e-12)


def test_scale_equivariance(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    base = jive2(random_dataset, bundle)
    scaled_y = jive2(random_dataset.with_outcome(3.0 * np.asarray(random_dataset.y)), bundle)
    scaled_x = jive2(random_dataset.with_regressor(2.0 * np.asarray(random_dataset.x)), bundle)
    assert scaled_y.beta_hat == pytest.approx(3.0 * base.beta_hat, rel=1e-12)
    assert scaled_x.beta_hat == pytest.approx(base.beta_hat / 2.0, rel=1e-12)


def test_robust_se_matches_explicit_sum(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    out = jive2(random_dataset, bundle)
    x, y = np.asarray(random_dataset.x), np.asarray(random_dataset.y)
    c = bundle.jack
    r = y - out.beta_hat * x
    n = len(x)
    own = sum((c[:, i] @ x) ** 2 * r[i] ** 2 for i in range(n))
    cross = sum(c[i, j] * c[j, i] * x[i] * r[i] * x[j] * r[j] for i in range(n) for j in range(n) if i != j)
    expected = np.sqrt(own + cross) / abs(out.denominator)
    assert out.std_error == pytest.approx(expected, rel=1e-10)


def test_controls_estimators_match_brute_force(controls_dataset):
    bundle = ProjectionBundle.build(controls_dataset)
    x, y = np.asarray(controls_dataset.x), np.asarray(controls_dataset.y)
    Z, W = np.asarray(controls_dataset.Z), np.asarray(controls_dataset.W)
    m_w = np.eye(len(x)) - oracles.projection(W)
    p_perp = oracles.projection(m_w @ Z)

    assert beta1_ijive(controls_dataset, bundle).beta_hat == pytest.approx(
        oracles.jack_ratio(p_perp, m_w @ x, m_w @ y), rel=1e-9
    )
    assert beta2_naive(controls_dataset, bundle).beta_hat == pytest.approx(
        oracles.jack_ratio(p_perp, x, y), rel=1e-9
    )
    a = oracles.zero_diag_weights(Z, W)
    weights = compute_theta(bundle, W)
    out = beta3_zero_diag(controls_dataset, bundle, weights)
    assert out.beta_hat == pytest.approx(float(x @ a @ y / (x @ a @ x)), rel=1e-8)
    assert out.std_error is not None and out.std_error > 0


def test_beta1_without_controls_is_jive2(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    assert beta1_ijive(random_dataset, bundle).beta_hat == pytest.approx(jive2(random_dataset, bundle).beta_hat)


def test_beta3_is_exact_when_outcome_is_linear_in_x_and_controls(controls_dataset):
    bundle = ProjectionBundle.build(controls_dataset)
    W = np.asarray(controls_dataset.W)
    x = np.asarray(controls_dataset.x)
    y = 0.7 * x + W @ np.array([2.0, -1.0, 0.5])
    exact = Dataset.from_arrays(y, x, np.asarray(controls_dataset.Z), W)
    out = beta3_zero_diag(exact, bundle, compute_theta(bundle, W))
    assert out.beta_hat == pytest.approx(0.7, rel=1e-8)


def test_beta3_without_controls_is_jive2(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    weights = compute_theta(bundle)
    assert_allclose(weights.theta, bundle.hat_p, atol=1e-10)
    out = beta3_zero_diag(random_dataset, bundle, weights)
    assert out.beta_hat == pytest.approx(jive2(random_dataset, bundle).beta_hat, rel=1e-10)
    assert estimate("beta3", random_dataset, bundle).beta_hat == pytest.approx(out.beta_hat)


def test_check_weights_rejects_bad_matrices(controls_dataset):
    bundle = ProjectionBundle.build(controls_dataset)
    W = np.asarray(controls_dataset.W)
    with pytest.raises(InadmissibleWeightsError) as info:
        check_weights(bundle.P_perp, W)
    assert info.value.property == "zero diagonal"
    with pytest.raises(InadmissibleWeightsError):
        check_weights(bundle.jack, W)


def test_wald_interval():
    from manyiv.models.outcomes import EstimateOutcome

    out = EstimateOutcome(beta_hat=1.0, std_error=0.5, estimator_id=EstimatorId.JIVE2, denominator=1.0)
    interval = wald_interval(out, 0.05)
    assert interval.lower == pytest.approx(1.0 - 1.959963984540054 * 0.5)
    assert interval.upper == pytest.approx(1.0 + 1.959963984540054 * 0.5)
    with pytest.raises(ValueError):
        wald_interval(out.model_copy(update={"std_error": None}))


def test_concentration_on_groups(group_dataset):
    bundle = ProjectionBundle.from_groups(group_dataset)
    pi = np.full(group_dataset.k_z, 0.5)
    conc = concentration(pi, group_dataset, bundle)
    # within-group signal is constant 0.5: Σ_{i≠j} P_ij = K (n_g − 1)
    assert conc.mu2 == pytest.approx(0.25 * 40 * 4)
    assert conc.signal == pytest.approx(0.25 * 200)
    assert conc.strength == pytest.approx(conc.mu2 / np.sqrt(40))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(200))
def test_estimators_match_oracles_across_seeds(seed):
    n, k = 14 + seed % 7, 2 + seed % 2
    if seed % 2:
        dataset = make_dataset(n, k, seed=3000 + seed, k_w=3)
        bundle = ProjectionBundle.build(dataset)
        x, y = np.asarray(dataset.x), np.asarray(dataset.y)
        Z, W = np.asarray(dataset.Z), np.asarray(dataset.W)
        m_w = np.eye(n) - oracles.projection(W)
        p_perp = oracles.projection(m_w @ Z)
        assert beta1_ijive(dataset, bundle).beta_hat == pytest.approx(
            oracles.jack_ratio(p_perp, m_w @ x, m_w @ y), rel=1e-8
        )
        assert beta2_naive(dataset, bundle).beta_hat == pytest.approx(oracles.jack_ratio(p_perp, x, y), rel=1e-8)
        a = oracles.zero_diag_weights(Z, W)
        out = beta3_zero_diag(dataset, bundle, compute_theta(bundle, W))
        assert out.beta_hat == pytest.approx(float(x @ a @ y / (x @ a @ x)), rel=1e-7)
    else:
        dataset = make_dataset(n, k, seed=3000 + seed)
        bundle = ProjectionBundle.build(dataset)
        x, y, Z = np.asarray(dataset.x), np.asarray(dataset.y), np.asarray(dataset.Z)
        p = oracles.projection(Z)
        assert jive2(dataset, bundle).beta_hat == pytest.approx(oracles.jack_ratio(p, x, y), rel=1e-9)
        assert jive1(dataset, bundle).beta_hat == pytest.approx(oracles.jive1_refit(Z, x, y), rel=1e-8)
