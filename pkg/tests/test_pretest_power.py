import numpy as np
import pytest

from conftest import make_groups
from manyiv.core.projections import ProjectionBundle
from manyiv.models.outcomes import Decision, Flag
from manyiv.services.power import power_curve, theoretical_power
from manyiv.services.pretest import DegenerateUpsilonError, first_stage_f, pretest_ftilde
from manyiv.services.variance import upsilon


def test_power_example():
    pred = theoretical_power(mu2=2.5 * np.sqrt(40), k=40, phi=1.6, psi=1.0, delta=1.0)
    # Δ²μ²/√(KΦ) = 2.5·√40/√64 ≈ 1.976
    assert pred.ar_power == pytest.approx(0.63, abs=0.01)
    assert 0.0 <= pred.lm_power <= 1.0


def test_power_at_null_is_alpha():
    pred = theoretical_power(mu2=10.0, k=10, phi=1.0, psi=1.0, delta=0.0, alpha=0.05)
    assert pred.ar_power == pytest.approx(0.05)
    assert pred.lm_power == pytest.approx(0.05)


def test_power_curve_is_symmetric():
    curve = power_curve(mu2=15.0, k=40, phi=1.6, psi=2.0, deltas=[-1.0, 1.0])
    assert curve[0].ar_power == pytest.approx(curve[1].ar_power)
    assert curve[0].lm_power == pytest.approx(curve[1].lm_power)


def test_power_needs_positive_normalizers():
    with pytest.raises(ValueError):
        theoretical_power(1.0, 1, 0.0, 1.0, 0.5)


def test_strong_groups_pass_pretest():
    dataset = make_groups(40, 5, seed=4, strength=2.0)
    bundle = ProjectionBundle.from_groups(dataset)
    out = pretest_ftilde(dataset, bundle)
    assert out.decision == Decision.STRONG
    assert out.ftilde > 4.14
    assert out.first_stage_F > 1.0


def test_cutoff_boundary_is_weak(group_dataset):
    bundle = ProjectionBundle.from_groups(group_dataset)
    exact = pretest_ftilde(group_dataset, bundle)
    at_cutoff = pretest_ftilde(group_dataset, bundle, cutoff=exact.ftilde)
    assert at_cutoff.decision == Decision.WEAK
    assert Flag.WEAK_IDENTIFICATION in at_cutoff.flags


def test_strong_groups_have_positive_upsilon():
    dataset = make_groups(40, 5, seed=4, strength=2.0)
    bundle = ProjectionBundle.from_groups(dataset)
    out = pretest_ftilde(dataset, bundle)
    assert out.upsilon.raw > 0.0
    assert not out.upsilon.degenerate
    assert out.ftilde == pytest.approx(
        float(dataset.x @ bundle.jack @ dataset.x) / np.sqrt(40 * out.upsilon.value)
    )


def test_ftilde_grows_with_first_stage_strength():
    weak = make_groups(40, 5, seed=4, strength=0.5)
    strong = make_groups(40, 5, seed=4, strength=3.0)
    bundle = ProjectionBundle.from_groups(weak)
    assert pretest_ftilde(strong, bundle).ftilde > pretest_ftilde(weak, bundle).ftilde
    # the normalizer only sees MX, which the group signal does not reach
    assert upsilon(strong.x, bundle).raw == pytest.approx(upsilon(weak.x, bundle).raw, rel=1e-9)


def test_zero_regressor_raises(group_dataset):
    bundle = ProjectionBundle.from_groups(group_dataset)
    flat = group_dataset.with_regressor(np.zeros(group_dataset.n))
    with pytest.raises(DegenerateUpsilonError):
        pretest_ftilde(flat, bundle)


def test_regressor_in_instrument_span_raises(group_dataset):
    bundle = ProjectionBundle.from_groups(group_dataset)
    fitted = group_dataset.with_regressor(np.asarray(group_dataset.Z) @ np.arange(1.0, 41.0))
    with pytest.raises(DegenerateUpsilonError):
        pretest_ftilde(fitted, bundle)


def test_controls_pretest_is_approximate(controls_dataset):
    bundle = ProjectionBundle.build(controls_dataset)
    out = pretest_ftilde(controls_dataset, bundle)
    assert Flag.APPROXIMATE in out.flags


def test_first_stage_f_formula(random_dataset):
    bundle = ProjectionBundle.build(random_dataset)
    x = np.asarray(random_dataset.x)
    expected = (x @ bundle.P @ x / 3) / (x @ bundle.M @ x / (random_dataset.n - 3))
    assert first_stage_f(random_dataset, bundle) == pytest.approx(expected)
