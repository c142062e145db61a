import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_dataset
from manyiv.core.leave_out import LeaveOut, RankCollapseError, leave_out_projection
from manyiv.core.projections import ProjectionBundle
from manyiv.models.dataset import Dataset


@pytest.fixture
def design():
    dataset = make_dataset(10, 2, seed=21)
    return dataset, ProjectionBundle.build(dataset)


def _refit(Z, v, drop):
    keep = np.array([i not in drop for i in range(len(v))])
    coef, *_ = np.linalg.lstsq(Z[keep], v[keep], rcond=None)
    return coef, Z @ coef, Z @ np.linalg.inv(Z[keep].T @ Z[keep]) @ Z.T


def test_empty_drop_is_full_sample(design):
    dataset, bundle = design
    lo = leave_out_projection(bundle)
    assert_allclose(lo.projection_matrix(), bundle.P)
    assert_allclose(lo.fitted(dataset.y), bundle.P @ dataset.y)


@pytest.mark.parametrize("drop", [(3,), (0, 7), (1, 4, 9)])
def test_downdate_matches_refit(design, drop):
    dataset, bundle = design
    Z, y = np.asarray(dataset.Z), np.asarray(dataset.y)
    coef, fitted, p_tilde = _refit(Z, y, drop)

    lo = leave_out_projection(bundle, drop)
    assert_allclose(lo.fitted(y), fitted, rtol=1e-10, atol=1e-10)
    assert_allclose(lo.coefficients(y), coef, rtol=1e-10, atol=1e-10)
    assert_allclose(lo.projection_matrix(), p_tilde, atol=1e-10)
    assert_allclose(lo.leverage(), np.diag(p_tilde), atol=1e-10)
    for i in drop:
        assert_allclose(lo.projection_row(i), p_tilde[i], atol=1e-10)


def test_annihilator_row_zeroes_dropped_columns(design):
    _, bundle = design
    lo = leave_out_projection(bundle, (2, 5))
    row = lo.annihilator_row(2)
    assert row[5] == 0.0
    assert row[2] == pytest.approx(1.0)
    assert row[0] == pytest.approx(-lo.projection_row(2)[0])


def test_singleton_group_collapses():
    labels = np.array([0, 0, 1, 1, 2])
    Z = (labels[:, None] == np.arange(3)[None, :]).astype(float)
    dataset = Dataset(y=np.arange(5.0), x=np.ones(5), Z=Z, W=np.zeros((5, 0)), group_labels=labels)
    bundle = ProjectionBundle.from_groups(dataset)
    with pytest.raises(RankCollapseError) as info:
        leave_out_projection(bundle, (4,))
    assert info.value.drop == (4,)


def test_too_many_drops(design):
    _, bundle = design
    with pytest.raises(ValueError):
        LeaveOut(bundle.P, (0, 1, 2, 3))


def test_out_of_range_drop(design):
    _, bundle = design
    with pytest.raises(IndexError):
        LeaveOut(bundle.P, (10,))


def test_coefficients_need_basis(design):
    dataset, bundle = design
    with pytest.raises(ValueError):
        LeaveOut(bundle.P, (1,)).coefficients(dataset.y)
