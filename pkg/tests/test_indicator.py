import numpy as np
import pytest

from splitflow.datasets import DiscreteTarget, sample_prior, two_atom_target
from splitflow.dynamics import TimeGrid, integrate_ensemble
from splitflow.errors import DomainError
from splitflow.field import flow_evaluator, schedule_scalars
from splitflow.indicator import (
    build_indicator,
    delta_field,
    detect_t_star,
    lambda_matrix,
    positions_matrix,
    top_k_select,
)
from splitflow.schedule import default_schedule


def small_ensemble(target, n=6, seed=2, grid=None):
    grid = grid or TimeGrid(0.001, 0.9, 30)
    ev = flow_evaluator(target, default_schedule())
    x0 = sample_prior(n, seed=seed).points
    return integrate_ensemble(x0, ev, grid).records()


def test_top_k_examples():
    assert top_k_select([3, 1, 2], 2).tolist() == [0, 2]
    assert top_k_select([5, 5, 5], 2).tolist() == [0, 1]
    with pytest.raises(DomainError):
        top_k_select([1.0, 2.0], 3)


def test_top_k_matches_sort_oracle():
    rng = np.random.default_rng(1)
    values = rng.normal(size=1000)
    got = top_k_select(values, 30)
    oracle = sorted(range(1000), key=lambda i: (-values[i], i))[:30]
    assert got.tolist() == oracle


def test_indicator_constant_series():
    t = np.linspace(0.1, 0.9, 41)
    lam = np.full((41, 7), 2.5)
    series = build_indicator(lam, t, k=3, smoothing_window=5)
    assert np.all(series.topk_mean_lambda == 2.5)
    assert series.cumulative_integral[0] == 0.0
    assert np.max(np.abs(series.cumulative_integral - 2.5 * (t - 0.1))) <= 1e-12
    assert np.max(np.abs(series.slope - 2.5)) <= 1e-12


def test_indicator_linear_series_integral():
    t = np.linspace(0.0, 1.0, 101)
    lam = np.tile(t[:, None], (1, 4))
    series = build_indicator(lam, t, k=2, smoothing_window=1)
    # trapezoid integrates a linear integrand exactly
    assert np.max(np.abs(series.cumulative_integral - 0.5 * t ** 2)) <= 1e-14


def test_indicator_spike_localization():
    t = np.linspace(0.0, 1.0, 50)
    lam = np.zeros((50, 5))
    j = 24
    lam[j, 0] = 1.0
    series = build_indicator(lam, t, k=1, smoothing_window=5)
    assert abs(int(np.argmax(series.slope)) - j) <= 2


def test_indicator_validation():
    t = np.linspace(0.1, 0.9, 9)
    lam = np.zeros((9, 3))
    with pytest.raises(DomainError):
        build_indicator(lam, t, k=4, smoothing_window=3)
    with pytest.raises(DomainError):
        build_indicator(lam, t, k=2, smoothing_window=4)
    with pytest.raises(DomainError):
        build_indicator(lam, t[:1], k=1, smoothing_window=1)


def test_topk_mean_monotone_in_k():
    rng = np.random.default_rng(8)
    lam = rng.normal(size=(20, 12))
    t = np.linspace(0.1, 0.9, 20)
    prev = None
    for k in range(1, 13):
        series = build_indicator(lam, t, k=k, smoothing_window=1)
        if prev is not None:
            assert np.all(series.topk_mean_lambda <= prev + 1e-15)
        prev = series.topk_mean_lambda


def test_detect_constant_is_no_split():
    t = np.linspace(0.1, 0.9, 20)
    lam = np.full((20, 5), 1.25)
    series = build_indicator(lam, t, k=2, smoothing_window=3)
    report = detect_t_star(series)
    assert report.no_split
    assert report.t_star is None
    assert report.hotspot_positions is None


def test_detect_prefers_earliest_tie():
    t = np.linspace(0.0, 1.0, 21)
    lam = np.zeros((21, 3))
    lam[7, :] = 1.0
    lam[13, :] = 1.0
    series = build_indicator(lam, t, k=1, smoothing_window=1)
    report = detect_t_star(series)
    peak = series.slope[1:-1].max()
    first = 1 + int(np.argmax(series.slope[1:-1] >= peak))
    assert report.t_star == t[first]
    assert report.t_star < 0.5


def test_detect_returns_hotspots_at_t_star():
    records = small_ensemble(two_atom_target(), n=8)
    lam = lambda_matrix(records)
    pos = positions_matrix(records)
    series = build_indicator(lam, records[0].times, k=4, smoothing_window=5)
    report = detect_t_star(series, positions=pos, metadata={"name": "pair"})
    assert not report.no_split
    idx = int(np.argmax(records[0].times == report.t_star))
    assert report.hotspot_positions.shape == (4, 2)
    assert np.array_equal(report.hotspot_positions,
                          pos[idx][series.topk_indices[idx]])
    assert report.metadata["name"] == "pair"
    assert report.t_star not in (records[0].times[0], records[0].times[-1])


def test_single_atom_ensemble_is_isotropic():
    target = DiscreteTarget(np.array([[0.4, -0.3]]), np.array([1.0]))
    records = small_ensemble(target, n=5)
    lam = lambda_matrix(records)
    s = default_schedule()
    expect = np.array([schedule_scalars(s, float(t)).a_coef
                       for t in records[0].times])
    assert np.max(np.abs(lam - expect[:, None])) <= 1e-12
    # the slope of A(t) = -1/(2(1-t)) is decreasing, so the detector
    # lands on the first interior node and hotspots fall back to the
    # tie-break order of equal values
    series = build_indicator(lam, records[0].times, k=2, smoothing_window=3)
    report = detect_t_star(series, positions=positions_matrix(records))
    assert report.t_star == records[0].times[1]
    assert series.topk_indices[1].tolist() == [0, 1]


def test_axis_particle_dominates_off_axis():
    ev = flow_evaluator(two_atom_target(), default_schedule())
    grid = TimeGrid(0.001, 0.98, 100)
    res = integrate_ensemble(np.array([[0.0, 0.6], [1.0, 0.6]]), ev, grid)
    records = res.records()
    lam = lambda_matrix(records)
    assert np.all(lam[:, 0] >= lam[:, 1])


def test_delta_is_trace_of_strain():
    records = small_ensemble(two_atom_target(), n=4)
    delta = delta_field(records)
    lam = lambda_matrix(records)
    lmin = np.stack([rec.strain_eigs[:, 1] for rec in records], axis=1)
    assert np.max(np.abs(delta - (lam + lmin))) <= 1e-10


def test_matrices_reject_mismatched_grids():
    rec_a = small_ensemble(two_atom_target(), n=2)[0]
    rec_b = small_ensemble(two_atom_target(), n=2,
                           grid=TimeGrid(0.001, 0.8, 30))[0]
    for fn in (lambda_matrix, delta_field, positions_matrix):
        with pytest.raises(DomainError):
            fn([rec_a, rec_b])
