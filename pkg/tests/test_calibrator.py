import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import onlinerecal.calibrator as cal
from onlinerecal.calibrator import (OnlineCalibrator, fixed_point, grid_calibration_error,
                                    transition_matrix)
from onlinerecal.errors import DomainError, EmptyStateError, NumericFailure, ProtocolError
from onlinerecal.losses import get_loss
from onlinerecal.metrics import internal_regret
from onlinerecal.streams import adversarial_outcome
from oracles import regret_matching_matrix, stationary_by_eig


def _residual(mu, pos):
    Q = transition_matrix(pos)
    return np.max(np.abs(mu - mu @ Q))


def _random_regret(rng, n):
    pos = np.maximum(rng.normal(size=(n, n)) * rng.exponential(5.0), 0.0)
    pos[rng.random((n, n)) < rng.random()] = 0.0
    np.fill_diagonal(pos, 0.0)
    return pos


# -- fixed_point -------------------------------------------------------------

def test_zero_matrix_gives_uniform():
    mu = fixed_point(np.zeros((11, 11)))
    np.testing.assert_array_equal(mu, np.full(11, 1 / 11))


def test_two_state_chain():
    pos = np.array([[0.0, 2.0], [0.0, 0.0]])
    # oracle: eigen-solve of the reference 2x2 chain
    expected = stationary_by_eig(regret_matching_matrix(pos.tolist()))
    np.testing.assert_allclose(expected, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(fixed_point(pos), expected, atol=1e-8)


def test_reducible_chain_keeps_absorbing_mass():
    pos = np.zeros((3, 3))
    pos[0, 1] = pos[1, 0] = 1.0
    mu = fixed_point(pos)
    assert _residual(mu, pos) <= 1e-8
    # the {0,1} class is balanced; the self-loop at 2 keeps its uniform start mass
    assert mu[0] == pytest.approx(mu[1], abs=1e-12)
    assert mu[2] == pytest.approx(1 / 3, abs=1e-12)


def test_transition_matrix_matches_reference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pos = _random_regret(rng, int(rng.integers(2, 8)))
        np.testing.assert_allclose(transition_matrix(pos), regret_matching_matrix(pos.tolist()),
                                   atol=1e-15)
        assert np.allclose(transition_matrix(pos).sum(axis=1), 1.0)


def test_fixed_point_random_matrices():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(2, 12))
        pos = _random_regret(rng, n)
        mu = fixed_point(pos)
        assert mu.min() >= 0.0
        assert mu.sum() == pytest.approx(1.0, abs=1e-9)
        assert _residual(mu, pos) <= 1e-8
        # balance: inflow of regret-weighted mass equals outflow at every state
        inflow = mu @ pos
        outflow = mu * pos.sum(axis=1)
        scale = max(pos.sum(axis=1).max(), 1.0)
        assert np.max(np.abs(inflow - outflow)) <= 1e-7 * scale


def test_fixed_point_warm_start():
    rng = np.random.default_rng(5)
    pos = _random_regret(rng, 9)
    mu = fixed_point(pos)
    again = fixed_point(pos, start=mu)
    assert _residual(again, pos) <= 1e-8


def test_fixed_point_rejects_bad_input():
    with pytest.raises(DomainError):
        fixed_point(np.ones((2, 3)))
    with pytest.raises(DomainError):
        fixed_point(-np.ones((2, 2)))


def test_fixed_point_reports_failure(monkeypatch):
    pos = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    monkeypatch.setattr(cal, "_exact_stationary", lambda Q: np.array([1.0, 0.0, 0.0]))
    with pytest.raises(NumericFailure) as err:
        fixed_point(pos, start=np.array([1.0, 0.0, 0.0]), max_iter=1)
    assert err.value.residual > 1e-8


# -- predict / update --------------------------------------------------------

def test_fresh_prediction_is_uniform():
    c = OnlineCalibrator(10, seed=0)
    mu, idx = c.predict()
    np.testing.assert_allclose(mu, np.full(11, 1 / 11))
    assert 0 <= idx <= 10


def test_repeated_predict_is_idempotent():
    c = OnlineCalibrator(10, seed=4)
    for y in [1, 0, 1, 1]:
        c.step(y)
    a = c.predict()
    b = c.predict()
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_same_seed_same_prediction():
    a, b = OnlineCalibrator(10, seed=9), OnlineCalibrator(10, seed=9)
    for _ in range(20):
        pa, pb = a.predict(), b.predict()
        assert pa[1] == pb[1]
        a.update(*pa, 1)
        b.update(*pb, 1)


def test_all_ones_concentrates_on_top():
    c = OnlineCalibrator(10, seed=1)
    for _ in range(1000):
        c.step(1)
    mu, _ = c.predict()
    assert mu[10] >= 0.9


def test_update_increments_n1_split_mass():
    c = OnlineCalibrator(1, seed=0)
    c._pending = (np.array([0.5, 0.5]), 0)
    c.update(np.array([0.5, 0.5]), 0, 1)
    # 0.5 * [(1-0)^2 - (1-1)^2] and 0.5 * [(1-1)^2 - (1-0)^2]
    assert c.cum_internal_regret[0, 1] == 0.5
    assert c.cum_internal_regret[1, 0] == -0.5
    assert c.grid_counts.tolist() == [1, 0]
    assert c.grid_outcome_sums.tolist() == [1, 0]
    assert c.steps_T == 1


def test_update_point_mass():
    c = OnlineCalibrator(1, seed=0)
    c._pending = (np.array([1.0, 0.0]), 0)
    c.update(np.array([1.0, 0.0]), 0, 0)
    assert c.cum_internal_regret[0, 1] == -1.0
    assert c.cum_internal_regret[1, 0] == 0.0
    assert c.grid_counts[0] == 1 and c.grid_outcome_sums[0] == 0


def test_protocol_errors():
    c = OnlineCalibrator(4, seed=0)
    with pytest.raises(ProtocolError):
        c.update(np.full(5, 0.2), 0, 1)
    mu, idx = c.predict()
    with pytest.raises(ProtocolError):
        c.update(mu, (idx + 1) % 5, 1)
    with pytest.raises(ProtocolError):
        c.update(np.roll(mu, 1) + np.eye(5)[0], idx, 1)
    with pytest.raises(DomainError):
        c.update(mu, idx, 2)
    c.update(mu, idx, 1)


@settings(max_examples=40, deadline=None)
@given(ys=st.lists(st.sampled_from([0, 1]), min_size=1, max_size=60),
       N=st.integers(1, 6), seed=st.integers(0, 2 ** 32))
def test_state_invariants(ys, N, seed):
    c = OnlineCalibrator(N, seed)
    for y in ys:
        mu, _ = c.predict()
        assert mu.min() >= 0 and abs(mu.sum() - 1) <= 1e-9
        assert _residual(mu, np.maximum(c.cum_internal_regret, 0)) <= 1e-8
        c.update(mu, c.pending[1], y)
        assert np.all(np.diag(c.cum_internal_regret) == 0.0)
    assert c.grid_counts.sum() == c.steps_T == len(ys)
    assert np.all((0 <= c.grid_outcome_sums) & (c.grid_outcome_sums <= c.grid_counts))


# -- calibration error -------------------------------------------------------

def test_calibration_error_examples():
    assert grid_calibration_error([0, 0, 5], [0, 0, 5], 2, 1) == 0.0
    assert grid_calibration_error([1, 0, 1], [0, 0, 0], 2, 1) == pytest.approx(0.5)
    assert grid_calibration_error([1, 0, 1], [0, 0, 0], 2, 2) == pytest.approx(0.5)


def test_calibration_error_empty():
    with pytest.raises(EmptyStateError):
        OnlineCalibrator(3).calibration_error(1)
    with pytest.raises(DomainError):
        grid_calibration_error([1], [1], 1, 3)


# -- checkpoint / determinism ------------------------------------------------

def _trajectory(c, ys):
    out = []
    for y in ys:
        mu, idx = c.predict()
        c.update(mu, idx, y)
        out.append((idx, mu.tobytes()))
    return out


def test_snapshot_round_trip_mid_run():
    ys = (np.random.default_rng(2).random(200) < 0.4).astype(int).tolist()
    a = OnlineCalibrator(6, seed=123)
    _trajectory(a, ys[:100])
    a.predict()  # leave a pending draw inside the snapshot
    blob = json.dumps(a.to_dict())
    b = OnlineCalibrator.from_dict(json.loads(blob))
    assert json.dumps(b.to_dict()) == blob
    assert _trajectory(a, ys[100:]) == _trajectory(b, ys[100:])


def test_snapshot_rejects_other_versions():
    d = OnlineCalibrator(2).to_dict()
    d["version"] = 99
    with pytest.raises(DomainError):
        OnlineCalibrator.from_dict(d)


def test_bit_identical_trajectories():
    ys = (np.random.default_rng(0).random(500) < 0.3).astype(int).tolist()
    assert _trajectory(OnlineCalibrator(10, 77), ys) == _trajectory(OnlineCalibrator(10, 77), ys)


# -- long-run behaviour ------------------------------------------------------

def _bernoulli_run(seed, T=10000, checkpoints=()):
    c = OnlineCalibrator(10, seed)
    ys = (np.random.default_rng(1000 + seed).random(T) < 0.3).astype(int)
    errs = []
    for t, y in enumerate(ys, 1):
        c.step(int(y))
        if t in checkpoints:
            errs.append(c.calibration_error(1))
    return c, errs


CHECKPOINTS = tuple(range(1000, 10001, 250))


@pytest.fixture(scope="module")
def bernoulli_runs():
    return [_bernoulli_run(s, checkpoints=CHECKPOINTS) for s in range(5)]


@pytest.mark.slow
def test_bernoulli_calibration_level(bernoulli_runs):
    final = np.mean([c.calibration_error(1) for c, _ in bernoulli_runs])
    assert final <= 0.05


@pytest.mark.slow
def test_bernoulli_decay_slope(bernoulli_runs):
    # seed-sensitive: the slope of a 30-seed ensemble sits near -0.77
    mean = np.mean([e for _, e in bernoulli_runs], axis=0)
    slope = np.polyfit(np.log(CHECKPOINTS), np.log(mean), 1)[0]
    assert -0.7 <= slope <= -0.2


@pytest.mark.slow
def test_adversarial_calibration():
    c = OnlineCalibrator(10, seed=8)
    for _ in range(10000):
        mu, idx = c.predict()
        c.update(mu, idx, adversarial_outcome(float(mu @ c.grid)))
    assert c.calibration_error(2) <= 0.02


@pytest.mark.slow
@pytest.mark.parametrize("adversarial", [False, True])
def test_internal_regret_bound(adversarial):
    rng = np.random.default_rng(21)
    c = OnlineCalibrator(10, seed=21)
    history = []
    for _ in range(5000):
        mu, idx = c.predict()
        y = adversarial_outcome(float(mu @ c.grid)) if adversarial else int(rng.random() < 0.6)
        c.update(mu, idx, y)
        history.append((idx / 10, y))
    c1 = c.calibration_error(1)
    for name in ("l2", "misclass", "log"):
        spec = get_loss(name)
        assert internal_regret(history, spec, 10) / len(history) <= 2 * spec.bound_B * c1 + 0.02
