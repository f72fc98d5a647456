import math

import numpy as np
import pytest

from lenmap import (
    IDENTITY,
    RELU,
    CaptureSpec,
    DeviationCheck,
    EnsembleStats,
    LayerOverflowError,
    NetworkConfig,
    forward_once,
    input_vector,
    ks_statistic,
    gaussian_cdf,
    resolve_workers,
    simulate_ensemble,
)
from lenmap.rng import layer_preacts
from lenmap.simulator import CHUNK_TRIALS, _run_chunk, _new_chunk_stats


def _cfg(**kwargs):
    defaults = dict(width=16, depth=2, sigma_w=1.0, sigma_b=0.0,
                    activation=RELU, master_seed=0)
    defaults.update(kwargs)
    return NetworkConfig(**defaults)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"width": 0},
        {"width": 10**9},
        {"depth": 0},
        {"sigma_w": -1.0},
        {"sigma_b": -0.1},
        {"master_seed": 2**64},
        {"input_spec": "zeros"},
        {"input_spec": ("signs", -1)},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        _cfg(**kwargs)


def test_input_vector_patterns():
    assert np.array_equal(input_vector(_cfg(width=4)), np.ones(4))
    alt = input_vector(_cfg(width=5, input_spec="alternating"))
    assert np.array_equal(alt, [1.0, -1.0, 1.0, -1.0, 1.0])
    signs = input_vector(_cfg(width=64, input_spec=("signs", 9)))
    assert np.array_equal(signs, input_vector(_cfg(width=64, input_spec=("signs", 9))))
    assert set(np.unique(signs)) == {-1.0, 1.0}


def test_forward_once_identity_layer():
    cfg = _cfg(width=32, depth=1, activation=IDENTITY)
    obs = forward_once(cfg, 0, capture=CaptureSpec(layer=1, units="all"))
    h = layer_preacts(np.ones(32), 0, 0, 1, 1.0 / math.sqrt(32), 0.0)
    assert obs.q[0] == 1.0 and obs.r[0] == 1.0
    assert np.array_equal(obs.captured, h)
    assert obs.q[1] == pytest.approx(np.mean(h * h), abs=1e-12)
    assert obs.r[1] == obs.q[1]  # identity: post-activations are pre-activations


def test_forward_once_relu_squares():
    cfg = _cfg(width=24, depth=1)
    obs = forward_once(cfg, 3, capture=CaptureSpec(layer=1, units="all"))
    x = np.maximum(obs.captured, 0.0)
    assert obs.r[1] == pytest.approx(np.mean(x * x), abs=1e-12)


def test_forward_once_capture_respects_unit_order():
    cfg = _cfg(width=8, depth=1)
    full = forward_once(cfg, 0, capture=CaptureSpec(layer=1, units="all"))
    some = forward_once(cfg, 0, capture=CaptureSpec(layer=1, units=(5, 2)))
    assert np.array_equal(some.captured, full.captured[[5, 2]])


def test_forward_once_validation():
    with pytest.raises(ValueError):
        forward_once(_cfg(), 2**32)
    with pytest.raises(ValueError):
        forward_once(_cfg(depth=2), 0, capture=CaptureSpec(layer=3, units="all"))
    with pytest.raises(ValueError):
        forward_once(_cfg(width=4), 0, capture=CaptureSpec(layer=1, units=(4,)))


def test_capture_spec_validation():
    with pytest.raises(ValueError):
        CaptureSpec(layer=0, units="all")
    with pytest.raises(ValueError):
        CaptureSpec(layer=1, units=(1, 1))
    with pytest.raises(ValueError):
        CaptureSpec(layer=1, units=(-1,))
    with pytest.raises(ValueError):
        CaptureSpec(layer=1, units="all", max_samples=0)
    with pytest.raises(ValueError):
        CaptureSpec(layer=1, units="all", histogram=(0, -1.0, 1.0))
    with pytest.raises(ValueError):
        CaptureSpec(layer=1, units="all", histogram=(8, 1.0, -1.0))


def test_deviation_check_validation():
    with pytest.raises(ValueError):
        DeviationCheck(qtilde=np.array([1.0, np.nan]), epsilon=0.1)
    with pytest.raises(ValueError):
        DeviationCheck(qtilde=np.ones(3), epsilon=0.0)


def test_overflow_counted_not_raised():
    cfg = _cfg(width=8, sigma_w=1e160, activation=IDENTITY)
    with pytest.raises(LayerOverflowError) as err:
        forward_once(cfg, 0)
    assert err.value.layer == 1
    stats = simulate_ensemble(cfg, 10)
    assert stats.overflow_count == 10
    assert stats.trial_count == 0
    assert stats.overflow_by_layer == {1: 10}
    assert np.all(np.isnan(stats.q_variance()))


def test_success_counters_match_direct_recount():
    check = DeviationCheck(qtilde=np.array([1.0, 2.0, 2.0]), epsilon=0.2)
    cfg = _cfg(width=64, sigma_w=math.sqrt(2.0))
    stats = simulate_ensemble(cfg, 32, check=check)
    joint = 0
    layers = np.zeros(3, dtype=int)
    for trial in range(32):
        obs = forward_once(cfg, trial)
        ok = np.abs(obs.q - check.qtilde) <= check.epsilon
        layers += ok
        joint += int(ok.all())
    assert stats.success_joint == joint
    assert np.array_equal(stats.success_layers, layers)
    assert stats.trial_count == 32


def _chunk(cfg, start, stop, capture=None, check=None):
    return _run_chunk((cfg, start, stop, capture, check))


def test_merge_associativity_and_commutativity():
    cfg = _cfg(width=16, sigma_w=math.sqrt(2.0))
    cap = CaptureSpec(layer=1, units=(0, 1), max_samples=1000, histogram=(8, -4.0, 4.0))
    check = DeviationCheck(qtilde=np.array([1.0, 2.0, 2.0]), epsilon=0.15)
    a = _chunk(cfg, 0, 16, cap, check)
    b = _chunk(cfg, 16, 32, cap, check)
    c = _chunk(cfg, 32, 48, cap, check)

    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    for attr in ("q_mean", "q_m2", "r_mean", "r_m2"):
        assert np.allclose(getattr(left, attr), getattr(right, attr), rtol=0, atol=1e-10)
    assert left.trial_count == right.trial_count == 48
    assert left.success_joint == right.success_joint
    assert np.array_equal(left.captured, right.captured)
    assert np.array_equal(left.hist_counts, right.hist_counts)

    ab, ba = a.merge(b), b.merge(a)
    for attr in ("q_mean", "q_m2", "r_mean", "r_m2"):
        assert np.allclose(getattr(ab, attr), getattr(ba, attr), rtol=0, atol=1e-10)
    assert ab.success_joint == ba.success_joint
    assert np.array_equal(ab.hist_counts, ba.hist_counts)


def test_merge_against_single_pass():
    cfg = _cfg(width=8)
    whole = _chunk(cfg, 0, 40)
    merged = _chunk(cfg, 0, 13).merge(_chunk(cfg, 13, 40))
    assert np.allclose(whole.q_mean, merged.q_mean, rtol=0, atol=1e-12)
    assert np.allclose(whole.q_m2, merged.q_m2, rtol=0, atol=1e-10)


def test_merge_with_empty_is_identity():
    cfg = _cfg(width=8)
    stats = _chunk(cfg, 0, 10)
    empty = _new_chunk_stats(cfg, None, None)
    for merged in (empty.merge(stats), stats.merge(empty)):
        assert merged.trial_count == 10
        assert np.array_equal(merged.q_mean, stats.q_mean)
        assert np.array_equal(merged.q_m2, stats.q_m2)


def test_merge_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        EnsembleStats(width=4, depth=1).merge(EnsembleStats(width=8, depth=1))


def test_worker_count_invariance():
    cfg = _cfg(width=16, sigma_w=math.sqrt(2.0))
    cap = CaptureSpec(layer=1, units=(0, 1), max_samples=1000, histogram=(8, -4.0, 4.0))
    check = DeviationCheck(qtilde=np.array([1.0, 2.0, 2.0]), epsilon=0.15)
    trials = 3 * CHUNK_TRIALS + 7
    seq = simulate_ensemble(cfg, trials, capture=cap, check=check, workers=1)
    par = simulate_ensemble(cfg, trials, capture=cap, check=check, workers=3)
    assert seq.trial_count == par.trial_count == trials
    assert np.array_equal(seq.q_mean, par.q_mean)
    assert np.array_equal(seq.q_m2, par.q_m2)
    assert np.array_equal(seq.r_mean, par.r_mean)
    assert np.array_equal(seq.captured, par.captured)
    assert np.array_equal(seq.hist_counts, par.hist_counts)
    assert seq.success_joint == par.success_joint
    assert np.array_equal(seq.success_layers, par.success_layers)


def test_histogram_counts_every_trial_despite_capture_budget():
    cfg = _cfg(width=8, depth=1)
    cap = CaptureSpec(layer=1, units="all", max_samples=24, histogram=(4, -10.0, 10.0))
    stats = simulate_ensemble(cfg, 50, capture=cap)
    assert int(stats.hist_counts.sum()) == 50 * 8
    assert stats.captured.shape == (3, 8)  # 24 // 8 rows kept
    assert stats.captured_values().size == 24


def test_capture_all_equals_explicit_indices():
    cfg = _cfg(width=6, depth=1)
    every = simulate_ensemble(cfg, 5, capture=CaptureSpec(layer=1, units="all"))
    explicit = simulate_ensemble(cfg, 5, capture=CaptureSpec(layer=1, units=tuple(range(6))))
    assert np.array_equal(every.captured, explicit.captured)


def test_layer_one_values_are_gaussian():
    cfg = _cfg(width=1024, depth=1, master_seed=3)
    cap = CaptureSpec(layer=1, units="all", max_samples=1024 * 128)
    stats = simulate_ensemble(cfg, 128, capture=cap)
    v = stats.captured_values()
    assert v.size == 1024 * 128
    assert abs(v.mean()) <= 0.02
    assert abs(v.var() - 1.0) <= 0.03
    assert ks_statistic(v, lambda x: gaussian_cdf(x, 1.0)) <= 0.01


def test_sibling_units_uncorrelated_across_trials():
    cfg = _cfg(width=64, depth=1, master_seed=5)
    cap = CaptureSpec(layer=1, units=(0, 1), max_samples=8192)
    stats = simulate_ensemble(cfg, 4096, capture=cap)
    rho = np.corrcoef(stats.captured[:, 0], stats.captured[:, 1])[0, 1]
    assert abs(rho) <= 3.0 / math.sqrt(4096)


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("LENMAP_WORKERS", raising=False)
    assert resolve_workers(4) == 4
    assert resolve_workers() >= 1
    monkeypatch.setenv("LENMAP_WORKERS", "5")
    assert resolve_workers() == 5
    assert resolve_workers(2) == 2  # explicit argument wins over the env
    with pytest.raises(ValueError):
        resolve_workers(0)


def test_simulate_validation():
    with pytest.raises(ValueError):
        simulate_ensemble(_cfg(), 0)
    with pytest.raises(ValueError):
        simulate_ensemble(_cfg(depth=2), 4, check=DeviationCheck(np.ones(2), 0.1))
