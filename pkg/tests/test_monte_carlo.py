"""Calibrated Monte Carlo checks attached to individual operations.

Seeds are fixed in advance; thresholds are the documented ones.
"""
import numpy as np
import pytest

from sccbbp.campaign import ExperimentConfig, run_campaign
from sccbbp.cli import detect_from_arrays
from sccbbp.io import load_data_pair, save_data_pair
from sccbbp.model import generate_dataset, spike_model_for_targets
from sccbbp.resolvent import (
    build_linearized,
    extreme_eigenvalue_check,
    local_law_error,
    resolvent_snapshot,
    surrogate_roots,
)
from sccbbp.spectrum import scc_values
from sccbbp.theory import DimensionRatios, TheoryContext

pytestmark = pytest.mark.slow

DIMS = DimensionRatios(100, 80, 400)
CTX = TheoryContext.from_dims(DIMS)


def _local_law_ratios(z, seeds=range(50)):
    out = []
    for s in seeds:
        bun = generate_dataset(DIMS, None, seed=s)
        snap = resolvent_snapshot(build_linearized(bun.X, bun.Y, z))
        out.append(local_law_error(snap, CTX, probe_count=64, seed=s).ratio)
    return np.array(out)


def test_local_law_inside_bulk():
    ratios = _local_law_ratios(0.4 + 0.05j)
    assert np.mean(ratios <= 5) >= 0.9, np.quantile(ratios, [0.5, 0.9])


def test_local_law_outside_bulk():
    ratios = _local_law_ratios(CTX.lambda_plus + 0.1 + 1j / DIMS.n)
    assert np.mean(ratios <= 5) >= 0.9, np.quantile(ratios, [0.5, 0.9])


def test_sample_covariance_extreme_eigenvalues():
    hits = [extreme_eigenvalue_check(generate_dataset(DIMS, None, seed=s).X).passed for s in range(200)]
    assert np.mean(hits) >= 0.95


def test_surrogate_roots_locate_outliers_at_n800():
    dims = DimensionRatios(200, 160, 800)
    ctx = TheoryContext.from_dims(dims)
    sm = spike_model_for_targets([0.6], dims)
    theta = surrogate_roots(sm, ctx)[0]
    tops = [scc_values(b.X_signal, b.Y_signal)[0]
            for b in (generate_dataset(dims, sm, seed=200, replicate=k) for k in range(20))]
    assert np.max(np.abs(np.array(tops) - theta)) <= 0.05


def test_sticking_operation_example():
    cfg = ExperimentConfig(kind="sticking", replicates=200, seed=201, spikes={"t": [0.6, 0.1]})
    rep = run_campaign(cfg, write=False)
    assert rep.summary["fraction_within"] >= 0.9


def test_null_detection_through_csv(tmp_path):
    zero = 0
    for s in range(100):
        bun = generate_dataset(DIMS, None, seed=300 + s)
        save_data_pair(tmp_path / "x.csv", tmp_path / "y.csv", bun.X_tilde, bun.Y_tilde)
        X, Y = load_data_pair(tmp_path / "x.csv", tmp_path / "y.csv")
        zero += detect_from_arrays(X, Y)["estimate"]["r_hat"] == 0
    assert zero >= 95


def _median_diagnostic(kind, n, seeds=50, **spikes):
    cfg = ExperimentConfig(kind=kind, p=n // 4, q=n // 5, n=n, replicates=seeds, seed=400, **spikes)
    return run_campaign(cfg, write=False).summary[kind]["median"]


def test_rigidity_stable_in_n():
    assert _median_diagnostic("rigidity", 1600) <= 2 * _median_diagnostic("rigidity", 400)


def test_sticking_stable_in_n():
    kw = {"spikes": {"t": [0.6, 0.1]}}
    ratio = _median_diagnostic("sticking", 1600, **kw) / _median_diagnostic("sticking", 400, **kw)
    assert ratio <= 4**0.25 * 2


def test_goe_reference_mean_and_self_consistency():
    from sccbbp.spectrum import goe_edge_samples, ks_distance
    a = goe_edge_samples(400, 2000, seed=7)
    b = goe_edge_samples(400, 2000, seed=8)
    assert -1.5 < a.mean() < -0.9
    assert ks_distance(a, b) <= 0.06
