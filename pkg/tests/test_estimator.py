import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qht_gof.estimator import (
    bandwidth_n1,
    bandwidth_n2,
    bandwidth_n3,
    compute_mn,
    expected_mn,
    make_config,
    pattern_features,
    rate_phi,
)
from qht_gof.pattern_kernel import load_or_build_table
from qht_gof.quantum_states import make_state
from qht_gof.simulator import QhtDataset, generate
from qht_gof.testing import simulate_mn

from oracles import literal_mn


def test_two_record_toy():
    tau = make_state("vacuum", 4)
    cfg = make_config(tau, 1.0, 1)
    ds = QhtDataset(np.array([0.3, -1.1]), np.array([0.2, 2.5]), 1.0, "toy", 0)
    f = cfg.table.value(0, 0, -ds.y)
    assert compute_mn(ds, cfg) == pytest.approx((f[0] - 1) * (f[1] - 1), abs=1e-15)


@settings(max_examples=12, deadline=None)
@given(n=st.integers(2, 60), N=st.integers(1, 5), eta=st.sampled_from([1.0, 0.9]),
       state=st.sampled_from(["vacuum", "single_photon", "coherent:3", "cat:3"]),
       seed=st.integers(0, 2**32))
def test_factorized_matches_double_sum(n, N, eta, state, seed):
    tau = make_state("coherent:3" if state == "vacuum" else "vacuum", 8)
    cfg = make_config(tau, eta, N, table=load_or_build_table(eta, 5))
    ds = generate(state, n, eta, seed)
    ref = literal_mn(ds.y, ds.phi, eta, tau.entries, N, cfg.table.value)
    assert abs(ref.imag) < 1e-10
    assert abs(compute_mn(ds, cfg) - ref.real) < 1e-10


def test_chunking_does_not_change_value(monkeypatch):
    tau = make_state("vacuum")
    cfg = make_config(tau, 0.9, 6)
    ds = generate("single_photon", 5000, 0.9, 1)
    whole = compute_mn(ds, cfg)
    import qht_gof.estimator as est
    monkeypatch.setattr(est, "CHUNK", 777)
    assert compute_mn(ds, cfg) == pytest.approx(whole, rel=1e-12, abs=1e-14)


def test_compute_mn_preconditions():
    tau = make_state("vacuum")
    cfg = make_config(tau, 1.0, 3)
    with pytest.raises(ValueError):
        compute_mn(generate("vacuum", 1, 1.0, 0), cfg)
    with pytest.raises(ValueError, match="eta"):
        compute_mn(generate("vacuum", 10, 0.9, 0), cfg)
    with pytest.raises(ValueError):
        make_config(make_state("vacuum", 2), 1.0, 3)
    with pytest.raises(ValueError):
        make_config(tau, 0.9, 3, table=load_or_build_table(1.0, 3))


def test_expected_mn_examples():
    vac, sp = make_state("vacuum"), make_state("single_photon")
    assert expected_mn(vac, vac, 10) == 0
    assert expected_mn(sp, vac, 2) == 2
    assert abs(expected_mn(make_state("coherent:3"), make_state("cat:3"), 40) - 0.9999) < 5e-4


@pytest.mark.parametrize("eta", [1.0, 0.9])
def test_single_element_unbiasedness(eta):
    cfg = make_config(make_state("vacuum"), eta, 4)
    ds = generate("vacuum", 100_000, eta, 17)
    F = pattern_features(ds, cfg)
    rho = make_state("vacuum", 4).entries
    se_re = F.real.std(axis=2) / math.sqrt(ds.n)
    se_im = F.imag.std(axis=2) / math.sqrt(ds.n)
    mean = F.mean(axis=2)
    assert np.all(np.abs(mean.real - rho.real) <= 4 * se_re + 1e-12)
    assert np.all(np.abs(mean.imag - rho.imag) <= 4 * se_im + 1e-12)


def test_single_element_orientation_for_odd_differences():
    # coherent states have real, positive rho_{1,0}; a sign slip in the kernel shows up here
    cfg = make_config(make_state("vacuum"), 1.0, 3)
    ds = generate("coherent:1", 100_000, 1.0, 23)
    F = pattern_features(ds, cfg)
    rho = make_state("coherent:1", 3).entries
    se = F.real.std(axis=2) / math.sqrt(ds.n)
    assert rho[1, 0].real > 0.4
    assert np.all(np.abs(F.mean(axis=2).real - rho.real) <= 4 * se)


def test_variance_scaling_under_null():
    cfg = make_config(make_state("vacuum"), 1.0, 6)
    ns = np.array([500, 1000, 2000, 4000])
    var = [np.var(simulate_mn(make_state("vacuum"), cfg, int(n), 200, seed=31)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(var), 1)[0]
    assert -2.4 <= slope <= -1.6, slope


def test_bandwidth_n1():
    for B in (1.0, 2.5):
        n = math.exp(4 * B)
        assert bandwidth_n1(n, B, 2) == pytest.approx(1 + math.log(4 * B) ** 2 / (4 * B), rel=1e-12)
    grid = [16, 100, 1e4, 1e6]
    vals = [bandwidth_n1(n, 1.0, 1.5) for n in grid]
    assert vals == sorted(vals)
    assert bandwidth_n1(1e4, 1.0, 1.0) > bandwidth_n1(1e4, 1.0, 2.0)
    with pytest.raises(ValueError):
        bandwidth_n1(2.5, 1.0, 2)


def test_bandwidth_n2():
    n, B = 50_000, 1.0
    ln, lln = math.log(n), math.log(math.log(n))
    assert bandwidth_n2(n, B, 0.0) == pytest.approx(ln * (1 + 8 * lln / (3 * ln)) / (4 * B), rel=1e-14)
    gamma = (1 - 0.9) / (4 * 0.9)
    assert gamma == pytest.approx(1 / 36)
    assert bandwidth_n2(n, B, gamma) == pytest.approx(ln / (4 * (4 / 36 + 1)) * (1 + 8 * lln / (3 * ln)), rel=1e-14)
    assert bandwidth_n2(n, B, 0.1) < bandwidth_n2(n, B, 0.05)


def test_bandwidth_n3():
    n, B, gamma = 50_000, 0.7, 1 / 36
    for r in (0.5, 1.0, 1.7):
        N3 = bandwidth_n3(n, B, r, gamma)
        assert abs(16 * gamma * N3 + 4 * B * N3 ** (r / 2) - math.log(n)) < 1e-8
    assert bandwidth_n3(n, B, 2.0, gamma) == pytest.approx(math.log(n) / (16 * gamma + 4 * B), abs=1e-8)
    assert bandwidth_n3(1e6, B, 1.0, gamma) > bandwidth_n3(1e4, B, 1.0, gamma)
    with pytest.raises(ValueError):
        bandwidth_n3(n, B, 1.0, 0.0)


def test_rate_phi():
    assert rate_phi(1e4, 1.0, 2, 0.0, "ideal") == pytest.approx(1e-2 * math.log(1e4) ** (17 / 12), rel=1e-14)
    gamma = 1 / 36
    N3 = bandwidth_n3(1e5, 0.5, 1.0, gamma)
    assert rate_phi(1e5, 0.5, 1.0, gamma, "general") == pytest.approx(N3 ** 1.5 * math.exp(-2 * 0.5 * N3 ** 0.5))
    a = 4 * gamma + 1.0
    assert rate_phi(1e5, 1.0, 2, gamma, "smooth_r2") == pytest.approx(
        math.log(1e5) ** ((12 * gamma - 1.0) / (3 * a)) * 1e5 ** (-1.0 / (2 * a)))
    for regime, r, g in [("ideal", 2, 0.0), ("smooth_r2", 2, gamma), ("general", 1.0, gamma)]:
        vals = [rate_phi(10.0**e, 1.0, r, g, regime) for e in (8, 16, 32, 64)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        rate_phi(1e4, 1.0, 2, gamma, "ideal")
    with pytest.raises(ValueError):
        rate_phi(1e4, 1.0, 1.0, gamma, "smooth_r2")
    with pytest.raises(ValueError):
        rate_phi(1e4, 1.0, 2.0, gamma, "general")
    with pytest.raises(ValueError):
        rate_phi(1e4, 1.0, 2.0, gamma, "bogus")
