import numpy as np
import pytest
from scipy import stats

from heraldsim import homodyne_sim as hs
from heraldsim import mode_tomography as mt
from heraldsim.errors import ZeroMode
from heraldsim.signal_core import PulseProfile

from conftest import REF_POPULATIONS


def test_target_state_validation():
    with pytest.raises(ValueError):
        hs.TargetState([0.5, 0.4])
    with pytest.raises(ValueError):
        hs.TargetState([1.2, -0.2])
    with pytest.raises(ValueError):
        hs.TargetState(np.full(8, 1 / 8))
    s = hs.TargetState.normalized(REF_POPULATIONS)
    assert s.populations.sum() == pytest.approx(1.0, abs=1e-12)
    assert s.populations.size == 7


def test_target_state_moments():
    s = hs.TargetState.fock(2)
    assert s.mean_photon_number == 2.0
    assert s.quadrature_variance == 2.5
    assert hs.TargetState.vacuum().quadrature_variance == 0.5


def test_mode_function_norm():
    with pytest.raises(ValueError):
        hs.ModeFunction(np.ones(4))
    with pytest.raises(ZeroMode):
        hs.ModeFunction.from_unnormalized(np.zeros(10))
    m = hs.ModeFunction.from_unnormalized(np.arange(1.0, 20.0))
    assert abs(np.dot(m.values, m.values) - 1.0) <= 1e-12


def test_optimal_mode_shape(opo, mode49):
    assert len(mode49) == 500
    assert np.all(mode49.values >= 0)
    peak = mode49.times[np.argmax(mode49.values)]
    assert 49.0 < peak < 60.0
    delayed = hs.optimal_mode(PulseProfile(49.0), opo, delay=30.0)
    assert delayed.times[np.argmax(delayed.values)] == pytest.approx(peak + 30.0)
    with pytest.raises(ValueError):
        hs.optimal_mode(PulseProfile(49.0), opo, delay=-1.0)


def test_projection_identity(mode49, rng):
    x = rng.normal(size=50) * 3
    windows = hs.synthesize_windows(x, mode49, rng)
    assert np.allclose(windows @ mode49.values, x, atol=1e-9)
    w = hs.synthesize_window(0.7, mode49, seed=1, qualifier_delay=55.0)
    assert float(w.samples @ mode49.values) == pytest.approx(0.7, abs=1e-12)
    assert w.qualifier_delay == 55.0


def test_vacuum_isotropy(mode49, opo):
    # any unit mode sees variance 1/2 in vacuum windows
    vac = hs.generate_trace_set(hs.TargetState.vacuum(), mode49, 20000, vacuum=True, seed=4)
    other = hs.optimal_mode(PulseProfile(7.0), opo, delay=200.0)
    rand = hs.ModeFunction.from_unnormalized(np.random.default_rng(0).normal(size=500))
    for m in (mode49, other, rand):
        q = vac.samples @ m.values
        # chi-square interval on the variance at 5 sigma
        assert abs(q.var() - 0.5) < 5 * 0.5 * np.sqrt(2 / q.size)


def test_orthogonal_modes_stay_vacuum(mode49):
    s = hs.generate_trace_set(hs.TargetState.fock(1), mode49, 20000, seed=5)
    rng = np.random.default_rng(1)
    v = rng.normal(size=500)
    v -= (v @ mode49.values) * mode49.values
    q = s.samples @ (v / np.linalg.norm(v))
    assert abs(q.var() - 0.5) < 5 * 0.5 * np.sqrt(2 / q.size)


def test_single_photon_marginal_ks(mode49):
    s = hs.generate_trace_set(hs.TargetState.fock(1), mode49, 5000, seed=6)
    q = s.samples @ mode49.values
    # |x| for Fock 1 has density 4 x^2 exp(-x^2) / sqrt(pi): a chi(3) variable over sqrt(2)
    assert stats.kstest(np.abs(q) * np.sqrt(2), stats.chi(3).cdf).pvalue > 1e-3


def test_variance_moment(mode49, ref_state):
    s = hs.generate_trace_set(ref_state, mode49, 13000, seed=7)
    q = s.samples @ mode49.values
    expected = 0.5 + ref_state.mean_photon_number
    assert expected == pytest.approx(1.115, abs=0.005)
    assert q.var() == pytest.approx(expected, abs=0.02)


def test_block_seeding_deterministic(mode49, ref_state):
    a = hs.generate_trace_set(ref_state, mode49, 3000, seed=9, block_size=1000)
    b = hs.generate_trace_set(ref_state, mode49, 3000, seed=9, block_size=1000)
    c = hs.generate_trace_set(ref_state, mode49, 2000, seed=9, block_size=1000)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.samples[:2000], c.samples)
    assert a.meta["seed"] == 9


def test_qualifier_delays_inside_gate(mode49, ref_state):
    s = hs.generate_trace_set(ref_state, mode49, 500, seed=1, gate_center=64.0, gate_len=40.0)
    assert np.all(np.abs(s.qualifier_delays - 64.0) <= 20.0)
    assert len(s.windows) == 500 and s.window_length == 500


def test_background_heralds_dilute(mode49):
    s = hs.generate_trace_set(hs.TargetState.fock(1), mode49, 20000, seed=2,
                              background_fraction=0.25)
    q = s.samples @ mode49.values
    # 0.75 of windows carry one photon: variance 0.5 + 0.75
    assert q.var() == pytest.approx(1.25, abs=0.05)


def test_mode_mismatch_binomial_loss(opo, mode49, ref_state):
    # projecting on a mode with |<a,b>|^2 = eta acts as a beam splitter of
    # transmission eta: rho_11 -> eta rho_11 + 2 eta (1 - eta) rho_22
    other = hs.optimal_mode(PulseProfile(49.0), opo, delay=25.0)
    eta = mt.mode_fidelity(other, mode49)
    assert 0.6 < eta < 0.9
    sig = hs.generate_trace_set(ref_state, mode49, 20000, seed=11)
    vac = hs.generate_trace_set(ref_state, mode49, 20000, vacuum=True, seed=12)
    fit = mt.fit_fock_mixture(mt.project(sig, other, vac))
    p = ref_state.populations
    expected = eta * p[1] + 2 * eta * (1 - eta) * p[2]
    assert fit.rho[1] == pytest.approx(expected, abs=0.03)


def test_electronic_noise_breaks_identity(mode49):
    x = hs.generate_trace_set(hs.TargetState.vacuum(), mode49, 4000, seed=3,
                              electronic_noise=0.3)
    q = x.samples @ mode49.values
    assert q.var() == pytest.approx(0.5 + 0.09, abs=0.05)


def test_trace_set_shape_check():
    with pytest.raises(ValueError):
        hs.TraceSet(np.zeros((3, 5)), np.zeros(2), False)
    with pytest.raises(ValueError):
        hs.generate_trace_set(hs.TargetState.vacuum(), hs.ModeFunction(np.eye(1, 5)[0]), 0)
