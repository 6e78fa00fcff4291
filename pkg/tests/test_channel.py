import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrician.channel import (
    Estimator,
    FrameConfig,
    PilotAssignment,
    PowerConfig,
    assign_pilots,
    compute_statistics,
    estimate,
    estimate_lmmse,
    estimate_ls,
    estimate_mmse,
    receive_pilots,
    sample_channel,
)
from cfrician.errors import ConfigError
from cfrician.geometry import AreaSpec, NetworkInstance, ShadowModel, generate_network

from conftest import make_instance


def draw(net, assign, powers, frame, n, seed, phase=None):
    rng = np.random.default_rng(seed)
    real = sample_channel(net, rng, size=(n,), phase=phase)
    return real.with_pilots(receive_pilots(real, assign, powers, frame, rng))


class TestConfigs:
    def test_frame_defaults(self):
        f = FrameConfig(tau_c=200, tau_p=5)
        assert f.tau_u == 195 and f.tau_d == 195 and f.ul_prelog == pytest.approx(0.975)

    @pytest.mark.parametrize("kwargs", [{"tau_p": 0}, {"tau_c": 4, "tau_p": 5}, {"tau_p": 5, "tau_u": 196}])
    def test_frame_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            FrameConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"noise_ul": 0.0}, {"pilot_power": 0.0}, {"ul_data_power": -1.0}])
    def test_power_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            PowerConfig(**kwargs)

    def test_pilot_indices_checked(self):
        with pytest.raises(ConfigError):
            PilotAssignment(np.array([0, 2]), 2)


class TestPilotAssignment:
    def test_orthogonal_regime(self):
        beta = np.random.default_rng(0).uniform(size=(4, 3))
        a = assign_pilots(beta, 5, np.random.default_rng(1))
        assert len(set(a.pilot_of_ue.tolist())) == 3
        assert all(a.cohort(k).tolist() == [k] for k in range(3))

    def test_single_pilot(self):
        a = assign_pilots(np.ones((2, 4)), 1, np.random.default_rng(0))
        assert np.all(a.same_pilot)

    def test_least_overlap_choice(self):
        beta = np.array([[1.0, 0.001, 1.0], [0.001, 1.0, 0.01]])
        for seed in range(5):
            a = assign_pilots(beta, 2, np.random.default_rng(seed))
            assert a.pilot_of_ue[2] == a.pilot_of_ue[1]

    def test_score_brute_force(self):
        rng = np.random.default_rng(4)
        beta = rng.uniform(size=(6, 9))
        a = assign_pilots(beta, 3, np.random.default_rng(2))
        p = a.pilot_of_ue
        for k in range(3, 9):
            scores = [sum(beta[:, l] @ beta[:, k] for l in range(k) if p[l] == t) for t in range(3)]
            assert p[k] == int(np.argmin(scores))

    def test_cohort_consistency(self):
        net = generate_network(10, 12, AreaSpec(), ShadowModel(), np.random.default_rng(3))
        a = assign_pilots(net, 4, np.random.default_rng(3))
        for k in range(12):
            cohort = a.cohort(k)
            assert k in cohort
            assert set(cohort.tolist()) == set(np.flatnonzero(a.pilot_of_ue == a.pilot_of_ue[k]).tolist())


class TestSampling:
    def test_pure_los_has_unit_magnitude(self):
        net = NetworkInstance.from_large_scale([[1.0]], [[0.0]])
        real = sample_channel(net, np.random.default_rng(0), size=(10_000,))
        assert np.allclose(np.abs(real.h), 1.0)
        assert abs(np.mean(np.exp(1j * real.phase))) < 0.03
        assert real.phase.min() >= -np.pi and real.phase.max() < np.pi

    def test_rayleigh_power(self):
        net = NetworkInstance.from_large_scale([[0.0]], [[2.0]])
        h = sample_channel(net, np.random.default_rng(1), size=(1_000_000,)).h
        assert 0.99 <= np.mean(np.abs(h) ** 2) / 2.0 <= 1.01

    def test_zero_mean_and_total_power(self):
        net = NetworkInstance.from_large_scale([[0.8]], [[0.5]])
        h = sample_channel(net, np.random.default_rng(2), size=(1_000_000,)).h[:, 0, 0]
        bprime = 0.5 + 0.64
        assert abs(h.mean()) < 3 * np.sqrt(bprime / 1e6)
        assert np.mean(np.abs(h) ** 2) == pytest.approx(bprime, rel=0.01)

    def test_structure(self):
        net = generate_network(3, 2, AreaSpec(), ShadowModel(), np.random.default_rng(0))
        r = sample_channel(net, np.random.default_rng(1), size=(4,))
        assert np.allclose(r.h, net.los_mean * np.exp(1j * r.phase) + r.nlos)


class TestPilots:
    def test_noise_free_uncontaminated(self):
        net, assign, _, frame, _ = make_instance([[0.5, 0.2]], [[1.0, 1.0]], [0, 1], 2)
        powers = PowerConfig(pilot_power=0.5, noise_ul=1e-300)
        real = sample_channel(net, np.random.default_rng(0), size=(3,))
        y = receive_pilots(real, assign, powers, frame, np.random.default_rng(1))
        assert np.allclose(y, np.sqrt(0.5) * 2 * real.h)

    def test_shared_pilot_same_observation(self, contaminated):
        net, assign, powers, frame, _ = contaminated
        real = draw(net, assign, powers, frame, 5, 0)
        assert np.array_equal(real.pilot_obs[..., 0], real.pilot_obs[..., 2])

    def test_observation_power(self, contaminated):
        net, assign, powers, frame, stats = contaminated
        real = draw(net, assign, powers, frame, 1_000_000, 3)
        emp = np.mean(np.abs(real.pilot_obs) ** 2, axis=0)
        assert np.allclose(emp, frame.tau_p * stats.lam_prime, rtol=0.01)


class TestStatistics:
    def test_noise_free_mmse_is_perfect(self):
        _, _, _, _, stats = make_instance([[0.3]], [[1.0]], [0], 1, noise=1e-300)
        assert stats.c[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_rayleigh_scalar(self):
        _, _, _, _, s = make_instance([[0.0]], [[1.0]], [0], 1)
        assert (s.lam[0, 0], s.c[0, 0], s.lam_prime[0, 0], s.c_prime[0, 0]) == pytest.approx((2.0, 0.5, 2.0, 0.5))

    def test_rician_scalar(self):
        _, _, _, _, s = make_instance([[1.0]], [[1.0]], [0], 1)
        assert s.lam_prime[0, 0] == pytest.approx(3.0)
        assert s.c_prime[0, 0] == pytest.approx(2.0 - 4.0 / 3.0)

    def test_contaminated_hand_values(self, contaminated):
        net, _, powers, frame, s = contaminated
        # AP 1, UE 0 shares pilot 0 with UE 2.
        lam = 1.0 * 2 * 0.4 + 1.4 * 2 * 0.2 + 0.3
        bp0, bp2 = 0.4 + 0.09, 0.2 + 0.25
        lamp = 1.0 * 2 * bp0 + 1.4 * 2 * bp2 + 0.3
        assert s.lam[1, 0] == pytest.approx(lam)
        assert s.lam_prime[1, 0] == pytest.approx(lamp)
        assert s.c[1, 0] == pytest.approx(0.4 - 2 * 0.16 / lam)
        assert s.z[1, 0] == pytest.approx(2 * 0.16 / lam + 0.09)

    def test_error_variance_ordering(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            net = generate_network(20, 10, AreaSpec(), ShadowModel(), rng)
            assign = assign_pilots(net, 3, rng)
            s = compute_statistics(net, assign, PowerConfig(), FrameConfig(tau_p=3))
            assert np.all(s.c >= 0) and np.all(s.c <= s.nlos_var)
            assert np.all(s.c_prime <= s.beta_prime)
            assert np.all(s.c <= s.c_prime) and np.all(s.c_prime <= s.ls_error_var)

    def test_mismatched_assignment(self):
        net = NetworkInstance.from_large_scale(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(ConfigError):
            compute_statistics(net, PilotAssignment(np.array([0, 1]), 2), PowerConfig(), FrameConfig(tau_p=2))


class TestEstimators:
    def test_mmse_perfect_when_noise_free(self):
        net, assign, _, frame, _ = make_instance([[0.7, 0.3]], [[1.0, 0.5]], [0, 1], 2)
        powers = PowerConfig(pilot_power=1.0, noise_ul=1e-300)
        stats = compute_statistics(net, assign, powers, frame)
        real = draw(net, assign, powers, frame, 20, 1)
        assert np.allclose(estimate_mmse(real, stats), real.h)

    def test_mmse_rayleigh_reduction(self, contaminated):
        net, assign, powers, frame, _ = contaminated
        ray = NetworkInstance.from_large_scale(np.zeros_like(net.los_mean), net.nlos_var)
        stats = compute_statistics(ray, assign, powers, frame)
        real = draw(ray, assign, powers, frame, 10, 2)
        expected = np.sqrt(stats.pilot_power) * stats.nlos_var * real.pilot_obs / stats.lam
        assert np.allclose(estimate_mmse(real, stats), expected)

    def test_lmmse_linear(self, contaminated):
        net, assign, powers, frame, stats = contaminated
        real = draw(net, assign, powers, frame, 2, 0)
        zero = real.with_pilots(np.zeros_like(real.pilot_obs))
        assert np.all(estimate_lmmse(zero, stats) == 0)

    def test_lmmse_scalar_gain(self):
        net, assign, powers, frame, stats = make_instance([[1.0]], [[1.0]], [0], 1)
        real = draw(net, assign, powers, frame, 3, 0)
        assert np.allclose(estimate_lmmse(real, stats), (2.0 / 3.0) * real.pilot_obs)

    def test_ls_noise_free(self):
        net, assign, _, frame, _ = make_instance([[0.5]], [[0.5]], [0], 1)
        powers = PowerConfig(pilot_power=0.3, noise_ul=1e-300)
        stats = compute_statistics(net, assign, powers, frame)
        real = draw(net, assign, powers, frame, 5, 0)
        assert np.allclose(estimate_ls(real, stats), real.h)

    def test_ls_lmmse_proportional(self, contaminated):
        net, assign, powers, frame, stats = contaminated
        real = draw(net, assign, powers, frame, 50, 4)
        ratio = stats.lam_prime / (stats.pilot_gain * stats.beta_prime)
        lmmse, ls = estimate_lmmse(real, stats), estimate_ls(real, stats)
        assert np.max(np.abs(ls - lmmse * ratio) / np.abs(ls)) < 1e-12

    @pytest.mark.parametrize("est", list(Estimator))
    def test_mse_and_power(self, contaminated, est):
        net, assign, powers, frame, stats = contaminated
        real = draw(net, assign, powers, frame, 1_000_000, 10)
        hhat = estimate(real, stats, est)
        assert np.allclose(np.mean(np.abs(real.h - hhat) ** 2, axis=0), stats.error_var(est), rtol=0.01)
        assert np.allclose(np.mean(np.abs(hhat) ** 2, axis=0), stats.estimate_power(est), rtol=0.01)

    @pytest.mark.parametrize("est", [Estimator.MMSE, Estimator.LMMSE])
    def test_estimate_uncorrelated_with_error(self, contaminated, est):
        net, assign, powers, frame, stats = contaminated
        real = draw(net, assign, powers, frame, 200_000, 12)
        hhat = estimate(real, stats, est)
        prod = hhat * np.conj(real.h - hhat)
        se = np.abs(prod).std(axis=0) / np.sqrt(len(prod))
        assert np.all(np.abs(prod.mean(axis=0)) < 4 * se)

    def test_mmse_conditional_mean(self, contaminated):
        net, assign, powers, frame, stats = contaminated
        phase = np.random.default_rng(0).uniform(-np.pi, np.pi, net.los_mean.shape)
        real = draw(net, assign, powers, frame, 200_000, 13, phase=phase)
        hhat = estimate_mmse(real, stats)
        se = hhat.std(axis=0) / np.sqrt(len(hhat))
        assert np.all(np.abs(hhat.mean(axis=0) - net.los_mean * np.exp(1j * phase)) < 4 * se)

    def test_missing_pilots(self, contaminated):
        net, _, _, _, stats = contaminated
        with pytest.raises(ValueError):
            estimate(sample_channel(net, np.random.default_rng(0)), stats, "ls")

    def test_deterministic(self, contaminated):
        net, assign, powers, frame, stats = contaminated
        a = estimate(draw(net, assign, powers, frame, 10, 5), stats, "mmse")
        b = estimate(draw(net, assign, powers, frame, 10, 5), stats, "mmse")
        assert np.array_equal(a, b)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.0, 3.0), min_size=6, max_size=6),
    st.lists(st.floats(0.01, 3.0), min_size=6, max_size=6),
    st.floats(1e-3, 10.0),
    st.sampled_from([1, 2, 3]),
)
def test_statistics_invariants(los, nlos, noise, tau_p):
    los = np.reshape(los, (2, 3))
    nlos = np.reshape(nlos, (2, 3))
    pilots = np.arange(3) % tau_p
    _, _, _, _, s = make_instance(los, nlos, pilots, tau_p, noise=noise)
    tol = 1e-12 * s.beta_prime
    assert np.all(s.c >= -tol) and np.all(s.c <= s.nlos_var + tol)
    assert np.all(s.c_prime >= -tol) and np.all(s.c_prime <= s.beta_prime + tol)
    assert np.all(s.c <= s.c_prime + tol)
    assert np.all(s.c_prime <= s.ls_error_var + tol)
    assert np.allclose(s.z, s.pilot_gain * s.nlos_var**2 / s.lam + los**2)
