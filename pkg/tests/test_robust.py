import numpy as np
import pytest
from pydantic import ValidationError

from src.chanmodel import ChannelMatrix, CsiErrorModel, generate_channels, partition_svd, sample_csi_error
from src.perturb import compute_moments, simulate_naive
from src.robust import (
    RobustContext,
    expected_interference_covariance,
    fdd_context,
    fdd_receiver,
    mmse_output_sinr,
    solve_power_fraction,
    tdd_context,
    tdd_receiver,
)
from src.util import from_db, to_db


def _zero(chan):
    return ChannelMatrix(entries=np.zeros((chan.nb, chan.na)))


@pytest.mark.parametrize("policy", ["transmitter", "receiver"])
class TestExactCsi:
    def test_fdd_reduces_to_perfect(self, chan5, target, policy):
        _, report = fdd_receiver(chan5, chan5.h_ba + _zero(chan5), target, rho_policy=policy)
        assert report.sinr_b == pytest.approx(target, rel=1e-9)

    def test_tdd_reduces_to_perfect(self, chan5, svd5, target, policy):
        moments = compute_moments(svd5, CsiErrorModel.iid(0.0))
        _, report = tdd_receiver(chan5, svd5, moments, _zero(chan5), target, rho_policy=policy)
        assert report.sinr_b == pytest.approx(target, rel=1e-9)
        assert not report.loaded


class TestFdd:
    @pytest.fixture
    def h_tilde(self, chan5):
        return chan5.h_ba + sample_csi_error(CsiErrorModel.iid(float(from_db(-10.0))), 5, 5, rng_seed=3)

    def test_receiver_policy_meets_target(self, chan5, h_tilde, target):
        _, scheme = fdd_context(chan5, h_tilde, target, rho_policy="receiver")
        _, report = fdd_receiver(chan5, h_tilde, target, rho_policy="receiver")
        if not scheme.outage:
            assert report.sinr_b == pytest.approx(target, rel=1e-6)

    def test_mmse_identity(self, chan5, h_tilde, target):
        ctx, scheme = fdd_context(chan5, h_tilde, target)
        _, report = fdd_receiver(chan5, h_tilde, target)
        closed = mmse_output_sinr(chan5.h_ba.entries @ ctx.t_hat, ctx.q_int, scheme.rho, scheme.power_p)
        assert closed == pytest.approx(report.sinr_b, rel=1e-9)

    def test_transmitter_policy_uses_estimate(self, chan5, h_tilde, target):
        _, scheme = fdd_context(chan5, h_tilde, target)
        sigma_1 = partition_svd(h_tilde).sigma_1
        assert scheme.rho == pytest.approx(min(1.0, target / (sigma_1**2 * chan5.power_p)))

    def test_strict_propagation_changes_covariance(self, chan5, h_tilde, target):
        physical, _ = fdd_context(chan5, h_tilde, target)
        strict, _ = fdd_context(chan5, h_tilde, target, via_estimate=True)
        assert not np.allclose(physical.q_int, strict.q_int)


class TestTdd:
    def test_expected_covariance_is_hermitian(self, chan5, svd5):
        moments = compute_moments(svd5, CsiErrorModel.iid(float(from_db(-10.0))))
        q = expected_interference_covariance(chan5, svd5, moments, beta=20.0)
        np.testing.assert_array_equal(q, q.conj().T)

    def test_context(self, chan5, svd5, target):
        err = CsiErrorModel.iid(float(from_db(-15.0)))
        moments = compute_moments(svd5, err)
        ctx, scheme, _ = tdd_context(chan5, svd5, moments, sample_csi_error(err, 5, 5, rng_seed=4), target)
        assert ctx.mode == "tdd"
        np.testing.assert_allclose(ctx.t_hat, svd5.v_1 + moments.e_dv1)
        assert 0.0 < scheme.rho <= 1.0


class TestPowerFraction:
    def test_solves_target(self):
        h = np.array([1.0, 0.0], dtype=complex)
        spread = np.diag([0.0, 1.0])
        rho, outage = solve_power_fraction(h, spread, 1.0, 100.0, 10.0)
        assert not outage
        assert rho == pytest.approx(0.1)

    def test_outage(self):
        h = np.array([0.1, 0.0], dtype=complex)
        rho, outage = solve_power_fraction(h, np.eye(2), 1.0, 100.0, 10.0)
        assert outage
        assert rho == 1.0

    def test_context_rejects_indefinite(self):
        with pytest.raises(ValidationError):
            RobustContext(mode="fdd", q_int=np.diag([1.0, -1.0]), t_hat=np.ones(2))


def _paired_trials(target, sigma_h_db, count):
    err = CsiErrorModel.iid(float(from_db(sigma_h_db)))
    for seed in range(count):
        chan = generate_channels(5, 5, 5, rng_seed=np.random.SeedSequence(seed, spawn_key=(0,)))
        svd = partition_svd(chan.h_ba)
        if svd.ill_conditioned:
            continue
        dh = sample_csi_error(err, 5, 5, rng_seed=np.random.SeedSequence(seed, spawn_key=(1,)))
        yield (
            simulate_naive(chan, dh, target, svd),
            fdd_receiver(chan, chan.h_ba + dh, target)[1],
            tdd_receiver(chan, svd, compute_moments(svd, err), dh, target)[1],
        )


def test_robust_receivers_share_alice_scheme(target):
    for naive, fdd, tdd in _paired_trials(target, -10.0, 60):
        # same transmission, so Eve is unaffected by Bob's receiver
        assert fdd.sinr_e == pytest.approx(naive.sinr_e, rel=1e-9)
        assert tdd.sinr_e == pytest.approx(naive.sinr_e, rel=1e-9)
        # the FDD filter is MMSE for the true covariance
        assert fdd.sinr_b >= naive.sinr_b * (1.0 - 1e-9)
        assert fdd.sinr_b >= tdd.sinr_b * (1.0 - 1e-9)


def test_robust_receivers_recover_sinr(target):
    naive, fdd = [], []
    for n, f, _ in _paired_trials(target, -10.0, 150):
        naive.append(n.sinr_b)
        fdd.append(f.sinr_b)
    naive_db, fdd_db = to_db(np.mean(naive)), to_db(np.mean(fdd))
    assert abs(fdd_db - to_db(target)) < 2.5
    assert naive_db < to_db(target) - 6.0
    assert fdd_db > naive_db + 4.0
