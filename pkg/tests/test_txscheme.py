import numpy as np
import pytest
import scipy.linalg
from pydantic import ValidationError

from src.chanmodel import ChannelMatrix, ChannelSet, generate_channels, partition_svd
from src.errors import DegenerateChannelError
from src.txscheme import (
    RxBeamformer,
    TxScheme,
    bob_matched_beamformer,
    design_artificial_noise,
    design_known_ecsi,
    evaluate_sinr,
    eve_mmse_beamformer,
    eve_sinr_closed_form,
    generalized_eigs,
    mmse_beamformer,
    secrecy_capacity_matrix,
    secrecy_capacity_proxy,
)
from src.util import from_db


def _power_used(scheme):
    return scheme.rho * scheme.power_p + np.trace(scheme.q_z).real + scheme.idle_power


class TestArtificialNoise:
    @pytest.mark.parametrize("n", [2, 4, 5, 8])
    @pytest.mark.parametrize("target_db", [10.0, 20.0])
    def test_perfect_csi_hits_target(self, n, target_db):
        target = float(from_db(target_db))
        for seed in range(25):
            chan = generate_channels(n, n, n, rng_seed=seed)
            scheme = design_artificial_noise(chan, partition_svd(chan.h_ba), target)
            assert _power_used(scheme) == pytest.approx(chan.power_p, rel=1e-9)
            if scheme.outage:
                continue
            report = evaluate_sinr(chan, scheme, bob_matched_beamformer(chan, scheme), eve_mmse_beamformer(chan, scheme))
            assert report.sinr_b == pytest.approx(target, rel=1e-9)

    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_noise_is_invisible_to_bob(self, n, target):
        for seed in range(40):
            chan = generate_channels(n, n, n, rng_seed=seed)
            scheme = design_artificial_noise(chan, partition_svd(chan.h_ba), target)
            if scheme.outage:
                continue
            h = chan.h_ba.entries
            w = h @ scheme.t
            leaked = scheme.interference_power(h.conj().T @ w)
            signal = scheme.rho * scheme.power_p * np.vdot(w, w).real ** 2
            assert leaked <= 1e-18 * signal

    def test_factored_noise_matches_covariance(self, chan5, svd5, target):
        scheme = design_artificial_noise(chan5, svd5, target)
        assert scheme.noise_basis.shape == (5, 4)
        assert scheme.noise_power == pytest.approx((1.0 - scheme.rho) * scheme.power_p / 4)
        x = np.random.default_rng(3).standard_normal(5) + 0j
        assert scheme.interference_power(x) == pytest.approx(np.vdot(x, scheme.q_z @ x).real, rel=1e-12)

    def test_outage_puts_everything_on_data(self, chan5, svd5):
        scheme = design_artificial_noise(chan5, svd5, float(from_db(80.0)))
        assert scheme.outage
        assert scheme.rho == 1.0
        assert not np.any(scheme.q_z)
        report = evaluate_sinr(chan5, scheme, bob_matched_beamformer(chan5, scheme), eve_mmse_beamformer(chan5, scheme))
        assert report.outage
        assert report.sinr_b == pytest.approx(svd5.sigma_1**2 * chan5.power_p, rel=1e-9)

    def test_single_transmit_antenna(self):
        chan = generate_channels(1, 1, 1, rng_seed=2)
        scheme = design_artificial_noise(chan, partition_svd(chan.h_ba), float(from_db(5.0)))
        assert scheme.q_z.shape == (1, 1)
        assert not np.any(scheme.q_z)
        assert _power_used(scheme) == pytest.approx(chan.power_p)


class TestTxSchemeValidation:
    def test_unit_norm(self):
        with pytest.raises(ValidationError):
            TxScheme(t=np.array([1.0, 1.0], dtype=complex), q_z=np.zeros((2, 2)), rho=1.0, power_p=1.0, target_sinr=1.0)

    def test_power_budget(self):
        with pytest.raises(ValidationError):
            TxScheme(t=np.array([1.0, 0.0], dtype=complex), q_z=np.zeros((2, 2)), rho=0.5, power_p=1.0, target_sinr=1.0)

    def test_outage_needs_full_power(self):
        with pytest.raises(ValidationError):
            TxScheme(
                t=np.array([1.0, 0.0], dtype=complex),
                q_z=np.diag([0.0, 0.5]).astype(complex),
                rho=0.5,
                power_p=1.0,
                target_sinr=1.0,
                outage=True,
            )

    def test_zero_receiver_rejected(self):
        with pytest.raises(ValidationError):
            RxBeamformer(w=np.zeros(3, dtype=complex), kind="matched")


class TestReceivers:
    def test_eve_closed_form_matches_mmse_output(self, chan5, svd5, target):
        scheme = design_artificial_noise(chan5, svd5, target)
        report = evaluate_sinr(chan5, scheme, bob_matched_beamformer(chan5, scheme), eve_mmse_beamformer(chan5, scheme))
        assert eve_sinr_closed_form(chan5, scheme) == pytest.approx(report.sinr_e, rel=1e-9)

    def test_mmse_beats_matched_filter_for_eve(self, chan5, svd5, target):
        scheme = design_artificial_noise(chan5, svd5, target)
        mmse = evaluate_sinr(chan5, scheme, bob_matched_beamformer(chan5, scheme), eve_mmse_beamformer(chan5, scheme))
        matched = RxBeamformer(w=chan5.h_ea.entries @ scheme.t, kind="matched")
        plain = evaluate_sinr(chan5, scheme, bob_matched_beamformer(chan5, scheme), matched)
        assert mmse.sinr_e >= plain.sinr_e * (1 - 1e-12)

    def test_mmse_falls_back_when_blind(self):
        h = np.array([[0.0, 1.0]], dtype=complex)
        w = mmse_beamformer(h, np.array([1.0, 0.0], dtype=complex), np.zeros((2, 2)), 1.0)
        np.testing.assert_array_equal(w.w, [1.0])


class TestSecrecy:
    def test_proxy(self):
        assert secrecy_capacity_proxy(100.0, 1.0) == pytest.approx(np.log2(101.0) - 1.0)
        assert secrecy_capacity_proxy(1.0, 10.0) == 0.0

    def test_matrix_clamps_stronger_eve(self, chan5, svd5, target):
        h = chan5.h_ba.entries
        strong_eve = ChannelSet(h_ba=chan5.h_ba, h_ea=ChannelMatrix(entries=3.0 * h))
        scheme = design_artificial_noise(chan5, svd5, target)
        assert secrecy_capacity_matrix(strong_eve, scheme) == 0.0
        assert secrecy_capacity_matrix(chan5, scheme) >= 0.0


class TestKnownEcsi:
    def test_generalized_eigs(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        a = m @ m.conj().T
        b = np.eye(3) + 0.1 * a
        w, x = generalized_eigs(a, b)
        np.testing.assert_allclose(a @ x, b @ x * w, atol=1e-10)
        assert np.all(np.diff(w) >= 0)

    def test_eve_nulled_when_she_has_fewer_antennas(self, target):
        chan = generate_channels(4, 4, 2, rng_seed=6)
        scheme = design_known_ecsi(chan, chan.h_ea, target)
        report = evaluate_sinr(chan, scheme, bob_matched_beamformer(chan, scheme), eve_mmse_beamformer(chan, scheme))
        assert report.sinr_e < 1e-10
        if not scheme.outage:
            assert report.sinr_b == pytest.approx(target, rel=1e-9)
        assert _power_used(scheme) == pytest.approx(chan.power_p, rel=1e-9)

    @pytest.mark.parametrize("ne", [1, 2, 3])
    def test_best_beam_in_eve_null_space(self, target, ne):
        chan = generate_channels(4, 4, ne, rng_seed=11)
        scheme = design_known_ecsi(chan, chan.h_ea, target)
        h_b, h_e = chan.h_ba.entries, chan.h_ea.entries
        blind = scipy.linalg.null_space(h_e)
        best = np.linalg.eigvalsh(blind.conj().T @ h_b.conj().T @ h_b @ blind)[-1]
        assert np.linalg.norm(h_e @ scheme.t) < 1e-10
        assert np.linalg.norm(h_b @ scheme.t) ** 2 == pytest.approx(best, rel=1e-9)

    def test_single_antenna_eve_never_forces_outage(self, target):
        for seed in range(100):
            chan = generate_channels(4, 4, 1, rng_seed=seed)
            scheme = design_known_ecsi(chan, chan.h_ea, target)
            assert not scheme.outage
            report = evaluate_sinr(chan, scheme, bob_matched_beamformer(chan, scheme), eve_mmse_beamformer(chan, scheme))
            assert report.sinr_b == pytest.approx(target, rel=1e-9)
            assert report.sinr_e < 1e-10

    def test_maximizes_gain_ratio(self, target):
        chan = generate_channels(4, 4, 6, rng_seed=6)
        scheme = design_known_ecsi(chan, chan.h_ea, target)
        h_b, h_e = chan.h_ba.entries, chan.h_ea.entries
        w, _ = generalized_eigs(h_b.conj().T @ h_b, h_e.conj().T @ h_e)
        ratio = np.linalg.norm(h_b @ scheme.t) ** 2 / np.linalg.norm(h_e @ scheme.t) ** 2
        assert ratio == pytest.approx(w[-1], rel=1e-8)

    def test_full_power_policy(self, target):
        chan = generate_channels(4, 4, 6, rng_seed=6)
        scheme = design_known_ecsi(chan, chan.h_ea, target, full_power=True)
        assert scheme.rho == 1.0
        assert scheme.idle_power == 0.0

    def test_degenerate(self, target):
        h = ChannelMatrix(entries=np.ones((1, 3)))
        chan = ChannelSet(h_ba=h, h_ea=h)
        with pytest.raises(DegenerateChannelError):
            design_known_ecsi(chan, h, target)


class TestWorkedInstances:
    @pytest.fixture
    def diag_chan(self):
        h = ChannelMatrix(entries=np.diag([2.0, 1.0]))
        return ChannelSet(h_ba=h, h_ea=ChannelMatrix(entries=[[1.0, 0.0]]))

    def test_diagonal_design(self, diag_chan):
        scheme = design_artificial_noise(diag_chan, partition_svd(diag_chan.h_ba), 100.0)
        assert scheme.rho == pytest.approx(0.25)
        np.testing.assert_allclose(scheme.t, [1.0, 0.0])
        np.testing.assert_allclose(scheme.q_z, np.diag([0.0, 75.0]), atol=1e-12)
        np.testing.assert_allclose(bob_matched_beamformer(diag_chan, scheme).w, [2.0, 0.0])

    def test_known_ecsi_null_space(self, diag_chan):
        scheme = design_known_ecsi(diag_chan, diag_chan.h_ea, 10.0)
        np.testing.assert_allclose(scheme.t, [0.0, 1.0], atol=1e-12)
        report = evaluate_sinr(diag_chan, scheme, bob_matched_beamformer(diag_chan, scheme), eve_mmse_beamformer(diag_chan, scheme))
        assert report.sinr_e == pytest.approx(0.0, abs=1e-20)
        assert report.sinr_b == pytest.approx(10.0)

    def test_proxy_values(self):
        assert secrecy_capacity_proxy(3.0, 1.0) == pytest.approx(1.0)
        assert secrecy_capacity_proxy(0.0, 0.0) == 0.0
