import logging
from typing import Literal, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
from pydantic import BaseModel, ConfigDict, model_validator

from src.chanmodel import ChannelMatrix, ChannelSet, SvdPartition, partition_svd
from src.perturb import PerturbMoments
from src.txscheme import (
    RxBeamformer,
    SinrReport,
    TxScheme,
    artificial_noise_scheme,
    design_artificial_noise,
    evaluate_sinr,
    eve_mmse_beamformer,
)
from src.util import min_eigenvalue, symmetrize

RhoPolicy = Literal["receiver", "transmitter"]

LOADING = 1e-8


class RobustContext(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: Literal["fdd", "tdd"]
    q_int: np.ndarray
    t_hat: np.ndarray

    @model_validator(mode="after")
    def _covariance(self):
        scale = max(np.linalg.norm(self.q_int), 1.0)
        if np.linalg.norm(self.q_int - self.q_int.conj().T) > 1e-10 * scale:
            raise ValueError("interference-plus-noise covariance must be Hermitian")
        if min_eigenvalue(self.q_int) <= 0.0:
            raise ValueError("interference-plus-noise covariance must be positive definite")
        return self


def mmse_output_sinr(h_eff: np.ndarray, q_int: np.ndarray, rho: float, power_p: float) -> float:
    """rho P h^H Q^-1 h, the SINR of the optimal receiver w = Q^-1 h."""
    return float(rho * power_p * np.vdot(h_eff, scipy.linalg.solve(q_int, h_eff, assume_a="pos")).real)


def solve_power_fraction(h_eff: np.ndarray, spread: np.ndarray, noise: float, power_p: float, target_sinr: float) -> Tuple[float, bool]:
    """Smallest rho with rho P h^H (noise I + (1 - rho) B)^-1 h = S for PSD B.

    Returns (1, True) when even rho = 1 misses the target.
    """
    eye = np.eye(h_eff.shape[0])

    def shortfall(rho):
        return mmse_output_sinr(h_eff, noise * eye + (1.0 - rho) * spread, rho, power_p) - target_sinr

    if shortfall(1.0) < 0.0:
        return 1.0, True
    rho = scipy.optimize.brentq(shortfall, 0.0, 1.0, xtol=1e-15)
    return float(rho), False


def _unit_noise_power(na: int, power_p: float) -> float:
    return power_p / (na - 1) if na > 1 else 0.0


def fdd_context(
    chan: ChannelSet,
    h_tilde: ChannelMatrix,
    target_sinr: float,
    rho_policy: RhoPolicy = "transmitter",
    via_estimate: bool = False,
) -> Tuple[RobustContext, TxScheme]:
    """Bob knows the CSI Alice used, so he rebuilds her scheme exactly."""
    svd_t = partition_svd(h_tilde)
    h = chan.h_ba.entries
    # interference physically traverses the true channel; strict mode uses Alice's estimate
    prop = h_tilde.entries if via_estimate else h
    t = svd_t.v_1
    if rho_policy == "receiver":
        t_prime = svd_t.t_prime
        spread = symmetrize(_unit_noise_power(chan.na, chan.power_p) * (prop @ t_prime @ t_prime.conj().T @ prop.conj().T))
        rho, outage = solve_power_fraction(h @ t, spread, chan.sigma_b_sq, chan.power_p, target_sinr)
        scheme = artificial_noise_scheme(svd_t, rho, chan.power_p, target_sinr, outage=outage)
    else:
        scheme = design_artificial_noise(chan.with_bob_channel(h_tilde), svd_t, target_sinr)
    q_int = symmetrize(prop @ scheme.q_z @ prop.conj().T) + chan.sigma_b_sq * np.eye(chan.nb)
    return RobustContext(mode="fdd", q_int=q_int, t_hat=t), scheme


def fdd_receiver(
    chan: ChannelSet,
    h_tilde: ChannelMatrix,
    target_sinr: float,
    rho_policy: RhoPolicy = "transmitter",
    via_estimate: bool = False,
) -> Tuple[RxBeamformer, SinrReport]:
    ctx, scheme = fdd_context(chan, h_tilde, target_sinr, rho_policy, via_estimate)
    w = scipy.linalg.solve(ctx.q_int, chan.h_ba.entries @ ctx.t_hat, assume_a="pos")
    w_b = RxBeamformer(w=w, kind="robust_fdd")
    return w_b, evaluate_sinr(chan, scheme, w_b, eve_mmse_beamformer(chan, scheme))


def _expected_spread(chan: ChannelSet, svd: SvdPartition, moments: PerturbMoments) -> np.ndarray:
    """Expected H T~' T~'^H H^H to the order of the expansion, symmetrized."""
    h = chan.h_ba.entries
    s1, u1 = svd.sigma_1, svd.u_1
    he = h @ moments.e_dv1
    spread = h @ h.conj().T - s1**2 * np.outer(u1, u1.conj()) - s1 * np.outer(u1, he.conj()) - s1 * np.outer(he, u1.conj())
    return symmetrize(spread)


def expected_interference_covariance(chan: ChannelSet, svd: SvdPartition, moments: PerturbMoments, beta: float) -> np.ndarray:
    return beta * _expected_spread(chan, svd, moments) + chan.sigma_b_sq * np.eye(chan.nb)


def tdd_context(
    chan: ChannelSet,
    svd: SvdPartition,
    moments: PerturbMoments,
    err_sample: ChannelMatrix,
    target_sinr: float,
    rho_policy: RhoPolicy = "transmitter",
) -> Tuple[RobustContext, TxScheme, bool]:
    """Bob only knows H_ba and the error statistics; err_sample drives Alice's side."""
    unit = _unit_noise_power(chan.na, chan.power_p)
    t_hat = svd.v_1 + moments.e_dv1
    h_hat = chan.h_ba.entries @ t_hat

    spread = _expected_spread(chan, svd, moments)
    eye = np.eye(chan.nb)

    h_tilde = chan.h_ba + err_sample
    svd_t = partition_svd(h_tilde)
    if rho_policy == "receiver":
        # the root search needs a PSD spread over the whole of [0, 1]
        clipped = spread - min(min_eigenvalue(spread), 0.0) * eye
        rho, outage = solve_power_fraction(h_hat, unit * clipped, chan.sigma_b_sq, chan.power_p, target_sinr)
        scheme = artificial_noise_scheme(svd_t, rho, chan.power_p, target_sinr, outage=outage)
    else:
        scheme = design_artificial_noise(chan.with_bob_channel(h_tilde), svd_t, target_sinr)
        rho = min(1.0, chan.sigma_b_sq * target_sinr / (svd.sigma_1**2 * chan.power_p))

    q_hat = symmetrize((1.0 - rho) * unit * spread + chan.sigma_b_sq * eye)
    lowest = min_eigenvalue(q_hat)
    loaded = lowest <= 0.0
    if loaded:
        q_hat = q_hat + (LOADING * np.trace(q_hat).real / chan.nb - lowest) * eye
        logging.debug(f"Expected covariance was indefinite (lowest eigenvalue {lowest:.3e}); diagonal loading applied")
    return RobustContext(mode="tdd", q_int=q_hat, t_hat=t_hat), scheme, loaded


def tdd_receiver(
    chan: ChannelSet,
    svd: SvdPartition,
    moments: PerturbMoments,
    err_sample: ChannelMatrix,
    target_sinr: float,
    rho_policy: RhoPolicy = "transmitter",
) -> Tuple[RxBeamformer, SinrReport]:
    ctx, scheme, loaded = tdd_context(chan, svd, moments, err_sample, target_sinr, rho_policy)
    w = scipy.linalg.solve(ctx.q_int, chan.h_ba.entries @ ctx.t_hat, assume_a="pos")
    w_b = RxBeamformer(w=w, kind="robust_tdd")
    report = evaluate_sinr(chan, scheme, w_b, eve_mmse_beamformer(chan, scheme))
    return w_b, report.model_copy(update={"loaded": loaded})
