import logging
from typing import Literal, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.chanmodel import ChannelMatrix, ChannelSet, SvdPartition
from src.errors import DegenerateChannelError, NumericError
from src.util import apply_phase_convention, symmetrize

# singular values below this fraction of the largest count as zero
NULL_RCOND = 1e-5

RxKind = Literal["matched", "mmse", "robust_fdd", "robust_tdd"]


class TxScheme(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: np.ndarray
    q_z: np.ndarray
    rho: float = Field(gt=0, le=1)
    power_p: float = Field(gt=0)
    target_sinr: float = Field(gt=0)
    outage: bool = False
    # power left unused (N_a = 1, fixed-QoS known-ECSI design)
    idle_power: float = Field(default=0.0, ge=0)
    # Q'_z = noise_power * B B^H when the noise is spread over an orthonormal basis B
    noise_basis: Optional[np.ndarray] = None
    noise_power: float = Field(default=0.0, ge=0)

    @field_validator("t")
    @classmethod
    def _unit_norm(cls, t):
        if abs(np.vdot(t, t).real - 1.0) > 1e-12:
            raise ValueError(f"beamformer must have unit norm, got {np.linalg.norm(t)}")
        return t

    @model_validator(mode="after")
    def _power_budget(self):
        scale = max(np.linalg.norm(self.q_z), self.power_p)
        if np.linalg.norm(self.q_z - self.q_z.conj().T) > 1e-9 * scale:
            raise ValueError("interference covariance must be Hermitian")
        if self.q_z.shape[0] > 0 and np.linalg.eigvalsh(symmetrize(self.q_z))[0] < -1e-9 * scale:
            raise ValueError("interference covariance must be positive semidefinite")
        used = self.rho * self.power_p + np.trace(self.q_z).real + self.idle_power
        if abs(used - self.power_p) > 1e-9 * self.power_p:
            raise ValueError(f"power split {used} does not add up to P = {self.power_p}")
        if self.outage and (self.rho != 1.0 or np.any(self.q_z != 0)):
            raise ValueError("an outage scheme puts all power on the data stream")
        return self

    @property
    def na(self) -> int:
        return self.t.shape[0]

    def interference_power(self, hw: np.ndarray) -> float:
        """hw^H Q'_z hw, from the factored form when there is one."""
        if self.noise_basis is not None:
            proj = self.noise_basis.conj().T @ hw
            return float(self.noise_power * np.vdot(proj, proj).real)
        return float(np.vdot(hw, self.q_z @ hw).real)


class RxBeamformer(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: np.ndarray
    kind: RxKind

    @field_validator("w")
    @classmethod
    def _nonzero(cls, w):
        if not np.any(w != 0):
            raise ValueError("receive beamformer must be nonzero")
        return w


class SinrReport(BaseModel):
    sinr_b: float = Field(ge=0)
    sinr_e: float = Field(ge=0)
    secrecy_capacity: float = Field(ge=0)
    outage: bool = False
    # Bob's beamformer output: |w^H H t|^2 rho P and w^H (H Q H^H + s2 I) w
    bob_signal: float = 0.0
    bob_interference: float = 1.0
    loaded: bool = False


def artificial_noise_scheme(svd: SvdPartition, rho: float, power_p: float, target_sinr: float, outage: bool = False) -> TxScheme:
    """t = v_1 with the remaining power spread evenly over T'."""
    na = svd.na
    t = svd.v_1.copy()
    if na == 1:
        return TxScheme(
            t=t,
            q_z=np.zeros((1, 1), dtype=complex),
            rho=rho,
            power_p=power_p,
            target_sinr=target_sinr,
            outage=outage,
            idle_power=(1.0 - rho) * power_p,
        )
    if outage or rho >= 1.0:
        q_z = np.zeros((na, na), dtype=complex)
    else:
        beta = (1.0 - rho) * power_p / (na - 1)
        t_prime = svd.t_prime
        q_z = symmetrize(beta * (t_prime @ t_prime.conj().T))
        return TxScheme(
            t=t,
            q_z=q_z,
            rho=rho,
            power_p=power_p,
            target_sinr=target_sinr,
            noise_basis=t_prime,
            noise_power=beta,
        )
    return TxScheme(t=t, q_z=q_z, rho=rho, power_p=power_p, target_sinr=target_sinr, outage=outage)


def design_artificial_noise(chan: ChannelSet, svd: SvdPartition, target_sinr: float) -> TxScheme:
    rho = chan.sigma_b_sq * target_sinr / (svd.sigma_1**2 * chan.power_p)
    outage = rho >= 1.0
    if outage:
        logging.debug(f"Outage: rho = {rho:.4g} exceeds 1, all power goes to the data stream")
        rho = 1.0
    return artificial_noise_scheme(svd, rho, chan.power_p, target_sinr, outage=outage)


def mmse_beamformer(h: np.ndarray, t: np.ndarray, q_z: np.ndarray, noise: float, kind: RxKind = "mmse") -> RxBeamformer:
    q_int = symmetrize(h @ q_z @ h.conj().T) + noise * np.eye(h.shape[0])
    w = scipy.linalg.solve(q_int, h @ t, assume_a="pos")
    if not np.any(w != 0):
        # h t = 0: no beamformer collects signal, any direction scores zero
        w = np.zeros(h.shape[0], dtype=complex)
        w[0] = 1.0
    return RxBeamformer(w=w, kind=kind)


def bob_matched_beamformer(chan: ChannelSet, scheme: TxScheme) -> RxBeamformer:
    return RxBeamformer(w=chan.h_ba.entries @ scheme.t, kind="matched")


def eve_mmse_beamformer(chan: ChannelSet, scheme: TxScheme) -> RxBeamformer:
    return mmse_beamformer(chan.h_ea.entries, scheme.t, scheme.q_z, chan.sigma_e_sq)


def output_powers(h: np.ndarray, scheme: TxScheme, noise: float, w: np.ndarray) -> Tuple[float, float]:
    """Signal and interference-plus-noise power at the output of receive beamformer w."""
    gain = np.vdot(w, h @ scheme.t)
    signal = scheme.rho * scheme.power_p * abs(gain) ** 2
    interference = scheme.interference_power(h.conj().T @ w) + noise * np.vdot(w, w).real
    return float(signal), float(interference)


def evaluate_sinr(chan: ChannelSet, scheme: TxScheme, w_b: RxBeamformer, w_e: RxBeamformer) -> SinrReport:
    sig_b, int_b = output_powers(chan.h_ba.entries, scheme, chan.sigma_b_sq, w_b.w)
    sig_e, int_e = output_powers(chan.h_ea.entries, scheme, chan.sigma_e_sq, w_e.w)
    if int_b <= 0.0 or int_e <= 0.0:
        raise NumericError("zero interference-plus-noise power at a receiver")
    sinr_b = sig_b / int_b
    sinr_e = sig_e / int_e
    return SinrReport(
        sinr_b=sinr_b,
        sinr_e=sinr_e,
        secrecy_capacity=secrecy_capacity_proxy(sinr_b, sinr_e),
        outage=scheme.outage,
        bob_signal=sig_b,
        bob_interference=int_b,
    )


def eve_sinr_closed_form(chan: ChannelSet, scheme: TxScheme) -> float:
    h = chan.h_ea.entries
    q_int = symmetrize(h @ scheme.q_z @ h.conj().T) + chan.sigma_e_sq * np.eye(h.shape[0])
    g = h @ scheme.t
    return float(scheme.rho * scheme.power_p * np.vdot(g, scipy.linalg.solve(q_int, g, assume_a="pos")).real)


def secrecy_capacity_proxy(sinr_b: float, sinr_e: float) -> float:
    # negative differences mean no secure rate
    return max(0.0, float(np.log2(1.0 + sinr_b) - np.log2(1.0 + sinr_e)))


def _log2det_plus_identity(h: np.ndarray, q_a: np.ndarray, noise: float) -> float:
    m = np.eye(h.shape[0]) + symmetrize(h @ q_a @ h.conj().T) / noise
    sign, logdet = np.linalg.slogdet(m)
    if sign.real <= 0:
        raise NumericError("log-det argument is not positive definite")
    return float(logdet / np.log(2.0))


def secrecy_capacity_matrix(chan: ChannelSet, scheme: TxScheme) -> float:
    """Clamped MIMO wiretap rate difference for Q_a = rho P t t^H + Q'_z."""
    t = scheme.t[:, None]
    q_a = scheme.rho * scheme.power_p * (t @ t.conj().T) + scheme.q_z
    rate_b = _log2det_plus_identity(chan.h_ba.entries, q_a, chan.sigma_b_sq)
    rate_e = _log2det_plus_identity(chan.h_ea.entries, q_a, chan.sigma_e_sq)
    return max(0.0, rate_b - rate_e)


def generalized_eigs(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Solve a x = lambda b x for Hermitian a and positive definite b, ascending."""
    return scipy.linalg.eigh(symmetrize(a), symmetrize(b))


def design_known_ecsi(chan: ChannelSet, h_ea_assumed: ChannelMatrix, target_sinr: float, full_power: bool = False) -> TxScheme:
    h_ba = chan.h_ba.entries
    h_ea = h_ea_assumed.entries
    gram_b = h_ba.conj().T @ h_ba
    gram_e = h_ea.conj().T @ h_ea
    blind = scipy.linalg.null_space(h_ea, rcond=NULL_RCOND)
    if blind.shape[1] == 0:
        _, vecs = generalized_eigs(gram_b, gram_e)
        t = vecs[:, -1]
    else:
        # every beam in Eve's null space zeroes her SINR; keep the one Bob hears best
        gains, vecs = scipy.linalg.eigh(symmetrize(blind.conj().T @ gram_b @ blind))
        if gains[-1] <= NULL_RCOND**2 * max(np.linalg.eigvalsh(symmetrize(gram_b))[-1], 0.0):
            raise DegenerateChannelError("Bob receives nothing in Eve's null space")
        t = blind @ vecs[:, -1]
    t = t / np.linalg.norm(t)
    t, _ = apply_phase_convention(t[:, None])
    t = t[:, 0]

    gain = np.linalg.norm(h_ba @ t) ** 2
    need = chan.sigma_b_sq * target_sinr / (chan.power_p * gain)
    outage = need >= 1.0
    rho = 1.0 if (outage or full_power) else need
    na = chan.na
    return TxScheme(
        t=t,
        q_z=np.zeros((na, na), dtype=complex),
        rho=rho,
        power_p=chan.power_p,
        target_sinr=target_sinr,
        outage=outage,
        idle_power=(1.0 - rho) * chan.power_p,
    )
