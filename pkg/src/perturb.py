"""Second-order perturbation of the SVD of H_ba under a random CSI error dH.

Right singular vectors and squared singular values of H are the eigenpairs of
A = H^H H.  Under H -> H + dH,

    A -> A + A1 + A2,   A1 = H^H dH + dH^H H,   A2 = dH^H dH,

and the expected eigenpair changes follow from non-degenerate Rayleigh-Schrodinger
expansion to second order.  With c_ab = v_a^H A1 v_b and X(a, b) = u_a^H dH v_b,

    c_ab = sigma_a X(a, b) + sigma_b conj(X(b, a)),

and circular symmetry of dH kills every E{X X} term, so all expectations reduce
to the bilinear moments E{X(a, b) conj(X(c, d))} of the error covariance.
Null-space directions of a fat channel enter with sigma = 0 and u = 0.

Perturbed vectors are phase aligned (v_k^H v~_k real positive), which is the
normalization the expansion uses.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.chanmodel import (
    ChannelMatrix,
    ChannelSet,
    CsiErrorModel,
    SvdPartition,
    partition_svd,
    sample_csi_errors,
)
from src.errors import IllConditionedGapError, OrientationError, ValidityRangeError
from src.txscheme import (
    RxBeamformer,
    SinrReport,
    TxScheme,
    design_artificial_noise,
    evaluate_sinr,
    eve_mmse_beamformer,
)
from src.util import SeedLike, align_to

VALIDITY_LIMIT_DB = -10.0


class PerturbMoments(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    d: np.ndarray
    g: np.ndarray
    g_prime: np.ndarray
    g_dprime: np.ndarray
    k: np.ndarray
    e_dv_s: np.ndarray
    e_vs_dvs: np.ndarray
    e_p1: np.ndarray
    e_dsigma_s: np.ndarray
    e_dsigma1: float
    e_dsigma1_sq: float
    e_dv1: np.ndarray
    e_v1_dv1: complex

    @model_validator(mode="after")
    def _finite(self):
        for name in ("d", "g", "g_prime", "g_dprime", "k", "e_dv_s", "e_vs_dvs", "e_dsigma_s", "e_dv1"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"moment {name} is not finite")
        if np.any(np.diag(self.d) <= 0):
            raise ValueError("D must be positive: singular values need a gap above sigma_F")
        return self

    @property
    def leakage(self) -> float:
        """E{v_1^H dv_1} + E{dv_1^H v_1}, real by construction."""
        return 2.0 * float(np.real(self.e_v1_dv1))


class MonteCarloMoments(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    draws: int
    e_dsigma_s: np.ndarray
    e_dsigma1: float
    e_dsigma1_sq: float
    e_v1_dv1: complex
    e_dv1: np.ndarray
    e_dv_s: np.ndarray
    e_vs_dvs: np.ndarray
    stderr_dsigma1: float
    stderr_dsigma1_sq: float
    stderr_v1_dv1: float
    stderr_dv1: np.ndarray


def _bilinear_tensor(svd: SvdPartition, err: CsiErrorModel) -> np.ndarray:
    """T[a, b, c, d] = E{X(a, b) conj(X(c, d))}."""
    na, nb, f = svd.na, svd.nb, svd.f
    u_pad = np.zeros((nb, na), dtype=complex)
    u_pad[:, :f] = svd.u
    # X(a, b) = kron(v_b, conj(u_a)) . vec(dH)
    rows = np.einsum("ib,ra->abir", svd.v, u_pad.conj()).reshape(na * na, na * nb)
    return err.bilinear_moments(rows, nb, na).reshape(na, na, na, na)


def _pair_tensor(sigma_pad: np.ndarray, t4: np.ndarray) -> np.ndarray:
    """C[a, b, c, d] = E{c_ab c_cd}."""
    s = sigma_pad
    return (
        s[:, None, None, None] * s[None, None, None, :] * t4.transpose(0, 1, 3, 2)
        + s[None, :, None, None] * s[None, None, :, None] * np.conj(t4.transpose(1, 0, 2, 3))
    )


def compute_moments(svd: SvdPartition, err: CsiErrorModel) -> PerturbMoments:
    na, nb, f = svd.na, svd.nb, svd.f
    if na < nb:
        raise OrientationError(
            f"perturbation analysis needs N_a >= N_b, got {nb}x{na}: pass the transposed channel"
        )
    if svd.ill_conditioned:
        raise IllConditionedGapError(
            f"singular values {np.array2string(svd.sigma, precision=4)} are too close for a stable expansion"
        )
    err.check_dims(nb, na)

    v = svd.v
    sigma_pad = np.zeros(na)
    sigma_pad[:f] = svd.sigma
    lam = sigma_pad**2

    pair = _pair_tensor(sigma_pad, _bilinear_tensor(svd, err))
    # v_j^H E{dH^H dH} v_k
    gram = v.conj().T @ err.right_moment(np.eye(nb), na) @ v

    idx = np.arange(na)
    e_dv = np.zeros((na, f), dtype=complex)
    e_dsigma = np.zeros(f)
    e_dsigma_sq = np.zeros(f)
    for k in range(f):
        inv = np.zeros(na)
        others = idx != k
        inv[others] = 1.0 / (lam[k] - lam[others])

        leak = np.real(np.diagonal(pair[:, k, k, :]))  # E|c_jk|^2
        chain = np.einsum("jmm->jm", pair[:, :, :, k]) @ inv  # sum_m E{c_jm c_mk} / (l_k - l_m)
        cross = pair[k, k, :, k]  # E{c_kk c_jk}

        coef = inv * gram[:, k] + inv * chain - inv**2 * cross
        coef[k] = -0.5 * np.sum(inv**2 * leak)
        e_dv[:, k] = v @ coef

        s = svd.sigma[k]
        first_sq = np.real(pair[k, k, k, k])  # E{(v_k^H A1 v_k)^2}
        e_dlam = np.real(gram[k, k]) + np.sum(inv * leak)
        e_dsigma[k] = e_dlam / (2.0 * s) - first_sq / (8.0 * s**3)
        e_dsigma_sq[k] = first_sq / (4.0 * s**2)

    d = np.diag(1.0 / (svd.sigma_s**2 - svd.sigma_f**2))
    v_s, u_s, v_f = svd.v_s, svd.u_s, svd.v_f
    e_dv_s = e_dv[:, : f - 1]
    return PerturbMoments(
        d=d,
        g=err.left_moment(np.outer(v_f, v_f.conj()), nb),
        g_prime=err.left_moment(v_s @ d @ v_s.conj().T, nb),
        g_dprime=err.right_moment(u_s @ d @ u_s.conj().T, na),
        k=err.left_moment(v_s @ v_s.conj().T, nb),
        e_dv_s=e_dv_s,
        e_vs_dvs=v_s.conj().T @ e_dv_s,
        e_p1=v_f.conj() @ e_dv_s,
        e_dsigma_s=e_dsigma,
        e_dsigma1=float(e_dsigma[0]),
        e_dsigma1_sq=float(e_dsigma_sq[0]),
        e_dv1=e_dv[:, 0],
        e_v1_dv1=complex(np.vdot(svd.v_1, e_dv[:, 0])),
    )


def predict_naive_powers(svd: SvdPartition, moments: PerturbMoments, chan: ChannelSet, target_sinr: float) -> Tuple[float, float]:
    """Expected signal and interference-plus-noise power behind Bob's filter w_b = H_ba v_1."""
    s1 = svd.sigma_1
    power = chan.power_p
    rho = chan.sigma_b_sq * target_sinr / (s1**2 * power)
    leak = moments.leakage
    if rho >= 1.0:
        # outage: all power on data, no artificial noise, no power-split error
        rho, beta, upsilon = 1.0, 0.0, 0.0
    else:
        beta = (1.0 - rho) * power / (svd.na - 1) if svd.na > 1 else 0.0
        upsilon = 2.0 * moments.e_dsigma1 / s1 + moments.e_dsigma1_sq / s1**2
    signal = s1**4 * rho * power * (1.0 + leak - upsilon)
    interference = s1**2 * (-(s1**2) * beta * leak + chan.sigma_b_sq)
    if interference <= 0.0 or signal <= 0.0:
        raise ValidityRangeError(
            f"second-order prediction left its validity region (signal {signal:.3e}, interference {interference:.3e})"
        )
    return signal, interference


def predict_naive_sinr(svd: SvdPartition, moments: PerturbMoments, chan: ChannelSet, target_sinr: float) -> float:
    signal, interference = predict_naive_powers(svd, moments, chan, target_sinr)
    return signal / interference


def is_extrapolated(sigma_h_db: float) -> bool:
    return sigma_h_db > VALIDITY_LIMIT_DB


def naive_transmission(chan: ChannelSet, err_sample: ChannelMatrix, target_sinr: float) -> TxScheme:
    """Alice's artificial-noise design from her estimate H + dH."""
    h_tilde = chan.h_ba + err_sample
    return design_artificial_noise(chan.with_bob_channel(h_tilde), partition_svd(h_tilde), target_sinr)


def simulate_naive(chan: ChannelSet, err_sample: ChannelMatrix, target_sinr: float, svd: SvdPartition = None) -> SinrReport:
    """One draw of the naive scheme: Alice designs from H + dH, Bob keeps H v_1."""
    alice = naive_transmission(chan, err_sample, target_sinr)
    if svd is None:
        svd = partition_svd(chan.h_ba)
    w_b = RxBeamformer(w=chan.h_ba.entries @ svd.v_1, kind="matched")
    w_e = eve_mmse_beamformer(chan, alice)
    return evaluate_sinr(chan, alice, w_b, w_e)


def _pair_mean(samples: np.ndarray, draws: int, antithetic: bool):
    if antithetic:
        samples = 0.5 * (samples[:draws] + samples[draws:])
    return samples.mean(axis=0), samples.std(axis=0) / np.sqrt(samples.shape[0])


def monte_carlo_moments(h: ChannelMatrix, err: CsiErrorModel, draws: int, rng_seed: SeedLike, antithetic: bool = True) -> MonteCarloMoments:
    """Brute-force moment estimates from aligned perturbed SVDs.

    With antithetic=True every draw dH is paired with -dH, which cancels the
    first-order fluctuation of each sample without biasing the mean.
    """
    base = partition_svd(h)
    f = base.f
    dh = sample_csi_errors(err, h.rows, h.cols, draws, rng_seed)
    if antithetic:
        dh = np.concatenate([dh, -dh])
    _, s_t, vh_t = np.linalg.svd(h.entries[None] + dh, full_matrices=False)

    ref = base.v[:, :f].T[None]  # (1, F, N_a)
    v_t = align_to(ref, np.conj(vh_t[:, :f, :]))
    dv = v_t - ref
    dsigma = s_t[:, :f] - base.sigma

    e_dsigma, _ = _pair_mean(dsigma, draws, antithetic)
    e_d1, se_d1 = _pair_mean(dsigma[:, 0], draws, antithetic)
    e_d1sq, se_d1sq = _pair_mean(dsigma[:, 0] ** 2, draws, antithetic)
    e_dv, _ = _pair_mean(dv, draws, antithetic)
    e_dv1, se_dv1 = _pair_mean(dv[:, 0, :], draws, antithetic)
    proj = np.sum(np.conj(base.v_1) * dv[:, 0, :], axis=-1)
    e_proj, se_proj = _pair_mean(proj, draws, antithetic)

    e_dv_s = e_dv[: f - 1].T
    logging.debug(f"Monte Carlo moments from {draws} draws (antithetic={antithetic})")
    return MonteCarloMoments(
        draws=draws,
        e_dsigma_s=e_dsigma,
        e_dsigma1=float(e_d1),
        e_dsigma1_sq=float(e_d1sq),
        e_v1_dv1=complex(e_proj),
        e_dv1=e_dv1,
        e_dv_s=e_dv_s,
        e_vs_dvs=base.v_s.conj().T @ e_dv_s,
        stderr_dsigma1=float(se_d1),
        stderr_dsigma1_sq=float(se_d1sq),
        stderr_v1_dv1=float(se_proj),
        stderr_dv1=se_dv1,
    )
