import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import DegenerateChannelError, DimensionError, ParameterError
from src.util import SeedLike, apply_phase_convention, crandn, make_rng

RANK_TOL = 1e-10
GAP_TOL = 1e-8


class ChannelMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entries: np.ndarray

    @field_validator("entries", mode="before")
    @classmethod
    def _as_complex_matrix(cls, value):
        arr = np.array(value, dtype=complex)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"channel must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("channel entries must be finite")
        return arr

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def __add__(self, other: "ChannelMatrix") -> "ChannelMatrix":
        if self.entries.shape != other.entries.shape:
            raise DimensionError(f"cannot add {self.entries.shape} and {other.entries.shape} channels")
        return ChannelMatrix(entries=self.entries + other.entries)


class ChannelSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h_ba: ChannelMatrix
    h_ea: ChannelMatrix
    sigma_b_sq: float = Field(default=1.0, gt=0)
    sigma_e_sq: float = Field(default=1.0, gt=0)
    power_p: float = Field(default=100.0, gt=0)

    @model_validator(mode="after")
    def _same_transmitter(self):
        if self.h_ba.cols != self.h_ea.cols:
            raise ValueError(
                f"Bob and Eve channels must share the transmit dimension ({self.h_ba.cols} != {self.h_ea.cols})"
            )
        return self

    @property
    def na(self) -> int:
        return self.h_ba.cols

    @property
    def nb(self) -> int:
        return self.h_ba.rows

    @property
    def ne(self) -> int:
        return self.h_ea.rows

    def with_bob_channel(self, h_ba: ChannelMatrix) -> "ChannelSet":
        return ChannelSet(
            h_ba=h_ba,
            h_ea=self.h_ea,
            sigma_b_sq=self.sigma_b_sq,
            sigma_e_sq=self.sigma_e_sq,
            power_p=self.power_p,
        )


class SvdPartition(BaseModel):
    """Singular value decomposition of H_ba split into signal part (first F-1 triplets)
    and the weakest triplet (index F).

    u holds the F left vectors, sigma the F values (descending), v the full set of
    N_a right vectors, so columns F..N_a-1 of v span the null space of a fat channel.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    ill_conditioned: bool = False

    @property
    def f(self) -> int:
        return self.sigma.shape[0]

    @property
    def na(self) -> int:
        return self.v.shape[0]

    @property
    def nb(self) -> int:
        return self.u.shape[0]

    @property
    def u_s(self) -> np.ndarray:
        return self.u[:, : self.f - 1]

    @property
    def sigma_s(self) -> np.ndarray:
        return self.sigma[: self.f - 1]

    @property
    def v_s(self) -> np.ndarray:
        return self.v[:, : self.f - 1]

    @property
    def u_f(self) -> np.ndarray:
        return self.u[:, self.f - 1]

    @property
    def sigma_f(self) -> float:
        return float(self.sigma[self.f - 1])

    @property
    def v_f(self) -> np.ndarray:
        return self.v[:, self.f - 1]

    @property
    def sigma_1(self) -> float:
        return float(self.sigma[0])

    @property
    def u_1(self) -> np.ndarray:
        return self.u[:, 0]

    @property
    def v_1(self) -> np.ndarray:
        return self.v[:, 0]

    @property
    def t_prime(self) -> np.ndarray:
        # N_a - 1 right singular vectors with the smallest singular values
        return self.v[:, 1:]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v[:, : self.f].conj().T


class CsiErrorModel(BaseModel):
    """Covariance of vec(dH), columns stacked: index col * N_b + row.

    Either iid (sigma_h_sq * I, any dimensions) or a full Hermitian PSD matrix
    tied to a fixed (nb, na).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sigma_h_sq: Optional[float] = Field(default=None, ge=0)
    cov: Optional[np.ndarray] = None
    nb: Optional[int] = None
    na: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if (self.sigma_h_sq is None) == (self.cov is None):
            raise ValueError("give exactly one of sigma_h_sq or cov")
        if self.cov is not None:
            if self.nb is None or self.na is None:
                raise ValueError("a full covariance needs nb and na")
            n = self.nb * self.na
            if self.cov.shape != (n, n):
                raise ValueError(f"covariance must be {n}x{n}, got {self.cov.shape}")
            scale = max(np.linalg.norm(self.cov), 1.0)
            if np.linalg.norm(self.cov - self.cov.conj().T) > 1e-9 * scale:
                raise ValueError("covariance must be Hermitian")
            if np.linalg.eigvalsh((self.cov + self.cov.conj().T) / 2)[0] < -1e-9 * scale:
                raise ValueError("covariance must be positive semidefinite")
        return self

    @staticmethod
    def iid(sigma_h_sq: float) -> "CsiErrorModel":
        return CsiErrorModel(sigma_h_sq=sigma_h_sq)

    @staticmethod
    def full(cov, nb: int, na: int) -> "CsiErrorModel":
        return CsiErrorModel(cov=np.array(cov, dtype=complex), nb=nb, na=na)

    @property
    def is_iid(self) -> bool:
        return self.cov is None

    def scaled(self, alpha: float) -> "CsiErrorModel":
        if self.is_iid:
            return CsiErrorModel.iid(alpha * self.sigma_h_sq)
        return CsiErrorModel.full(alpha * self.cov, self.nb, self.na)

    def check_dims(self, nb: int, na: int) -> None:
        if not self.is_iid and (self.nb, self.na) != (nb, na):
            raise DimensionError(
                f"error covariance is for {self.nb}x{self.na} channels, got {nb}x{na}"
            )

    def covariance(self, nb: int, na: int) -> np.ndarray:
        self.check_dims(nb, na)
        if self.is_iid:
            return self.sigma_h_sq * np.eye(nb * na, dtype=complex)
        return self.cov

    def _blocks(self) -> np.ndarray:
        # C4[i, r, l, s] = E{dH[r, i] conj(dH[s, l])}
        return self.cov.reshape(self.na, self.nb, self.na, self.nb)

    def left_moment(self, a: np.ndarray, nb: int) -> np.ndarray:
        """E{dH A dH^H} for an N_a x N_a matrix A."""
        na = a.shape[0]
        self.check_dims(nb, na)
        if self.is_iid:
            return self.sigma_h_sq * np.trace(a) * np.eye(nb, dtype=complex)
        return np.einsum("il,irls->rs", a, self._blocks())

    def right_moment(self, b: np.ndarray, na: int) -> np.ndarray:
        """E{dH^H B dH} for an N_b x N_b matrix B."""
        nb = b.shape[0]
        self.check_dims(nb, na)
        if self.is_iid:
            return self.sigma_h_sq * np.trace(b) * np.eye(na, dtype=complex)
        return np.einsum("sr,lris->il", b, self._blocks())

    def bilinear_moments(self, rows: np.ndarray, nb: int, na: int) -> np.ndarray:
        """E{(r_p . vec dH) conj(r_q . vec dH)} for every pair of coefficient rows."""
        if self.is_iid:
            return self.sigma_h_sq * (rows @ rows.conj().T)
        return rows @ self.covariance(nb, na) @ rows.conj().T


def generate_channels(
    na: int,
    nb: int,
    ne: int,
    gamma_ea_sq: float = 1.0,
    rng_seed: SeedLike = 0,
    sigma_b_sq: float = 1.0,
    sigma_e_sq: float = 1.0,
    power_p: float = 100.0,
) -> ChannelSet:
    for name, value in (("na", na), ("nb", nb), ("ne", ne)):
        if int(value) != value or value < 1:
            raise DimensionError(f"{name} must be a positive integer, got {value}")
    if gamma_ea_sq <= 0:
        raise ParameterError(f"gamma_ea_sq must be positive, got {gamma_ea_sq}")
    rng = make_rng(rng_seed)
    h_ba = crandn(rng, (nb, na))
    h_ea = np.sqrt(gamma_ea_sq) * crandn(rng, (ne, na))
    return ChannelSet(
        h_ba=ChannelMatrix(entries=h_ba),
        h_ea=ChannelMatrix(entries=h_ea),
        sigma_b_sq=sigma_b_sq,
        sigma_e_sq=sigma_e_sq,
        power_p=power_p,
    )


def normalize_channel(h: ChannelMatrix) -> ChannelMatrix:
    """Scale to unit average gain, ||H||_F^2 / (rows * cols) = 1."""
    energy = np.linalg.norm(h.entries) ** 2
    if energy == 0.0:
        raise DegenerateChannelError("cannot normalize an all-zero channel")
    return ChannelMatrix(entries=h.entries * np.sqrt(h.rows * h.cols / energy))


def partition_svd(h: ChannelMatrix) -> SvdPartition:
    u, s, vh = np.linalg.svd(h.entries, full_matrices=True)
    f = min(h.rows, h.cols)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    u = u[:, order]
    v = vh.conj().T
    v[:, :f] = v[:, order]

    if s[0] == 0.0 or s[f - 1] < RANK_TOL * s[0]:
        raise DegenerateChannelError(
            f"channel is rank deficient (sigma_F / sigma_1 = {s[f - 1] / s[0] if s[0] else 0.0:.3e})"
        )

    v, u = apply_phase_convention(v, u)

    lam = s**2
    # moments of v_1 and V_s divide by every pairwise gap, not only the gaps to sigma_F
    ill = bool(f > 1 and np.min(lam[:-1] - lam[1:]) < GAP_TOL * lam[0])
    if ill:
        logging.warning(
            f"Near-repeated singular values {np.array2string(s, precision=4)}: gap matrix D is ill-conditioned"
        )
    return SvdPartition(u=u, sigma=s, v=v, ill_conditioned=ill)


def sample_csi_errors(model: CsiErrorModel, nb: int, na: int, count: int, rng_seed: SeedLike) -> np.ndarray:
    """count independent draws of dH, shape (count, nb, na)."""
    model.check_dims(nb, na)
    rng = make_rng(rng_seed)
    if model.is_iid:
        return np.sqrt(model.sigma_h_sq) * crandn(rng, (count, nb, na))
    w, q = np.linalg.eigh(model.cov)
    factor = q * np.sqrt(np.clip(w, 0.0, None))
    vec = crandn(rng, (count, nb * na)) @ factor.T
    return vec.reshape(count, na, nb).transpose(0, 2, 1)


def sample_csi_error(model: CsiErrorModel, nb: int, na: int, rng_seed: SeedLike) -> ChannelMatrix:
    return ChannelMatrix(entries=sample_csi_errors(model, nb, na, 1, rng_seed)[0])


def perturb_ecsi(h_ea: ChannelMatrix, gamma: float, rng_seed: SeedLike) -> ChannelMatrix:
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 0.0:
        return ChannelMatrix(entries=h_ea.entries.copy())
    w_ea = crandn(make_rng(rng_seed), h_ea.entries.shape)
    return ChannelMatrix(entries=np.sqrt(1.0 - gamma) * h_ea.entries + np.sqrt(gamma) * w_ea)
