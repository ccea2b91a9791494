import functools
import itertools
import logging
import subprocess
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Literal, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from src import __version__
from src.chanmodel import CsiErrorModel, generate_channels, partition_svd, perturb_ecsi, sample_csi_error
from src.errors import ConfigError, IllConditionedGapError, ValidityRangeError
from src.perturb import compute_moments, is_extrapolated, naive_transmission, predict_naive_powers
from src.robust import fdd_context, fdd_receiver, tdd_context, tdd_receiver
from src.txscheme import (
    RxBeamformer,
    bob_matched_beamformer,
    design_artificial_noise,
    design_known_ecsi,
    evaluate_sinr,
    eve_mmse_beamformer,
    secrecy_capacity_matrix,
)
from src.util import from_db, to_db, trial_seeds

Scheme = Literal["perfect", "known_ecsi", "imperfect_ecsi", "naive", "robust_fdd", "robust_tdd", "analytic_naive"]
Scenario = Literal["fig1_ne_sweep", "fig2_prediction", "fig3_sinr_vs_target", "fig4_secrecy", "fig5_sigma_sweep", "custom"]
AxisName = Literal["na", "nb", "ne", "target_sinr_db", "sigma_h_db"]

SWEEP_FIELDS = ("na", "nb", "ne", "target_sinr_db", "sigma_h_db")
AXIS_PREFERENCE = ("ne", "target_sinr_db", "sigma_h_db", "na", "nb")
MOMENT_SCHEMES = {"analytic_naive", "robust_tdd"}
# schemes that report Bob only
BOB_ONLY = {"analytic_naive"}

IntSweep = Union[int, List[int]]
FloatSweep = Union[float, List[float]]


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


class SweepPoint(BaseModel):
    na: int
    nb: int
    ne: int
    target_sinr_db: float
    sigma_h_db: float


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Scenario = "custom"
    na: IntSweep = 5
    nb: Optional[IntSweep] = None
    ne: Optional[IntSweep] = None
    target_sinr_db: FloatSweep = 20.0
    sigma_h_db: FloatSweep = -10.0
    gamma_ecsi: float = Field(default=0.05, ge=0, le=1)
    gamma_ea_sq: float = Field(default=1.0, gt=0)
    trials: int = 3000
    power_db: float = 20.0
    sigma_b_sq: float = Field(default=1.0, gt=0)
    sigma_e_sq: float = Field(default=1.0, gt=0)
    master_seed: int = 0
    schemes: List[Scheme] = ["perfect"]
    axis: Optional[AxisName] = None
    rho_policy: Literal["receiver", "transmitter"] = "transmitter"
    interference_via_estimate: bool = False
    secrecy_metric: Literal["proxy", "matrix"] = "proxy"
    known_ecsi_full_power: bool = False
    threads: int = Field(default=1, ge=1)

    @field_validator("trials")
    @classmethod
    def _positive_trials(cls, trials):
        if trials < 1:
            raise ValueError("trials must be ≥ 1")
        return trials

    @field_validator("na", "nb", "ne")
    @classmethod
    def _dimensions(cls, value):
        if value is None:
            return value
        values = _as_list(value)
        if not values:
            raise ValueError("sweep lists must be non-empty")
        if any(v < 1 for v in values):
            raise ValueError(f"antenna counts must be ≥ 1, got {values}")
        return value

    @field_validator("target_sinr_db", "sigma_h_db")
    @classmethod
    def _non_empty(cls, value):
        if not _as_list(value):
            raise ValueError("sweep lists must be non-empty")
        return value

    @field_validator("schemes")
    @classmethod
    def _unique_schemes(cls, schemes):
        if not schemes:
            raise ValueError("at least one scheme is required")
        return list(dict.fromkeys(schemes))

    @property
    def power_p(self) -> float:
        return float(from_db(self.power_db))

    def sweep_points(self) -> List[SweepPoint]:
        grids = [_as_list(getattr(self, name)) if getattr(self, name) is not None else [None] for name in SWEEP_FIELDS]
        points = []
        for na, nb, ne, s_db, h_db in itertools.product(*grids):
            points.append(
                SweepPoint(
                    na=na,
                    nb=na if nb is None else nb,
                    ne=na if ne is None else ne,
                    target_sinr_db=s_db,
                    sigma_h_db=h_db,
                )
            )
        return points

    def axis_name(self) -> str:
        if self.axis is not None:
            return self.axis
        for name in AXIS_PREFERENCE:
            value = getattr(self, name)
            if value is not None and len(_as_list(value)) > 1:
                return name
        return "target_sinr_db"


def preset_config(figure: int, **overrides) -> ExperimentConfig:
    presets = {
        1: dict(
            scenario="fig1_ne_sweep",
            na=[4, 8],
            ne=list(range(1, 21)),
            target_sinr_db=20.0,
            schemes=["perfect", "known_ecsi", "imperfect_ecsi"],
        ),
        2: dict(
            scenario="fig2_prediction",
            na=[2, 5],
            target_sinr_db=20.0,
            sigma_h_db=[-30.0, -25.0, -20.0, -15.0, -10.0, -5.0],
            schemes=["naive", "analytic_naive"],
        ),
        3: dict(
            scenario="fig3_sinr_vs_target",
            na=5,
            sigma_h_db=-10.0,
            target_sinr_db=[0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            schemes=["perfect", "naive", "robust_fdd", "robust_tdd"],
        ),
        4: dict(
            scenario="fig4_secrecy",
            na=5,
            sigma_h_db=-10.0,
            target_sinr_db=[0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            schemes=["perfect", "known_ecsi", "naive", "robust_fdd", "robust_tdd"],
        ),
        5: dict(
            scenario="fig5_sigma_sweep",
            na=5,
            target_sinr_db=20.0,
            sigma_h_db=[-30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0],
            schemes=["perfect", "naive", "robust_fdd", "robust_tdd"],
        ),
    }
    if figure not in presets:
        raise ConfigError(f"unknown figure {figure}, choose one of {sorted(presets)}")
    settings = dict(trials=3000, power_db=20.0, sigma_b_sq=1.0, sigma_e_sq=1.0, gamma_ecsi=0.05)
    settings.update(presets[figure])
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**settings)


class SchemeSample(NamedTuple):
    sinr_b: float
    sinr_e: float
    secrecy: float
    outage: bool
    bob_signal: float
    bob_interference: float
    loaded: bool = False

    @staticmethod
    def skipped() -> "SchemeSample":
        nan = float("nan")
        return SchemeSample(nan, nan, nan, False, nan, nan)


class _Trial:
    """Lazily shared draws for one trial at one sweep point, so every scheme sees the same channels."""

    def __init__(self, cfg: ExperimentConfig, point: SweepPoint, trial_index: int):
        self.cfg = cfg
        self.point = point
        self.target = float(from_db(point.target_sinr_db))
        self.sigma_h_sq = float(from_db(point.sigma_h_db))
        chan_seed, self.err_seed, self.ecsi_seed = trial_seeds(cfg.master_seed, trial_index)
        self.chan = generate_channels(
            point.na,
            point.nb,
            point.ne,
            cfg.gamma_ea_sq,
            chan_seed,
            sigma_b_sq=cfg.sigma_b_sq,
            sigma_e_sq=cfg.sigma_e_sq,
            power_p=cfg.power_p,
        )
        self.svd = partition_svd(self.chan.h_ba)

    @functools.cached_property
    def err_model(self) -> CsiErrorModel:
        return CsiErrorModel.iid(self.sigma_h_sq)

    @functools.cached_property
    def err_sample(self):
        return sample_csi_error(self.err_model, self.point.nb, self.point.na, self.err_seed)

    @functools.cached_property
    def moments(self):
        return compute_moments(self.svd, self.err_model)

    def _secrecy(self, report, scheme) -> float:
        if self.cfg.secrecy_metric == "matrix":
            return secrecy_capacity_matrix(self.chan, scheme)
        return report.secrecy_capacity

    def _sample(self, report, scheme) -> SchemeSample:
        return SchemeSample(
            report.sinr_b,
            report.sinr_e,
            self._secrecy(report, scheme),
            report.outage,
            report.bob_signal,
            report.bob_interference,
            report.loaded,
        )

    def _with_receivers(self, scheme, w_b: RxBeamformer = None) -> SchemeSample:
        w_b = w_b or bob_matched_beamformer(self.chan, scheme)
        report = evaluate_sinr(self.chan, scheme, w_b, eve_mmse_beamformer(self.chan, scheme))
        return self._sample(report, scheme)

    def perfect(self) -> SchemeSample:
        return self._with_receivers(design_artificial_noise(self.chan, self.svd, self.target))

    def known_ecsi(self) -> SchemeSample:
        scheme = design_known_ecsi(self.chan, self.chan.h_ea, self.target, self.cfg.known_ecsi_full_power)
        return self._with_receivers(scheme)

    def imperfect_ecsi(self) -> SchemeSample:
        # Alice designs against the blended estimate, Eve listens on the true channel
        h_ea_tilde = perturb_ecsi(self.chan.h_ea, self.cfg.gamma_ecsi, self.ecsi_seed)
        scheme = design_known_ecsi(self.chan, h_ea_tilde, self.target, self.cfg.known_ecsi_full_power)
        return self._with_receivers(scheme)

    def naive(self) -> SchemeSample:
        scheme = naive_transmission(self.chan, self.err_sample, self.target)
        w_b = RxBeamformer(w=self.chan.h_ba.entries @ self.svd.v_1, kind="matched")
        return self._with_receivers(scheme, w_b)

    def robust_fdd(self) -> SchemeSample:
        h_tilde = self.chan.h_ba + self.err_sample
        args = (self.chan, h_tilde, self.target, self.cfg.rho_policy, self.cfg.interference_via_estimate)
        _, report = fdd_receiver(*args)
        scheme = fdd_context(*args)[1] if self.cfg.secrecy_metric == "matrix" else None
        return self._sample(report, scheme)

    def robust_tdd(self) -> SchemeSample:
        try:
            args = (self.chan, self.svd, self.moments, self.err_sample, self.target, self.cfg.rho_policy)
        except IllConditionedGapError as exc:
            logging.warning(f"robust_tdd skipped a trial: {exc}")
            return SchemeSample.skipped()
        _, report = tdd_receiver(*args)
        scheme = tdd_context(*args)[1] if self.cfg.secrecy_metric == "matrix" else None
        return self._sample(report, scheme)

    def analytic_naive(self) -> SchemeSample:
        try:
            signal, interference = predict_naive_powers(self.svd, self.moments, self.chan, self.target)
        except (IllConditionedGapError, ValidityRangeError) as exc:
            logging.warning(f"analytic_naive skipped a trial: {exc}")
            return SchemeSample.skipped()
        nan = float("nan")
        sinr = signal / interference
        return SchemeSample(sinr, nan, nan, False, signal, interference)


def _run_trial(cfg: ExperimentConfig, points: List[SweepPoint], trial_index: int) -> List[Dict[str, SchemeSample]]:
    results = []
    for point in points:
        trial = _Trial(cfg, point, trial_index)
        results.append({scheme: getattr(trial, scheme)() for scheme in cfg.schemes})
    return results


class SchemeSeries(BaseModel):
    sinr_b_mean: List[float]
    sinr_b_db: List[float]
    sinr_b_stderr_db: List[float]
    sinr_b_roe_db: List[float]
    sinr_e_mean: Optional[List[float]] = None
    sinr_e_db: Optional[List[float]] = None
    sinr_e_stderr_db: Optional[List[float]] = None
    secrecy_mean: Optional[List[float]] = None
    secrecy_stderr: Optional[List[float]] = None
    outage_count: List[int]
    skipped_count: List[int]
    loaded_count: List[int]


class RunMetadata(BaseModel):
    config: ExperimentConfig
    master_seed: int
    version: str


class SweepResult(BaseModel):
    axis_name: str
    axis: List[float]
    points: List[SweepPoint]
    series: Dict[str, SchemeSeries]
    extrapolated: List[bool]
    metadata: RunMetadata

    @model_validator(mode="after")
    def _aligned(self):
        n = len(self.axis)
        if len(self.points) != n or len(self.extrapolated) != n:
            raise ValueError("sweep metadata must match the axis length")
        for name, series in self.series.items():
            if len(series.sinr_b_mean) != n:
                raise ValueError(f"series {name} does not match the axis length")
        return self


def describe_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = out.stdout.strip()
    return f"{__version__}+{described}" if out.returncode == 0 and described else __version__


def _mean_and_stderr(values: np.ndarray):
    valid = values[~np.isnan(values)]
    if valid.size == 0:
        return float("nan"), float("nan")
    mean = float(valid.mean())
    stderr = float(valid.std(ddof=1) / np.sqrt(valid.size)) if valid.size > 1 else 0.0
    return mean, stderr


def _stderr_db(mean: float, stderr: float) -> float:
    # delta method on 10 log10(x)
    if not mean > 0.0:
        return 0.0
    return float(10.0 / np.log(10.0) * stderr / mean)


def _summarize(samples: List[SchemeSample], bob_only: bool) -> dict:
    cols = np.array([s[:6] for s in samples], dtype=float)
    sinr_b, sinr_e, secrecy, outage, signal, interference = cols.T
    mean_b, se_b = _mean_and_stderr(sinr_b)
    summary = dict(
        sinr_b_mean=mean_b,
        sinr_b_db=float(to_db(mean_b)),
        sinr_b_stderr_db=_stderr_db(mean_b, se_b),
        sinr_b_roe_db=float(to_db(np.nanmean(signal) / np.nanmean(interference))) if not np.all(np.isnan(signal)) else float("nan"),
        outage_count=int(np.sum(outage)),
        skipped_count=int(np.sum(np.isnan(sinr_b))),
        loaded_count=int(sum(s.loaded for s in samples)),
    )
    if not bob_only:
        mean_e, se_e = _mean_and_stderr(sinr_e)
        mean_s, se_s = _mean_and_stderr(secrecy)
        summary.update(
            sinr_e_mean=mean_e,
            sinr_e_db=float(to_db(mean_e)),
            sinr_e_stderr_db=_stderr_db(mean_e, se_e),
            secrecy_mean=mean_s,
            secrecy_stderr=se_s,
        )
    return summary


def _check_requirements(cfg: ExperimentConfig, points: List[SweepPoint]) -> None:
    needs_moments = MOMENT_SCHEMES.intersection(cfg.schemes)
    for point in points:
        if needs_moments and point.nb > point.na:
            raise ConfigError(
                f"{sorted(needs_moments)} need N_a >= N_b (got N_b={point.nb}, N_a={point.na}); run the transposed scenario"
            )


def run_experiment(cfg: ExperimentConfig, progress: bool = True) -> SweepResult:
    points = cfg.sweep_points()
    _check_requirements(cfg, points)
    axis_name = cfg.axis_name()
    logging.info(
        f"Running {cfg.scenario}: {len(points)} sweep points x {cfg.trials} trials, schemes {', '.join(cfg.schemes)}"
    )

    worker = functools.partial(_run_trial, cfg, points)
    trials = range(cfg.trials)
    if cfg.threads > 1:
        with Pool(cfg.threads) as pool:
            # imap keeps trial-index order, so the reduction is independent of worker count
            collected = list(
                tqdm(pool.imap(worker, trials, chunksize=max(1, cfg.trials // (8 * cfg.threads))), total=cfg.trials, disable=not progress)
            )
    else:
        collected = [worker(i) for i in tqdm(trials, total=cfg.trials, disable=not progress)]

    per_scheme = {scheme: {} for scheme in cfg.schemes}
    for p_idx, point in enumerate(points):
        for scheme in cfg.schemes:
            summary = _summarize([trial[p_idx][scheme] for trial in collected], scheme in BOB_ONLY)
            for key, value in summary.items():
                per_scheme[scheme].setdefault(key, []).append(value)
            if summary["outage_count"]:
                logging.info(f"{scheme} @ {getattr(point, axis_name)}: {summary['outage_count']} outage trials")
            if summary["loaded_count"]:
                logging.warning(f"{scheme} @ {getattr(point, axis_name)}: diagonal loading in {summary['loaded_count']} trials")

    return SweepResult(
        axis_name=axis_name,
        axis=[float(getattr(p, axis_name)) for p in points],
        points=points,
        series={scheme: SchemeSeries(**values) for scheme, values in per_scheme.items()},
        extrapolated=[is_extrapolated(p.sigma_h_db) for p in points],
        metadata=RunMetadata(config=cfg, master_seed=cfg.master_seed, version=describe_version()),
    )


def run_prediction_comparison(cfg: ExperimentConfig, progress: bool = True) -> SweepResult:
    if cfg.scenario not in ("fig2_prediction", "custom"):
        raise ConfigError(f"prediction comparison needs the fig2_prediction scenario, got {cfg.scenario}")
    missing = {"naive", "analytic_naive"} - set(cfg.schemes)
    if missing:
        raise ConfigError(f"prediction comparison needs schemes {sorted(missing)}")
    return run_experiment(cfg, progress)


def run_ecsi_comparison(cfg: ExperimentConfig, progress: bool = True) -> SweepResult:
    if cfg.scenario not in ("fig1_ne_sweep", "custom"):
        raise ConfigError(f"ECSI comparison needs the fig1_ne_sweep scenario, got {cfg.scenario}")
    missing = {"perfect", "known_ecsi", "imperfect_ecsi"} - set(cfg.schemes)
    if missing:
        raise ConfigError(f"ECSI comparison needs schemes {sorted(missing)}")
    return run_experiment(cfg, progress)


def run_scenario(cfg: ExperimentConfig, progress: bool = True) -> SweepResult:
    if cfg.scenario == "fig1_ne_sweep":
        return run_ecsi_comparison(cfg, progress)
    if cfg.scenario == "fig2_prediction":
        return run_prediction_comparison(cfg, progress)
    return run_experiment(cfg, progress)
