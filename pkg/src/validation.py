import logging
from typing import Callable, List, NamedTuple

import numpy as np

from src.chanmodel import ChannelMatrix, CsiErrorModel, generate_channels, partition_svd, perturb_ecsi
from src.errors import CheckFailedError, WiretapError
from src.perturb import compute_moments, monte_carlo_moments, predict_naive_sinr
from src.robust import fdd_receiver, tdd_receiver
from src.txscheme import bob_matched_beamformer, design_artificial_noise, evaluate_sinr, eve_mmse_beamformer
from src.util import Colors, from_db, to_db


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailedError(message)


def _perfect_csi(seed: int, count: int = 200) -> str:
    worst_sinr = 0.0
    worst_power = 0.0
    for i in range(count):
        n = (2, 4, 5, 8)[i % 4]
        target = from_db((10.0, 20.0)[i % 2])
        chan = generate_channels(n, n, n, rng_seed=np.random.SeedSequence(seed, spawn_key=(i,)))
        scheme = design_artificial_noise(chan, partition_svd(chan.h_ba), target)
        used = scheme.rho * scheme.power_p + np.trace(scheme.q_z).real + scheme.idle_power
        worst_power = max(worst_power, abs(used - chan.power_p) / chan.power_p)
        if scheme.outage:
            continue
        report = evaluate_sinr(chan, scheme, bob_matched_beamformer(chan, scheme), eve_mmse_beamformer(chan, scheme))
        worst_sinr = max(worst_sinr, abs(report.sinr_b - target) / target)
    _check(worst_sinr <= 1e-9, f"SINR_b off target by {worst_sinr:.2e} relative")
    _check(worst_power <= 1e-9, f"power budget off by {worst_power:.2e} relative")
    return f"{count} channels, worst SINR error {worst_sinr:.1e}"


def _orthogonality(seed: int, count: int = 100) -> str:
    worst = 0.0
    for i in range(count):
        chan = generate_channels(5, 5, 5, rng_seed=np.random.SeedSequence(seed, spawn_key=(i,)))
        scheme = design_artificial_noise(chan, partition_svd(chan.h_ba), from_db(20.0))
        h = chan.h_ba.entries
        leaked = scheme.interference_power(h.conj().T @ (h @ scheme.t))
        signal = scheme.rho * scheme.power_p * abs(np.vdot(h @ scheme.t, h @ scheme.t)) ** 2
        worst = max(worst, leaked / signal)
    _check(worst <= 1e-18, f"artificial noise reaches Bob's matched filter at {worst:.2e} of the signal")
    return f"worst leakage ratio {worst:.1e}"


def _zero_perturbation(seed: int) -> str:
    target = from_db(20.0)
    chan = generate_channels(5, 5, 5, rng_seed=seed)
    svd = partition_svd(chan.h_ba)
    moments = compute_moments(svd, CsiErrorModel.iid(0.0))
    predicted = predict_naive_sinr(svd, moments, chan, target)
    _check(abs(predicted - target) <= 1e-12 * target, f"prediction {to_db(predicted):.6f} dB")
    zero = ChannelMatrix(entries=np.zeros((chan.nb, chan.na)))
    _, fdd = fdd_receiver(chan, chan.h_ba + zero, target)
    _, tdd = tdd_receiver(chan, svd, moments, zero, target)
    for name, report in (("FDD", fdd), ("TDD", tdd)):
        _check(abs(report.sinr_b - target) <= 1e-9 * target, f"{name} receiver gives {to_db(report.sinr_b):.6f} dB")
    return "prediction and both robust receivers return the target"


def _ecsi_identity(seed: int) -> str:
    chan = generate_channels(4, 4, 3, rng_seed=seed)
    blended = perturb_ecsi(chan.h_ea, 0.0, seed)
    _check(np.array_equal(blended.entries, chan.h_ea.entries), "gamma = 0 changed the channel")
    return "gamma = 0 leaves H_ea unchanged"


def _edge_paths(seed: int) -> str:
    chan = generate_channels(1, 1, 1, rng_seed=seed)
    single = design_artificial_noise(chan, partition_svd(chan.h_ba), from_db(5.0))
    _check(single.q_z.shape == (1, 1) and not np.any(single.q_z), "N_a = 1 must carry no artificial noise")
    chan = generate_channels(4, 4, 4, rng_seed=seed)
    outage = design_artificial_noise(chan, partition_svd(chan.h_ba), from_db(80.0))
    _check(outage.outage and outage.rho == 1.0, "unreachable target must trigger the outage rule")
    return "N_a = 1 and outage paths ran"


def _moment_oracle(seed: int, draws: int = 20000) -> str:
    h = ChannelMatrix(entries=np.diag([3.0, 1.5, 0.7]).astype(complex))
    err = CsiErrorModel.iid(from_db(-20.0))
    moments = compute_moments(partition_svd(h), err)
    mc = monte_carlo_moments(h, err, draws, seed)
    checks = (
        ("E{dsigma_1}", moments.e_dsigma1, mc.e_dsigma1, mc.stderr_dsigma1),
        ("E{dsigma_1^2}", moments.e_dsigma1_sq, mc.e_dsigma1_sq, mc.stderr_dsigma1_sq),
        ("v_1^H E{dv_1}", moments.e_v1_dv1.real, mc.e_v1_dv1.real, mc.stderr_v1_dv1),
    )
    for name, analytic, measured, stderr in checks:
        tol = max(0.1 * abs(measured), 1e-4, 5.0 * stderr)
        _check(abs(analytic - measured) <= tol, f"{name}: analytic {analytic:.4e}, Monte Carlo {measured:.4e}")
    return f"{draws} antithetic pairs agree"


CHECKS: List[tuple] = [
    ("perfect CSI exactness and power budget", _perfect_csi),
    ("artificial noise orthogonal to Bob", _orthogonality),
    ("zero perturbation reduces to perfect CSI", _zero_perturbation),
    ("gamma = 0 ECSI identity", _ecsi_identity),
    ("N_a = 1 and outage paths", _edge_paths),
    ("second-order moments against Monte Carlo", _moment_oracle),
]


def run_check(name: str, check: Callable[[int], str], seed: int) -> CheckResult:
    try:
        return CheckResult(name, True, check(seed))
    except (WiretapError, ValueError) as exc:
        return CheckResult(name, False, str(exc))


def run_validation(seed: int = 0) -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        result = run_check(name, check, seed)
        tag = Colors.colorize("PASS", Colors.GREEN) if result.passed else Colors.colorize("FAIL", Colors.RED)
        print(f"{tag} {name}: {result.detail}")
        if not result.passed:
            logging.warning(f"Validation check failed: {name}")
        results.append(result)
    return results
