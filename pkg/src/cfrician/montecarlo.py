"""Monte Carlo oracle for every expectation in the UL/DL SINRs.

Realizations are drawn block by block through the same sampling and
estimation code used everywhere else; nothing here touches a closed form
except the deterministic precoder scaling and combining weights, which
are part of the transceiver definition rather than quantities to check.

Trials are split into equal batches. Batch ``i`` draws from its own
stream ``SeedSequence(seed, spawn_key=(purpose, i))``, so results do not
depend on how batches are scheduled across threads. Standard errors of
nonlinear statistics (SINR ratios) come from a leave-one-batch-out
jackknife.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    Estimator,
    EstimatorStatistics,
    FrameConfig,
    PilotAssignment,
    PowerConfig,
    compute_statistics,
    estimate,
    receive_pilots,
    sample_channel,
)
from .downlink import COHERENT, NONCOHERENT, dl_power_allocation, dl_sinr
from .errors import ConfigError, DegenerateError
from .geometry import NetworkInstance
from .uplink import optimal_lsfd, ul_moments, ul_sinr_all

__all__ = [
    "McEstimate",
    "McMoments",
    "ValidationResult",
    "batch_rng",
    "jackknife",
    "mc_ul_moments",
    "mc_ul_sinr",
    "mc_ul_sinr_weighted",
    "mc_dl_sinr",
    "mc_estimator_mse",
    "validate",
    "validate_instance",
]

# Stream purposes; part of the determinism contract.
PURPOSE_MOMENTS = 1
PURPOSE_MSE = 2

DEFAULT_BATCHES = 100
# Cap on trial-by-AP-by-UE-pair elements materialized at once.
CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    trials: int


@dataclass(frozen=True)
class ValidationResult:
    name: str
    closed_form: float
    mc_value: float
    std_error: float
    z: float
    passed: bool

    @property
    def z_score(self) -> float:
        if self.std_error > 0:
            return abs(self.closed_form - self.mc_value) / self.std_error
        return 0.0 if self.closed_form == self.mc_value else math.inf


def batch_rng(seed: int, purpose: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, batch)))


def jackknife(batches: dict, statistic) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-batch-out jackknife of ``statistic(means)``.

    Parameters
    ----------
    batches : dict of arrays
        Per-batch means, each with the batch index as leading axis (equal
        batch sizes assumed).
    statistic : callable
        Maps a dict of pooled means to an array.

    Returns
    -------
    value, std_error : ndarray
    """
    B = len(next(iter(batches.values())))
    full = {k: v.mean(axis=0) for k, v in batches.items()}
    value = np.asarray(statistic(full))
    if B < 2:
        return value, np.full(value.shape, np.nan)
    loo = []
    for i in range(B):
        held = {k: (B * full[k] - v[i]) / (B - 1) for k, v in batches.items()}
        loo.append(np.asarray(statistic(held)))
    loo = np.stack(loo)
    se = np.sqrt((B - 1) / B * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return value, se


@dataclass(frozen=True, eq=False)
class McMoments:
    """Per-batch sample means of the per-AP products ``x = conj(v_k) h_l``.

    Arrays carry the batch index first: ``mean`` (B, K, K, M) complex,
    ``second`` (B, K, K, M), ``self_power`` (B, K, M) and optionally
    ``gram`` (B, K, K, M, M) holding ``E{x x^H}``.  ``projected`` holds
    the weighted sums requested through ``weights``.
    """

    estimator: Estimator
    trials: int
    mean: np.ndarray
    second: np.ndarray
    self_power: np.ndarray
    gram: np.ndarray | None = None
    projected: dict = field(default_factory=dict)

    @property
    def num_batches(self) -> int:
        return self.mean.shape[0]

    def pooled(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        return value.mean(axis=0)

    def std_error(self, name: str) -> np.ndarray:
        """Standard error of a pooled mean from the batch-to-batch spread."""
        value = getattr(self, name)
        B = value.shape[0]
        if B < 2:
            return np.full(value.shape[1:], np.nan)
        return value.std(axis=0, ddof=1) / np.sqrt(B)

    def gamma1(self, k: int, l: int) -> np.ndarray:
        """Pooled, Hermitian-symmetrized ``E{x x^H}`` for the pair (k, l)."""
        if self.gram is None:
            raise ValueError("Gram matrices were not collected")
        g = self.gram[:, k, l].mean(axis=0)
        return 0.5 * (g + g.conj().T)


def _split_trials(trials: int, batches: int):
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    batches = max(1, min(int(batches), int(trials)))
    per_batch = math.ceil(trials / batches)
    return batches, per_batch


def _simulate_batch(net, assign, powers, frame, stats, estimator, rng, n, weights, gram):
    """Accumulate the per-AP products over ``n`` blocks from ``rng``."""
    M, K = net.los_mean.shape
    chunk = max(1, CHUNK_ELEMENTS // (M * K * K))
    acc = {
        "mean": np.zeros((K, K, M), complex),
        "second": np.zeros((K, K, M)),
        "self_power": np.zeros((K, M)),
    }
    if gram:
        acc["gram"] = np.zeros((K, K, M, M), complex)
    for name in weights:
        acc[f"{name}:amp"] = np.zeros((K, K), complex)
        acc[f"{name}:power"] = np.zeros((K, K))
        acc[f"{name}:self"] = np.zeros(K)
    done = 0
    while done < n:
        size = min(chunk, n - done)
        real = sample_channel(net, rng, size=(size,))
        real = real.with_pilots(receive_pilots(real, assign, powers, frame, rng))
        v = estimate(real, stats, estimator)
        # x[t, k, l, m] = conj(v[t, m, k]) * h[t, m, l]
        x = np.conj(v).transpose(0, 2, 1)[:, :, None, :] * real.h.transpose(0, 2, 1)[:, None, :, :]
        acc["mean"] += x.sum(axis=0)
        acc["second"] += (np.abs(x) ** 2).sum(axis=0)
        vpow = (np.abs(v) ** 2).transpose(0, 2, 1)
        acc["self_power"] += vpow.sum(axis=0)
        if gram:
            acc["gram"] += np.einsum("tklm,tklp->klmp", x, np.conj(x))
        for name, w in weights.items():
            # s[t, k, l] = sum_m conj(w[k, m]) x[t, k, l, m]
            s = np.einsum("km,tklm->tkl", np.conj(w), x)
            acc[f"{name}:amp"] += s.sum(axis=0)
            acc[f"{name}:power"] += (np.abs(s) ** 2).sum(axis=0)
            acc[f"{name}:self"] += (vpow * np.abs(w) ** 2).sum(axis=(0, 2))
        done += size
    return {k: v / n for k, v in acc.items()}


def _run_batches(net, assign, powers, frame, estimator, trials, seed, batches, weights=None, gram=False, workers=1, purpose=PURPOSE_MOMENTS):
    estimator = Estimator(estimator)
    weights = {} if weights is None else weights
    batches, per_batch = _split_trials(trials, batches)
    stats = compute_statistics(net, assign, powers, frame)

    def one(i):
        return _simulate_batch(net, assign, powers, frame, stats, estimator, batch_rng(seed, purpose, i), per_batch, weights, gram)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(batches)))
    else:
        results = [one(i) for i in range(batches)]
    stacked = {k: np.stack([r[k] for r in results]) for k in results[0]}
    return stacked, batches * per_batch


def mc_ul_moments(
    net: NetworkInstance,
    assign: PilotAssignment,
    powers: PowerConfig,
    frame: FrameConfig,
    estimator,
    trials: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
    gram: bool = True,
    weights: dict | None = None,
    workers: int = 1,
) -> McMoments:
    """Sample the per-AP moments of ``conj(v_{m,k}) h_{m,l}``.

    ``weights`` maps a label to a (K, M) matrix of per-UE combining or
    precoding weights; for each, the batch means of the weighted sums
    ``s_kl = sum_m conj(w_km) x_klm``, of ``|s_kl|^2`` and of
    ``sum_m |w_km v_mk|^2`` are stored under ``projected[label]``.
    """
    stacked, n = _run_batches(net, assign, powers, frame, estimator, trials, seed, batches, weights, gram, workers)
    projected = {}
    for name in weights or {}:
        projected[name] = {part: stacked.pop(f"{name}:{part}") for part in ("amp", "power", "self")}
    return McMoments(
        estimator=Estimator(estimator),
        trials=n,
        mean=stacked["mean"],
        second=stacked["second"],
        self_power=stacked["self_power"],
        gram=stacked.get("gram"),
        projected=projected,
    )


def _ul_ratio(signal_amp, power, self_term, ul_power, noise, k):
    num = ul_power[k] * np.abs(signal_amp) ** 2
    den = np.dot(ul_power, power) - num + noise * self_term
    if not den > 0:
        raise DegenerateError(f"empirical UL SINR denominator of UE {k} is {den}")
    return num / den


def mc_ul_sinr(moments: McMoments, k: int, a, ul_power, noise: float) -> McEstimate:
    """Plug the empirical Gram matrices into the UL SINR quotient for weights ``a``."""
    if moments.gram is None:
        raise ValueError("mc_ul_sinr needs Gram matrices; use mc_ul_sinr_weighted otherwise")
    a = np.asarray(a, dtype=complex)
    ul_power = np.asarray(ul_power, dtype=float)
    batches = {
        "amp": np.einsum("m,blm->bl", np.conj(a), moments.mean[:, k]),
        "power": np.real(np.einsum("m,blmp,p->bl", np.conj(a), moments.gram[:, k], a)),
        "self": np.einsum("m,bm->b", np.abs(a) ** 2, moments.self_power[:, k]),
    }

    def statistic(mu):
        return _ul_ratio(mu["amp"][k], mu["power"], mu["self"], ul_power, noise, k)

    value, se = jackknife(batches, statistic)
    return McEstimate(float(value), float(se), moments.trials)


def mc_ul_sinr_weighted(moments: McMoments, label: str, ul_power, noise: float) -> list[McEstimate]:
    """UL SINR of every UE from the weighted sums stored under ``label``."""
    proj = moments.projected[label]
    ul_power = np.asarray(ul_power, dtype=float)
    K = len(ul_power)

    def statistic(mu):
        return np.array([_ul_ratio(mu["amp"][k, k], mu["power"][k], mu["self"][k], ul_power, noise, k) for k in range(K)])

    value, se = jackknife(proj, statistic)
    return [McEstimate(float(v), float(s), moments.trials) for v, s in zip(value, se)]


def _dl_coherent_statistic(mu, noise):
    amp, power = mu["amp"], mu["power"]  # [l, k]: precoder of UE l, channel of UE k
    signal = np.abs(np.diagonal(amp)) ** 2
    den = power.sum(axis=0) - signal + noise
    return signal / den


def _dl_noncoherent_statistic(mu, rho_over_norm, noise):
    # Per-AP stream powers with the unit-power precoder h_hat / sqrt(E|h_hat|^2).
    K = rho_over_norm.shape[0]
    idx = np.arange(K)
    signal = np.sum(rho_over_norm * np.abs(mu["mean"][idx, idx]) ** 2, axis=1)
    total = np.einsum("lm,lkm->k", rho_over_norm, mu["second"])
    return signal / (total - signal + noise)


def mc_dl_sinr(
    net: NetworkInstance,
    assign: PilotAssignment,
    powers: PowerConfig,
    frame: FrameConfig,
    estimator,
    mode: str,
    trials: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
    moments: McMoments | None = None,
) -> list[McEstimate]:
    """Empirical DL SINR per UE for coherent or non-coherent MR precoding.

    Pass ``moments`` from :func:`mc_ul_moments` (with the ``"dl"`` weights
    for coherent mode) to reuse realizations.
    """
    estimator = Estimator(estimator)
    stats = compute_statistics(net, assign, powers, frame)
    alloc = dl_power_allocation(stats, powers.dl_total_power, estimator, mode)
    if moments is None:
        weights = {"dl": np.sqrt(alloc.scaling.T)} if mode == COHERENT else None
        moments = mc_ul_moments(net, assign, powers, frame, estimator, trials, seed, batches, gram=False, weights=weights)
    if mode == COHERENT:
        value, se = jackknife(moments.projected["dl"], lambda mu: _dl_coherent_statistic(mu, powers.noise_dl))
    elif mode == NONCOHERENT:
        ratio = (alloc.scaling / stats.estimate_power(estimator)).T
        data = {"mean": moments.mean, "second": moments.second}
        value, se = jackknife(data, lambda mu: _dl_noncoherent_statistic(mu, ratio, powers.noise_dl))
    else:
        raise ConfigError(f"unknown DL mode {mode!r}")
    return [McEstimate(float(v), float(s), moments.trials) for v, s in zip(value, se)]


def mc_estimator_mse(
    net: NetworkInstance,
    assign: PilotAssignment,
    powers: PowerConfig,
    frame: FrameConfig,
    estimator,
    trials: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
):
    """Empirical ``E{|h - h_hat|^2}`` per link.

    Returns
    -------
    value, std_error : (M, K) arrays
        ``std_error`` is the direct sample standard deviation over
        ``sqrt(trials)``.
    jackknife_se : (M, K) array
        Batch-means standard error of the same quantity.
    """
    estimator = Estimator(estimator)
    batches, per_batch = _split_trials(trials, batches)
    stats = compute_statistics(net, assign, powers, frame)
    shape = net.los_mean.shape
    total = np.zeros(shape)
    total_sq = np.zeros(shape)
    batch_means = []
    for i in range(batches):
        rng = batch_rng(seed, PURPOSE_MSE, i)
        real = sample_channel(net, rng, size=(per_batch,))
        real = real.with_pilots(receive_pilots(real, assign, powers, frame, rng))
        err = np.abs(real.h - estimate(real, stats, estimator)) ** 2
        total += err.sum(axis=0)
        total_sq += (err**2).sum(axis=0)
        batch_means.append(err.mean(axis=0))
    n = batches * per_batch
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0) * n / max(n - 1, 1)
    batch_means = np.stack(batch_means)
    jk = batch_means.std(axis=0, ddof=1) / np.sqrt(batches) if batches > 1 else np.full(shape, np.nan)
    return mean, np.sqrt(var / n), jk


def validate(closed: float, mc: McEstimate, z: float = 3.0, name: str = "") -> ValidationResult:
    """Pass iff ``|closed - mc.value| <= z * mc.std_error``."""
    if not z > 0:
        raise ValueError("z must be > 0")
    gap = abs(closed - mc.value)
    if mc.std_error > 0:
        passed = gap <= z * mc.std_error
    else:
        # Zero spread (deterministic channel): demand agreement to rounding.
        passed = gap <= 1e-12 * max(abs(closed), abs(mc.value), 1e-300)
    return ValidationResult(name, float(closed), float(mc.value), float(mc.std_error), float(z), bool(passed))


def validate_instance(
    net: NetworkInstance,
    assign: PilotAssignment,
    powers: PowerConfig,
    frame: FrameConfig,
    trials: int,
    seed: int,
    z: float = 3.0,
    batches: int = DEFAULT_BATCHES,
    estimators=tuple(Estimator),
    workers: int = 1,
) -> list[ValidationResult]:
    """Compare every closed-form SINR with its Monte Carlo estimate.

    One simulation per estimator serves all schemes: UL single-layer and
    optimal LSFD, coherent and non-coherent DL.
    """
    stats = compute_statistics(net, assign, powers, frame)
    K = net.num_ues
    _, ul_power = powers.per_ue(K)
    results = []
    for est_index, est in enumerate(map(Estimator, estimators)):
        moments = ul_moments(stats, ul_power, est)
        lsfd = np.stack([optimal_lsfd(moments, k) for k in range(K)])
        coh = dl_power_allocation(stats, powers.dl_total_power, est, COHERENT)
        nc = dl_power_allocation(stats, powers.dl_total_power, est, NONCOHERENT)
        weights = {
            "single": np.ones((K, net.num_aps)),
            "lsfd": lsfd,
            "dl": np.sqrt(coh.scaling.T),
        }
        mc = mc_ul_moments(net, assign, powers, frame, est, trials, seed + est_index, batches, gram=False, weights=weights, workers=workers)
        closed = {
            "ul_single": ul_sinr_all(moments, "single"),
            "ul_lsfd": ul_sinr_all(moments, "lsfd"),
            "dl_coherent": dl_sinr(stats, coh, powers.noise_dl),
            "dl_noncoherent": dl_sinr(stats, nc, powers.noise_dl),
        }
        empirical = {
            "ul_single": mc_ul_sinr_weighted(mc, "single", ul_power, powers.noise_ul),
            "ul_lsfd": mc_ul_sinr_weighted(mc, "lsfd", ul_power, powers.noise_ul),
            "dl_coherent": mc_dl_sinr(net, assign, powers, frame, est, COHERENT, trials, seed, moments=mc),
            "dl_noncoherent": mc_dl_sinr(net, assign, powers, frame, est, NONCOHERENT, trials, seed, moments=mc),
        }
        for scheme, values in closed.items():
            for k in range(K):
                results.append(validate(values[k], empirical[scheme][k], z, name=f"{est}/{scheme}/ue{k}"))
    return results
