"""Closed-form downlink SINR with MR precoding.

Coherent transmission sends the same symbol from every AP with precoder
``w_{m,k} = sqrt(D_{m,k}) h_hat_{m,k}``; non-coherent transmission sends an
independent stream per AP with the unit-power precoder
``h_hat / sqrt(E{|h_hat|^2})`` and the UE decodes the streams by
successive interference cancellation.

Two evaluation paths are provided: trace forms written out per estimator,
and a generic route through the uplink per-AP moments (downlink
expectations are the uplink ones with the roles of the two UEs swapped).
The test suite checks they agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Estimator, EstimatorStatistics, FrameConfig
from .errors import ConfigError, DegenerateError, NumericalError
from .uplink import MomentSet, SEReport, spectral_efficiency

__all__ = [
    "COHERENT",
    "NONCOHERENT",
    "DLPowerAllocation",
    "dl_power_allocation",
    "dl_sinr_coherent",
    "dl_sinr_noncoherent",
    "dl_sinr",
    "dl_sinr_coherent_from_moments",
    "dl_sinr_noncoherent_from_moments",
    "sic_stream_sinrs",
    "dl_sic_telescoping_check",
    "dl_se",
    "dl_report",
]

COHERENT = "coherent"
NONCOHERENT = "noncoherent"


@dataclass(frozen=True, eq=False)
class DLPowerAllocation:
    """Per-link DL power and the precoder scaling derived from it.

    ``rho`` is the power AP m spends on UE k and ``eta`` the fraction of
    the per-UE share. For coherent mode ``scaling = rho / E{|h_hat|^2}``,
    for non-coherent mode ``scaling = rho``.
    """

    rho: np.ndarray
    eta: np.ndarray
    scaling: np.ndarray
    estimator: Estimator
    mode: str
    total_power: float

    def per_ap_power(self) -> np.ndarray:
        return self.rho.sum(axis=1)


def dl_power_allocation(stats: EstimatorStatistics, total_power: float, estimator, mode: str) -> DLPowerAllocation:
    """Allocate ``rho_{m,k} = (total_power / K) * beta'_{m,k} / sum_l beta'_{m,l}``.

    Each AP therefore radiates ``total_power / K`` in expectation.
    """
    estimator = Estimator(estimator)
    if mode not in (COHERENT, NONCOHERENT):
        raise ConfigError(f"unknown DL mode {mode!r}")
    if total_power < 0:
        raise ConfigError("total DL power must be >= 0")
    bprime = stats.beta_prime
    K = bprime.shape[1]
    eta = bprime / bprime.sum(axis=1, keepdims=True)
    rho = total_power / K * eta
    if mode == COHERENT:
        norm = stats.estimate_power(estimator)
        if np.any(~(norm > 0)):
            m, k = np.argwhere(~(norm > 0))[0]
            raise DegenerateError(f"zero estimate power on link (AP {m}, UE {k})")
        scaling = rho / norm
    else:
        scaling = rho.copy()
    return DLPowerAllocation(rho, eta, scaling, estimator, mode, float(total_power))


def _check(sinr: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    if np.any(~(den > 0)):
        raise DegenerateError(f"{what} SINR denominator is not positive")
    if not np.all(np.isfinite(sinr)):
        raise NumericalError(f"non-finite {what} SINR")
    return sinr


def _scattered_power(stats):
    """``beta^2 + 2 h_bar^2 beta``: excess fourth moment of the channel."""
    beta = stats.nlos_var
    return beta**2 + 2.0 * stats.los_power * beta


def dl_sinr_coherent(stats: EstimatorStatistics, alloc: DLPowerAllocation, noise: float) -> np.ndarray:
    """Per-UE coherent DL SINR from the trace forms.

    Matrices ``D_k`` are diagonal and stored as the columns of
    ``alloc.scaling``; all traces reduce to sums over APs.
    """
    if alloc.mode != COHERENT:
        raise ConfigError("coherent SINR needs a coherent allocation")
    D = alloc.scaling
    sD = np.sqrt(D)
    gain = stats.pilot_gain
    bprime = stats.beta_prime
    share = stats.same_pilot.astype(float)
    est = alloc.estimator

    if est is Estimator.MMSE:
        beta, lam, z = stats.nlos_var, stats.lam, stats.z
        signal = np.sum(sD * z, axis=0) ** 2
        spread = bprime.T @ np.sum(D * z, axis=1)
        cross = beta.T @ (sD * beta / lam)  # [k, l]
        others = share - np.eye(len(gain))
        contamination = gain * np.sum(others * gain[None, :] * cross**2, axis=1)
        self_los = np.sum(D * stats.los_power**2, axis=0)
        den = spread + contamination - self_los + noise
    elif est is Estimator.LMMSE:
        lamp, omp = stats.lam_prime, stats.omega_prime
        signal = (gain * np.sum(sD * omp, axis=0)) ** 2
        spread = bprime.T @ np.sum(D * gain * omp, axis=1)
        scat = _scattered_power(stats)
        diag_part = scat.T @ (D * omp / lamp)  # [k, l]
        cross = bprime.T @ (sD * bprime / lamp)
        cross_sq = (bprime**2).T @ (D * (bprime / lamp) ** 2)
        contamination = gain * np.sum(share * gain[None, :] * (diag_part + cross**2 - cross_sq), axis=1)
        den = spread + contamination - signal + noise
    else:
        lamp = stats.lam_prime
        pilot = stats.pilot_power
        signal = np.sum(sD * bprime, axis=0) ** 2
        spread = bprime.T @ np.sum(D * lamp / gain, axis=1)
        scat = _scattered_power(stats)
        cross = bprime.T @ sD
        bracket = scat.T @ D + cross**2 - (bprime**2).T @ D
        contamination = pilot * np.sum(share * bracket / pilot[None, :], axis=1)
        den = spread + contamination - signal + noise
    return _check(signal / den, den, f"coherent {est}")


def dl_sinr_noncoherent(stats: EstimatorStatistics, alloc: DLPowerAllocation, noise: float) -> np.ndarray:
    """Per-UE non-coherent DL SINR (aggregate over the SIC-decoded streams).

    LMMSE and LS share one expression because their normalized precoders
    coincide.
    """
    if alloc.mode != NONCOHERENT:
        raise ConfigError("non-coherent SINR needs a non-coherent allocation")
    rho = alloc.scaling
    gain = stats.pilot_gain
    bprime = stats.beta_prime
    share = stats.same_pilot.astype(float)
    spread = bprime.T @ rho.sum(axis=1)
    if alloc.estimator is Estimator.MMSE:
        beta, lam, z = stats.nlos_var, stats.lam, stats.z
        signal = np.sum(rho * z, axis=0)
        cross = (beta**2).T @ (rho * (beta / lam) ** 2 / z)  # [k, l]
        others = share - np.eye(len(gain))
        contamination = gain * np.sum(others * gain[None, :] * cross, axis=1)
        self_los = np.sum(rho * stats.los_power**2 / z, axis=0)
        den = spread + contamination - self_los + noise
    else:
        signal = gain * np.sum(rho * stats.omega_prime, axis=0)
        cross = _scattered_power(stats).T @ (rho / stats.lam_prime)
        contamination = gain * np.sum(share * cross, axis=1)
        den = spread + contamination - signal + noise
    return _check(signal / den, den, f"non-coherent {alloc.estimator}")


def dl_sinr(stats: EstimatorStatistics, alloc: DLPowerAllocation, noise: float) -> np.ndarray:
    if alloc.mode == COHERENT:
        return dl_sinr_coherent(stats, alloc, noise)
    return dl_sinr_noncoherent(stats, alloc, noise)


def dl_sinr_coherent_from_moments(moments: MomentSet, scaling: np.ndarray, noise: float) -> np.ndarray:
    """Coherent DL SINR from the uplink per-AP moments.

    ``E{w_l^H h_k}`` uses the moments of (v from UE l, h of UE k), i.e.
    the ``[l, k]`` entries.
    """
    sD = np.sqrt(scaling.T)  # (K, M), row l = sqrt of D_l
    mean = moments.mean
    var = moments.second - mean**2
    amp = np.einsum("lm,lkm->lk", sD, mean)  # [l, k]
    spread = np.einsum("lm,lkm->lk", sD**2, var)
    signal = np.diagonal(amp) ** 2
    den = np.sum(amp**2 + spread, axis=0) - signal + noise
    return _check(signal / den, den, "coherent moment-based")


def dl_sinr_noncoherent_from_moments(moments: MomentSet, rho: np.ndarray, noise: float) -> np.ndarray:
    """Non-coherent DL SINR from the uplink per-AP moments."""
    r = rho.T / moments.self_power  # (K, M): rho_{m,l} / E{|h_hat_{m,l}|^2}
    K = moments.num_ues
    idx = np.arange(K)
    signal = np.sum(r * moments.mean[idx, idx] ** 2, axis=1)
    total = np.einsum("lm,lkm->k", r, moments.second)
    den = total - signal + noise
    return _check(signal / den, den, "non-coherent moment-based")


def sic_stream_sinrs(signal, interference, noise: float, order=None) -> np.ndarray:
    """Per-AP stream SINRs when UE k cancels streams in ``order``.

    Parameters
    ----------
    signal : (M,) array
        Coherent-part power of each AP's stream at the UE.
    interference : (M,) array
        Everything else AP m contributes (other UEs' streams and the
        non-coherent part of its own stream).
    order : sequence of int, optional
        Decoding order; defaults to ``0..M-1``.
    """
    signal = np.asarray(signal, dtype=float)
    interference = np.asarray(interference, dtype=float)
    M = len(signal)
    order = np.arange(M) if order is None else np.asarray(order)
    if sorted(order.tolist()) != list(range(M)):
        raise ValueError("order must be a permutation of the AP indices")
    s = signal[order]
    # Streams decoded later still interfere with the current one.
    later = np.concatenate([np.cumsum(s[::-1])[::-1][1:], [0.0]])
    out = np.empty(M)
    out[order] = s / (later + interference.sum() + noise)
    return out


def dl_sic_telescoping_check(signal, interference, noise: float, order=None) -> float:
    """Absolute gap between the per-stream and aggregate SE (bit/s/Hz).

    The sum of ``log2(1 + stream SINR)`` telescopes to
    ``log2(1 + sum(signal) / (sum(interference) + noise))`` for any
    decoding order.
    """
    streams = sic_stream_sinrs(signal, interference, noise, order)
    per_stream = float(np.sum(np.log2(1.0 + streams)))
    aggregate = float(np.log2(1.0 + np.sum(signal) / (np.sum(interference) + noise)))
    return abs(per_stream - aggregate)


def dl_se(sinr, frame: FrameConfig) -> np.ndarray:
    return spectral_efficiency(sinr, frame.dl_prelog)


def dl_report(stats: EstimatorStatistics, alloc: DLPowerAllocation, noise: float, frame: FrameConfig) -> SEReport:
    sinr = dl_sinr(stats, alloc, noise)
    return SEReport(sinr, dl_se(sinr, frame), alloc.estimator, f"dl_{alloc.mode}", frame.dl_prelog)
