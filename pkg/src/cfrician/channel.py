"""Channel realizations, pilot reception and the three channel estimators.

Each link carries a LoS component of fixed amplitude with a phase that is
redrawn every coherence block, plus complex Gaussian scattering.  Pilots are
represented by integer indices; because pilot sequences are mutually
orthogonal, the despread observation per (AP, pilot) is a sufficient
statistic and the sequences themselves are never built.

Arrays follow the layout ``(..., M, K)`` so any number of leading trial
dimensions can be carried through the estimators.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import NetworkInstance

__all__ = [
    "Estimator",
    "FrameConfig",
    "PowerConfig",
    "PilotAssignment",
    "ChannelRealization",
    "EstimatorStatistics",
    "assign_pilots",
    "sample_channel",
    "receive_pilots",
    "compute_statistics",
    "estimate_mmse",
    "estimate_lmmse",
    "estimate_ls",
    "estimate",
    "complex_normal",
]


class Estimator(str, enum.Enum):
    MMSE = "mmse"
    LMMSE = "lmmse"
    LS = "ls"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class FrameConfig:
    """Coherence-block layout in samples.

    ``tau_u`` and ``tau_d`` default to ``tau_c - tau_p``; a block is used
    for either uplink or downlink data, never both.
    """

    tau_c: int = 200
    tau_p: int = 5
    tau_u: int | None = None
    tau_d: int | None = None

    def __post_init__(self):
        if self.tau_p < 1:
            raise ConfigError(f"tau_p must be >= 1, got {self.tau_p}")
        if self.tau_c < self.tau_p:
            raise ConfigError(f"tau_c={self.tau_c} is shorter than tau_p={self.tau_p}")
        for name in ("tau_u", "tau_d"):
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, self.tau_c - self.tau_p)
            elif value < 0 or value + self.tau_p > self.tau_c:
                raise ConfigError(f"{name}={value} does not fit a block of {self.tau_c} with {self.tau_p} pilots")

    @property
    def ul_prelog(self) -> float:
        return self.tau_u / self.tau_c

    @property
    def dl_prelog(self) -> float:
        return self.tau_d / self.tau_c


@dataclass(frozen=True, eq=False)
class PowerConfig:
    """Transmit and noise powers in Watts.

    ``pilot_power`` and ``ul_data_power`` may be scalars or per-UE arrays.
    ``dl_total_power`` is the per-AP budget. Use :meth:`per_ue` to get
    length-K arrays.
    """

    pilot_power: float | np.ndarray = 0.2
    ul_data_power: float | np.ndarray = 0.2
    dl_total_power: float = 8.0
    noise_ul: float = 10 ** (-12.4)
    noise_dl: float = 10 ** (-12.4)

    def __post_init__(self):
        for name in ("pilot_power", "ul_data_power", "dl_total_power"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ConfigError(f"{name} must be >= 0")
        if np.any(np.asarray(self.pilot_power) <= 0):
            raise ConfigError("pilot_power must be > 0 for the estimators to exist")
        for name in ("noise_ul", "noise_dl"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")

    def per_ue(self, K: int):
        """Return ``(pilot_power, ul_data_power)`` broadcast to length K."""
        pp = np.broadcast_to(np.asarray(self.pilot_power, dtype=float), (K,)).copy()
        pu = np.broadcast_to(np.asarray(self.ul_data_power, dtype=float), (K,)).copy()
        return pp, pu


@dataclass(frozen=True, eq=False)
class PilotAssignment:
    pilot_of_ue: np.ndarray
    tau_p: int

    def __post_init__(self):
        p = np.asarray(self.pilot_of_ue, dtype=int)
        if p.ndim != 1 or np.any(p < 0) or np.any(p >= self.tau_p):
            raise ConfigError("pilot indices must lie in [0, tau_p)")
        object.__setattr__(self, "pilot_of_ue", p)

    @property
    def num_ues(self) -> int:
        return len(self.pilot_of_ue)

    @property
    def same_pilot(self) -> np.ndarray:
        """K x K boolean matrix, True where two UEs share a pilot."""
        p = self.pilot_of_ue
        return p[:, None] == p[None, :]

    def cohort(self, k: int) -> np.ndarray:
        """Indices of the UEs sharing UE k's pilot (k included)."""
        return np.flatnonzero(self.pilot_of_ue == self.pilot_of_ue[k])


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray
    phase: np.ndarray
    nlos: np.ndarray
    pilot_obs: np.ndarray | None = None

    def with_pilots(self, pilot_obs) -> "ChannelRealization":
        return ChannelRealization(self.h, self.phase, self.nlos, pilot_obs)


def complex_normal(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return np.sqrt(np.asarray(var) / 2.0) * (z[..., 0] + 1j * z[..., 1])


def assign_pilots(beta_prime, tau_p: int, rng: np.random.Generator) -> PilotAssignment:
    """Greedy pilot assignment.

    The first ``min(tau_p, K)`` UEs receive distinct random pilots. Each
    later UE ``k`` takes the pilot ``t`` minimizing the large-scale overlap
    ``sum_{l on t} sum_m beta'_{m,l} beta'_{m,k}`` with the UEs already on
    it (ties go to the lowest index).

    Parameters
    ----------
    beta_prime : (M, K) array
        Total link gains; a :class:`NetworkInstance` is also accepted.
    """
    if isinstance(beta_prime, NetworkInstance):
        beta_prime = beta_prime.beta_prime
    beta_prime = np.asarray(beta_prime, dtype=float)
    K = beta_prime.shape[1]
    if tau_p < 1 or K < 1:
        raise ConfigError(f"need tau_p >= 1 and K >= 1, got tau_p={tau_p}, K={K}")
    first = min(tau_p, K)
    pilots = np.empty(K, dtype=int)
    pilots[:first] = rng.permutation(tau_p)[:first]
    overlap = beta_prime.T @ beta_prime
    for k in range(first, K):
        score = np.zeros(tau_p)
        np.add.at(score, pilots[:k], overlap[:k, k])
        pilots[k] = int(np.argmin(score))
    return PilotAssignment(pilots, tau_p)


def sample_channel(net: NetworkInstance, rng: np.random.Generator, size=(), phase=None) -> ChannelRealization:
    """Draw ``h = h_bar e^{j phi} + g`` for every link.

    Parameters
    ----------
    size : tuple
        Leading trial dimensions; the result has shape ``size + (M, K)``.
    phase : array, optional
        Fixed LoS phases (broadcast against the output). Drawn uniformly
        on ``[-pi, pi)`` when omitted.
    """
    size = (size,) if np.isscalar(size) else tuple(size)
    shape = size + net.los_mean.shape
    if phase is None:
        phase = rng.uniform(-np.pi, np.pi, size=shape)
    else:
        phase = np.broadcast_to(np.asarray(phase, dtype=float), shape)
    nlos = complex_normal(rng, shape, net.nlos_var)
    h = net.los_mean * np.exp(1j * phase) + nlos
    return ChannelRealization(h=h, phase=phase, nlos=nlos)


def receive_pilots(real: ChannelRealization, assign: PilotAssignment, powers: PowerConfig, frame: FrameConfig, rng) -> np.ndarray:
    """Despread pilot observation ``y[..., m, k]``.

    UEs sharing a pilot see the same observation, built from one noise draw
    ``CN(0, noise_ul * tau_p)`` per (AP, pilot).
    """
    h = real.h
    M, K = h.shape[-2:]
    pilot_power, _ = powers.per_ue(K)
    tau_p = frame.tau_p
    mixing = assign.same_pilot.astype(float)
    signal = (h * (np.sqrt(pilot_power) * tau_p)) @ mixing
    noise = complex_normal(rng, h.shape[:-1] + (tau_p,), powers.noise_ul * tau_p)
    return signal + noise[..., assign.pilot_of_ue]


@dataclass(frozen=True, eq=False)
class EstimatorStatistics:
    """Per-link estimation constants, all M x K unless noted.

    Attributes
    ----------
    lam, lam_prime : pilot-observation powers divided by tau_p, with and
        without the LoS power counted as known mean.
    c, c_prime : MMSE and LMMSE error variances.
    pilot_power : (K,) pilot powers.
    same_pilot : (K, K) boolean pilot-sharing matrix.
    """

    los_mean: np.ndarray
    nlos_var: np.ndarray
    beta_prime: np.ndarray
    lam: np.ndarray
    lam_prime: np.ndarray
    c: np.ndarray
    c_prime: np.ndarray
    pilot_power: np.ndarray
    tau_p: int
    noise: float
    same_pilot: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.lam.shape

    @property
    def los_power(self) -> np.ndarray:
        return self.los_mean**2

    @property
    def pilot_gain(self) -> np.ndarray:
        """``p_hat_k * tau_p`` broadcast as a (K,) row."""
        return self.pilot_power * self.tau_p

    @property
    def omega(self) -> np.ndarray:
        return self.nlos_var**2 / self.lam

    @property
    def omega_prime(self) -> np.ndarray:
        return self.beta_prime**2 / self.lam_prime

    @property
    def z(self) -> np.ndarray:
        """Second moment of the MMSE estimate, ``p_hat tau Omega + h_bar^2``."""
        return self.pilot_gain * self.omega + self.los_power

    @property
    def ls_error_var(self) -> np.ndarray:
        return self.lam_prime / self.pilot_gain - self.beta_prime

    def estimate_power(self, estimator) -> np.ndarray:
        """``E{|h_hat|^2}`` per link for the given estimator."""
        estimator = Estimator(estimator)
        if estimator is Estimator.MMSE:
            return self.z
        if estimator is Estimator.LMMSE:
            return self.pilot_gain * self.omega_prime
        return self.lam_prime / self.pilot_gain

    def error_var(self, estimator) -> np.ndarray:
        estimator = Estimator(estimator)
        if estimator is Estimator.MMSE:
            return self.c
        if estimator is Estimator.LMMSE:
            return self.c_prime
        return self.ls_error_var


def compute_statistics(net: NetworkInstance, assign: PilotAssignment, powers: PowerConfig, frame: FrameConfig) -> EstimatorStatistics:
    K = net.num_ues
    if assign.num_ues != K:
        raise ConfigError(f"pilot assignment covers {assign.num_ues} UEs, network has {K}")
    pilot_power, _ = powers.per_ue(K)
    tau_p = frame.tau_p
    mixing = assign.same_pilot.astype(float)
    beta = net.nlos_var
    beta_prime = net.beta_prime
    gain = pilot_power * tau_p
    lam = (gain * beta) @ mixing + powers.noise_ul
    lam_prime = (gain * beta_prime) @ mixing + powers.noise_ul
    c = beta - gain * beta**2 / lam
    c_prime = beta_prime - gain * beta_prime**2 / lam_prime
    return EstimatorStatistics(
        los_mean=net.los_mean,
        nlos_var=beta,
        beta_prime=beta_prime,
        lam=lam,
        lam_prime=lam_prime,
        c=c,
        c_prime=c_prime,
        pilot_power=pilot_power,
        tau_p=tau_p,
        noise=powers.noise_ul,
        same_pilot=assign.same_pilot,
    )


def estimate_mmse(real: ChannelRealization, stats: EstimatorStatistics) -> np.ndarray:
    """Phase-aware MMSE estimate; requires the realized LoS phases."""
    los = stats.los_mean * np.exp(1j * real.phase)
    sqrt_p = np.sqrt(stats.pilot_power)
    los_obs = (los * (sqrt_p * stats.tau_p)) @ stats.same_pilot.astype(float)
    return los + sqrt_p * stats.nlos_var * (real.pilot_obs - los_obs) / stats.lam


def estimate_lmmse(real: ChannelRealization, stats: EstimatorStatistics) -> np.ndarray:
    return np.sqrt(stats.pilot_power) * stats.beta_prime * real.pilot_obs / stats.lam_prime


def estimate_ls(real: ChannelRealization, stats: EstimatorStatistics) -> np.ndarray:
    return real.pilot_obs / (np.sqrt(stats.pilot_power) * stats.tau_p)


def estimate(real: ChannelRealization, stats: EstimatorStatistics, estimator) -> np.ndarray:
    estimator = Estimator(estimator)
    if real.pilot_obs is None:
        raise ValueError("realization has no pilot observation; call receive_pilots first")
    if estimator is Estimator.MMSE:
        return estimate_mmse(real, stats)
    if estimator is Estimator.LMMSE:
        return estimate_lmmse(real, stats)
    return estimate_ls(real, stats)
