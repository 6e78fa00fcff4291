"""Closed-form uplink SINR with MR combining and large-scale fading decoding.

Every AP m forms ``v_{m,k}^* y_m`` with its local estimate ``v_{m,k}``; the
CPU weights these soft estimates with a deterministic vector ``a_k``.
Under the use-and-then-forget bound the SINR is the generalized Rayleigh
quotient

    p_k |a^H b_kk|^2 / (a^H Gamma_k a),

where the moment vectors and matrices depend on the estimator only through
three per-link quantities, stored here as arrays indexed ``[k, l, m]``:

* ``mean``   E{v_{m,k}^* h_{m,l}}
* ``second`` E{|v_{m,k}^* h_{m,l}|^2}
* ``self_power`` E{|v_{m,k}|^2}  (indexed ``[k, m]``)

Across APs the terms are independent, so

    Gamma_k = diag(sum_l p_l (second - |mean|^2) + noise * self_power)
              + sum_{l != k} p_l mean_kl mean_kl^T.

Only pilot-sharing UEs have a nonzero mean, so the rank-one part is a sum
over the pilot cohort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import Estimator, EstimatorStatistics, FrameConfig
from .errors import DegenerateError, NumericalError

__all__ = [
    "MomentSet",
    "SEReport",
    "ul_moments",
    "ul_moments_mmse",
    "ul_moments_lmmse",
    "ul_moments_ls",
    "lsfd_weights",
    "optimal_lsfd",
    "ul_sinr",
    "ul_sinr_all",
    "ul_se",
    "ul_report",
    "spectral_efficiency",
]


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Per-AP first/second moments of ``v_{m,k}^* h_{m,l}``.

    Attributes
    ----------
    mean : (K, K, M) array, ``[k, l, m] -> E{v_{m,k}^* h_{m,l}}`` (real, >= 0).
    second : (K, K, M) array, ``E{|v_{m,k}^* h_{m,l}|^2}``.
    self_power : (K, M) array, ``E{|v_{m,k}|^2}``.
    ul_power : (K,) data powers.
    noise : receiver noise power.
    """

    estimator: Estimator
    mean: np.ndarray
    second: np.ndarray
    self_power: np.ndarray
    ul_power: np.ndarray
    noise: float

    @property
    def num_ues(self) -> int:
        return self.mean.shape[0]

    @property
    def num_aps(self) -> int:
        return self.mean.shape[2]

    def signal(self, k: int) -> np.ndarray:
        """The vector ``b_kk``."""
        return self.mean[k, k]

    def gamma1(self, k: int, l: int) -> np.ndarray:
        """Dense ``E{x x^H}`` with ``x_m = v_{m,k}^* h_{m,l}``."""
        b = self.mean[k, l]
        out = np.outer(b, b)
        out[np.diag_indices_from(out)] = self.second[k, l]
        return out

    def gamma2(self, k: int) -> np.ndarray:
        return np.diag(self.self_power[k])

    def gamma_diag(self) -> np.ndarray:
        """(K, M) diagonal core of every ``Gamma_k``."""
        var = self.second - self.mean**2
        return np.einsum("l,klm->km", self.ul_power, var) + self.noise * self.self_power

    def gamma(self, k: int) -> np.ndarray:
        """Dense M x M denominator matrix ``Gamma_k``."""
        weights = self.ul_power.copy()
        weights[k] = 0.0
        b = self.mean[k]
        dense = (b.T * weights) @ b
        dense[np.diag_indices_from(dense)] += self.gamma_diag()[k]
        return dense

    def check_finite(self):
        for name in ("mean", "second", "self_power"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericalError(f"non-finite entries in {self.estimator} moment '{name}'")
        return self


@dataclass(frozen=True, eq=False)
class SEReport:
    """Per-UE SINR and SE for one (estimator, scheme) pair.

    ``practical`` is False when the scheme needs statistics the receiver
    cannot have (optimal LSFD on top of LS estimation).
    """

    sinr: np.ndarray
    se: np.ndarray
    estimator: Estimator
    scheme: str
    prelog: float
    practical: bool = True


def _cohort_mask(stats: EstimatorStatistics) -> np.ndarray:
    """(K, K, 1) float mask of pilot sharing, ready to broadcast over APs."""
    return stats.same_pilot.astype(float)[:, :, None]


def ul_moments_mmse(stats: EstimatorStatistics, ul_power) -> MomentSet:
    """Moments for the phase-aware MMSE estimator.

    ``mean[k,l] = Z_k`` for l = k and ``sqrt(p_k p_l) tau beta_k beta_l /
    lambda_k`` for the rest of the cohort; ``second = Z_k beta'_l +
    mean^2 - [l = k] h_bar_k^4``.
    """
    gain = stats.pilot_gain
    beta = stats.nlos_var.T  # (K, M)
    lam = stats.lam.T
    z = stats.z.T
    bprime = stats.beta_prime.T
    mask = _cohort_mask(stats)
    sqrt_gain = np.sqrt(gain)
    mean = mask * (sqrt_gain[:, None, None] * sqrt_gain[None, :, None]) * (beta / lam)[:, None, :] * beta[None, :, :]
    K = len(gain)
    idx = np.arange(K)
    mean[idx, idx] = z
    second = z[:, None, :] * bprime[None, :, :] + mean**2
    second[idx, idx] -= stats.los_power.T**2
    return MomentSet(Estimator.MMSE, mean, second, z.copy(), np.asarray(ul_power, float), stats.noise).check_finite()


def ul_moments_lmmse(stats: EstimatorStatistics, ul_power) -> MomentSet:
    """Moments for the LMMSE estimator (no phase knowledge)."""
    gain = stats.pilot_gain
    beta = stats.nlos_var.T
    bprime = stats.beta_prime.T
    lamp = stats.lam_prime.T
    mask = _cohort_mask(stats)
    sqrt_gain = np.sqrt(gain)
    ratio = bprime / lamp  # (K, M): beta'_k / lambda'_k
    mean = mask * (sqrt_gain[:, None, None] * sqrt_gain[None, :, None]) * ratio[:, None, :] * bprime[None, :, :]
    scattered = beta**2 + 2.0 * stats.los_power.T * beta  # fourth-moment excess of h_l
    second = (gain[:, None, None] * (ratio * bprime)[:, None, :] * bprime[None, :, :]
              + mask * (gain[:, None, None] * gain[None, :, None]) * (ratio**2)[:, None, :] * scattered[None, :, :])
    self_power = gain[:, None] * ratio * bprime
    return MomentSet(Estimator.LMMSE, mean, second, self_power, np.asarray(ul_power, float), stats.noise).check_finite()


def ul_moments_ls(stats: EstimatorStatistics, ul_power) -> MomentSet:
    """Moments for the LS estimator."""
    gain = stats.pilot_gain
    pilot = stats.pilot_power
    beta = stats.nlos_var.T
    bprime = stats.beta_prime.T
    lamp = stats.lam_prime.T
    mask = _cohort_mask(stats)
    power_ratio = pilot[None, :] / pilot[:, None]  # [k, l] -> p_l / p_k
    mean = mask * np.sqrt(power_ratio)[:, :, None] * bprime[None, :, :]
    scattered = beta**2 + 2.0 * stats.los_power.T * beta
    self_power = lamp / gain[:, None]
    second = self_power[:, None, :] * bprime[None, :, :] + mask * power_ratio[:, :, None] * scattered[None, :, :]
    return MomentSet(Estimator.LS, mean, second, self_power, np.asarray(ul_power, float), stats.noise).check_finite()


def ul_moments(stats: EstimatorStatistics, ul_power, estimator) -> MomentSet:
    estimator = Estimator(estimator)
    if estimator is Estimator.MMSE:
        return ul_moments_mmse(stats, ul_power)
    if estimator is Estimator.LMMSE:
        return ul_moments_lmmse(stats, ul_power)
    return ul_moments_ls(stats, ul_power)


def lsfd_weights(gamma, b) -> np.ndarray:
    """Solve ``gamma a = b`` for a Hermitian positive definite ``gamma``.

    The matrix is Jacobi-equilibrated before the Cholesky solve because
    link gains span many orders of magnitude; a pivoted symmetric solve is
    the fallback when the factorization fails.
    """
    gamma = np.asarray(gamma)
    b = np.asarray(b)
    d = np.real(np.diag(gamma))
    if np.any(~(d > 0)):
        raise DegenerateError("denominator matrix has a non-positive diagonal entry")
    scale = 1.0 / np.sqrt(d)
    scaled = gamma * scale[:, None] * scale[None, :]
    rhs = b * scale
    try:
        x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(scaled, lower=True, check_finite=False), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        try:
            x = scipy.linalg.solve(scaled, rhs, assume_a="her")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError("denominator matrix is singular; optimal LSFD undefined") from exc
    a = x * scale
    if not np.all(np.isfinite(a)):
        raise NumericalError("non-finite LSFD weights")
    return a


def optimal_lsfd(moments: MomentSet, k: int) -> np.ndarray:
    """LSFD weights ``a_k = Gamma_k^{-1} b_kk`` maximizing the UL SINR of UE k."""
    try:
        return lsfd_weights(moments.gamma(k), moments.signal(k))
    except NumericalError as exc:
        raise type(exc)(f"UE {k}: {exc}") from exc


def ul_sinr(moments: MomentSet, k: int, a) -> float:
    """UL SINR of UE k for the combining weights ``a`` (scale-invariant)."""
    a = np.asarray(a)
    b = moments.signal(k)
    num = moments.ul_power[k] * abs(np.vdot(a, b)) ** 2
    den = np.real(np.vdot(a, moments.gamma(k) @ a))
    if not den > 0:
        raise DegenerateError(f"UL SINR denominator of UE {k} is {den}")
    return float(num / den)


def ul_sinr_all(moments: MomentSet, scheme: str = "lsfd") -> np.ndarray:
    """SINR for every UE under ``"lsfd"`` (optimal weights) or ``"single"``.

    Single-layer decoding is the all-ones weight vector, which only needs
    the diagonal core plus the squared cohort sums.
    """
    K = moments.num_ues
    if scheme == "single":
        diag = moments.gamma_diag()
        cross = moments.mean.sum(axis=2) ** 2  # [k, l] -> (1^T b_kl)^2
        weights = np.broadcast_to(moments.ul_power, (K, K)).copy()
        np.fill_diagonal(weights, 0.0)
        den = diag.sum(axis=1) + (weights * cross).sum(axis=1)
        num = moments.ul_power * np.diagonal(cross)
        if np.any(~(den > 0)):
            raise DegenerateError("single-layer UL SINR denominator is zero")
        return num / den
    if scheme != "lsfd":
        raise ValueError(f"unknown UL scheme {scheme!r}")
    out = np.empty(K)
    for k in range(K):
        a = optimal_lsfd(moments, k)
        # At the optimum the quotient collapses to p_k b^T Gamma^{-1} b.
        out[k] = moments.ul_power[k] * float(np.dot(moments.signal(k), a))
    return out


def spectral_efficiency(sinr, prelog: float) -> np.ndarray:
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be >= 0")
    return prelog * np.log2(1.0 + sinr)


def ul_se(sinr, frame: FrameConfig) -> np.ndarray:
    return spectral_efficiency(sinr, frame.ul_prelog)


def ul_report(moments: MomentSet, scheme: str, frame: FrameConfig) -> SEReport:
    """SINR and SE of every UE for ``scheme`` in ``{"single", "lsfd"}``."""
    sinr = ul_sinr_all(moments, scheme)
    practical = not (scheme == "lsfd" and moments.estimator is Estimator.LS)
    return SEReport(sinr, ul_se(sinr, frame), moments.estimator, f"ul_{scheme}", frame.ul_prelog, practical)
