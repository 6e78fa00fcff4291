"""Network layouts and large-scale propagation.

Positions are drawn uniformly in a square (optionally wrapped into a torus),
pathloss follows the COST 321 Walfish-Ikegami micro-cell fit, the Rician
factor decays exponentially with distance, and shadow fading is the sum of an
AP-side and a UE-side Gaussian field with exponentially decaying spatial
correlation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

__all__ = [
    "AreaSpec",
    "ShadowModel",
    "NetworkInstance",
    "generate_positions",
    "planar_distances",
    "wraparound_distance",
    "link_distances",
    "pathloss_db",
    "rician_kappa",
    "sample_shadow_fading",
    "large_scale_coefficients",
    "db_to_linear",
    "generate_network",
]

# Relative diagonal loading applied to the shadow-fading covariances before
# the Cholesky factorization (coincident points make them singular).
SHADOW_REGULARIZATION = 1e-10


@dataclass(frozen=True)
class AreaSpec:
    side_length: float = 1000.0
    wraparound: bool = True
    ap_height: float = 12.5
    ue_height: float = 1.5

    def __post_init__(self):
        if not self.side_length >= 0:
            raise ConfigError(f"side_length must be >= 0, got {self.side_length}")
        if self.ap_height < 0 or self.ue_height < 0:
            raise ConfigError("antenna heights must be >= 0")

    @property
    def height_gap(self) -> float:
        return abs(self.ap_height - self.ue_height)


@dataclass(frozen=True)
class ShadowModel:
    sigma_sf: float = 8.0
    delta: float = 0.5
    d_dc: float = 100.0

    def __post_init__(self):
        if self.sigma_sf < 0:
            raise ConfigError(f"sigma_sf must be >= 0, got {self.sigma_sf}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        if not self.d_dc > 0:
            raise ConfigError(f"d_dc must be > 0, got {self.d_dc}")


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """One random layout with every per-link large-scale quantity.

    All M x K matrices are indexed ``[ap, ue]``. ``los_mean`` is the LoS
    amplitude and ``nlos_var`` the NLoS variance, both linear; powers are
    in Watts-normalized gain units (not dB).
    """

    ap_positions: np.ndarray
    ue_positions: np.ndarray
    distance: np.ndarray
    pathloss_db: np.ndarray
    kappa: np.ndarray
    shadow_db: np.ndarray
    los_mean: np.ndarray
    nlos_var: np.ndarray

    @property
    def num_aps(self) -> int:
        return self.los_mean.shape[0]

    @property
    def num_ues(self) -> int:
        return self.los_mean.shape[1]

    @property
    def los_power(self) -> np.ndarray:
        return self.los_mean**2

    @property
    def beta_prime(self) -> np.ndarray:
        """Total received power per link (LoS power plus NLoS variance)."""
        return self.nlos_var + self.los_mean**2

    @classmethod
    def from_large_scale(cls, los_mean, nlos_var) -> "NetworkInstance":
        """Build an instance directly from h-bar and beta, without geometry.

        Useful for hand-made test cases; positions and distances are left
        as NaN.
        """
        los_mean = np.atleast_2d(np.asarray(los_mean, dtype=float))
        nlos_var = np.atleast_2d(np.asarray(nlos_var, dtype=float))
        if los_mean.shape != nlos_var.shape:
            raise ConfigError("los_mean and nlos_var shapes differ")
        M, K = los_mean.shape
        nan = np.full((M, K), np.nan)
        total = los_mean**2 + nlos_var
        with np.errstate(divide="ignore"):
            pl_db = 10 * np.log10(total)
        return cls(
            ap_positions=np.full((M, 2), np.nan),
            ue_positions=np.full((K, 2), np.nan),
            distance=nan,
            pathloss_db=pl_db,
            kappa=np.divide(los_mean**2, nlos_var, out=np.full((M, K), np.inf), where=nlos_var > 0),
            shadow_db=np.zeros((M, K)),
            los_mean=los_mean,
            nlos_var=nlos_var,
        )


def generate_positions(M: int, K: int, area: AreaSpec, rng: np.random.Generator):
    """Draw AP and UE positions i.i.d. uniformly in ``[0, side)^2``.

    Returns
    -------
    ap_positions : (M, 2) ndarray
    ue_positions : (K, 2) ndarray
    """
    if M < 1 or K < 1:
        raise ConfigError(f"need at least one AP and one UE, got M={M}, K={K}")
    side = area.side_length
    ap = rng.uniform(0.0, 1.0, size=(M, 2)) * side
    ue = rng.uniform(0.0, 1.0, size=(K, 2)) * side
    return ap, ue


def planar_distances(a, b, area: AreaSpec) -> np.ndarray:
    """Pairwise 2-D distances between point sets ``a`` (N, 2) and ``b`` (P, 2).

    With wrap-around, each coordinate offset is folded onto the shortest
    image, which equals the minimum over the nine shifted copies of ``b``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    delta = np.abs(a[:, None, :] - b[None, :, :])
    if area.wraparound and area.side_length > 0:
        delta = np.minimum(delta, area.side_length - delta)
    return np.hypot(delta[..., 0], delta[..., 1])


def wraparound_distance(p, q, area: AreaSpec) -> float:
    """AP-to-UE distance in 3-D between an AP at ``p`` and a UE at ``q``.

    The planar part is the minimum over the nine copies of ``q`` shifted by
    multiples of the side length (plain Euclidean without wrap-around); the
    AP/UE height gap is then added in quadrature.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    diff = p - q
    if area.wraparound:
        side = area.side_length
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float) * side
        planar = np.min(np.hypot(diff[0] + shifts[:, 0], diff[1] + shifts[:, 1]))
    else:
        planar = float(np.hypot(diff[0], diff[1]))
    return float(np.hypot(planar, area.height_gap))


def link_distances(ap_positions, ue_positions, area: AreaSpec) -> np.ndarray:
    """M x K matrix of 3-D AP-UE distances (wrap-around aware)."""
    return np.hypot(planar_distances(ap_positions, ue_positions, area), area.height_gap)


def pathloss_db(d) -> np.ndarray:
    """Distance-dependent pathloss in dB (shadowing excluded).

    ``-30.18 - 26 log10(d / 1 m)``; negative values are losses.
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("pathloss is only defined for distances > 0")
    return -30.18 - 26.0 * np.log10(d)


def rician_kappa(d) -> np.ndarray:
    """Rician factor ``10^(1.3 - 0.003 d)`` for distance ``d`` in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("Rician factor is only defined for distances > 0")
    return 10.0 ** (1.3 - 0.003 * d)


def db_to_linear(x_db) -> np.ndarray:
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def _correlated_normal_factor(points, model: ShadowModel, area: AreaSpec, what: str) -> np.ndarray:
    """Lower Cholesky factor of ``sigma^2 * 2^(-d/d_dc)`` plus diagonal loading."""
    d = planar_distances(points, points, area)
    cov = model.sigma_sf**2 * 2.0 ** (-d / model.d_dc)
    cov[np.diag_indices_from(cov)] += SHADOW_REGULARIZATION * model.sigma_sf**2
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        eig_min = float(np.linalg.eigvalsh(cov).min())
        raise NumericalError(
            f"{what} shadow-fading covariance is not positive definite "
            f"(size {cov.shape[0]}, smallest eigenvalue {eig_min:.3e})"
        ) from exc


def sample_shadow_fading(
    ap_positions,
    ue_positions,
    model: ShadowModel,
    area: AreaSpec,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw the shadow-fading matrix ``F = sqrt(delta) a_m + sqrt(1-delta) b_k`` in dB.

    Parameters
    ----------
    ap_positions, ue_positions : ndarray
        (M, 2) and (K, 2) planar coordinates.
    model : ShadowModel
    area : AreaSpec
        Only used for the wrap-around distance between points.
    rng : numpy Generator
    size : int, optional
        Number of independent draws. When given the result has shape
        (size, M, K), otherwise (M, K).
    """
    ap_positions = np.atleast_2d(ap_positions)
    ue_positions = np.atleast_2d(ue_positions)
    M, K = len(ap_positions), len(ue_positions)
    n = 1 if size is None else int(size)
    if model.sigma_sf == 0:
        out = np.zeros((n, M, K))
        return out[0] if size is None else out

    chol_ap = _correlated_normal_factor(ap_positions, model, area, "AP")
    chol_ue = _correlated_normal_factor(ue_positions, model, area, "UE")
    # Draw order (AP field, then UE field) is part of the determinism contract.
    a = rng.standard_normal((n, M)) @ chol_ap.T
    b = rng.standard_normal((n, K)) @ chol_ue.T
    out = np.sqrt(model.delta) * a[:, :, None] + np.sqrt(1.0 - model.delta) * b[:, None, :]
    return out[0] if size is None else out


def large_scale_coefficients(total_db, kappa):
    """Split the total link gain between the LoS and NLoS parts.

    Parameters
    ----------
    total_db : array_like
        Pathloss plus shadow fading, in dB.
    kappa : array_like
        Rician factor (>= 0).

    Returns
    -------
    los_mean : ndarray
        LoS amplitude with ``los_mean**2 = PL * kappa / (kappa + 1)``.
    nlos_var : ndarray
        NLoS variance ``PL / (kappa + 1)``.
    """
    gain = db_to_linear(total_db)
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise ValueError("kappa must be >= 0")
    nlos_var = gain / (kappa + 1.0)
    # gain - nlos_var keeps los_mean**2 + nlos_var == gain to rounding.
    los_mean = np.sqrt(np.maximum(gain - nlos_var, 0.0))
    return los_mean, nlos_var


def generate_network(
    M: int,
    K: int,
    area: AreaSpec,
    shadow: ShadowModel,
    rng: np.random.Generator,
) -> NetworkInstance:
    """Sample positions and shadowing, then derive all link quantities."""
    ap, ue = generate_positions(M, K, area, rng)
    dist = link_distances(ap, ue, area)
    pl = pathloss_db(dist)
    kappa = rician_kappa(dist)
    shadow_db = sample_shadow_fading(ap, ue, shadow, area, rng)
    los_mean, nlos_var = large_scale_coefficients(pl + shadow_db, kappa)
    return NetworkInstance(
        ap_positions=ap,
        ue_positions=ue,
        distance=dist,
        pathloss_db=pl,
        kappa=kappa,
        shadow_db=shadow_db,
        los_mean=los_mean,
        nlos_var=nlos_var,
    )
