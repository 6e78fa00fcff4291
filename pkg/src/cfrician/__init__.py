"""Cell-free massive MIMO over Rician fading with random LoS phase.

Closed-form uplink/downlink spectral efficiency for phase-aware MMSE,
LMMSE and LS channel estimation, plus a Monte Carlo oracle that checks
every closed form against simulation.
"""

from .channel import (
    Estimator,
    FrameConfig,
    PilotAssignment,
    PowerConfig,
    assign_pilots,
    compute_statistics,
    estimate,
    receive_pilots,
    sample_channel,
)
from .downlink import dl_power_allocation, dl_se, dl_sinr
from .errors import CellFreeError, ConfigError, DegenerateError, NumericalError
from .geometry import AreaSpec, NetworkInstance, ShadowModel, generate_network
from .uplink import optimal_lsfd, ul_moments, ul_se, ul_sinr, ul_sinr_all

__version__ = "0.1.0"
