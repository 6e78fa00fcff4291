import numpy as np
import pytest

from cfrician.channel import FrameConfig, PilotAssignment, PowerConfig, compute_statistics
from cfrician.geometry import NetworkInstance

ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str = ""):
    """Store one acceptance line for the terminal summary."""
    flag = "PASS" if passed else "FAIL"
    line = f"[{flag}] criterion {number}: {title}"
    if detail:
        line += f" | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def make_instance(los_mean, nlos_var, pilots, tau_p, pilot_power=1.0, ul_power=1.0, noise=1.0, dl_total=1.0):
    net = NetworkInstance.from_large_scale(los_mean, nlos_var)
    assign = PilotAssignment(np.asarray(pilots), tau_p)
    powers = PowerConfig(pilot_power=pilot_power, ul_data_power=ul_power, dl_total_power=dl_total, noise_ul=noise, noise_dl=noise)
    frame = FrameConfig(tau_c=200, tau_p=tau_p)
    stats = compute_statistics(net, assign, powers, frame)
    return net, assign, powers, frame, stats


@pytest.fixture
def contaminated():
    """Three APs, three UEs; UEs 0 and 2 share pilot 0, per-UE pilot powers differ."""
    los = np.array([[1.0, 0.4, 0.7], [0.3, 1.2, 0.5], [0.8, 0.2, 0.9]])
    nlos = np.array([[0.5, 0.3, 0.6], [0.4, 0.9, 0.2], [0.7, 0.3, 0.5]])
    return make_instance(los, nlos, [0, 1, 0], tau_p=2, pilot_power=np.array([1.0, 0.6, 1.4]), ul_power=np.array([0.8, 1.0, 1.2]), noise=0.3, dl_total=2.0)
