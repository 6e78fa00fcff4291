"""Multi-setup sweeps, aggregation and result files."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import Estimator, assign_pilots, compute_statistics
from .config import SimConfig
from .downlink import COHERENT, NONCOHERENT, dl_power_allocation, dl_report
from .errors import CellFreeError
from .geometry import generate_network
from .montecarlo import validate_instance
from .uplink import ul_moments, ul_report

__all__ = [
    "ResultTable",
    "run_setup",
    "run_sweep",
    "emit_results",
    "read_rows",
    "setup_seed",
    "ROW_HEADER",
    "PERCENTILE_LEVELS",
]

ROW_HEADER = ("setup", "ue", "estimator", "scheme", "sinr", "se_bit_per_hz")
VALIDATION_HEADER = ("setup", "name", "closed_form", "mc_value", "std_error", "z_score", "passed")
PERCENTILE_LEVELS = np.arange(101)
# LS estimation followed by optimal LSFD needs statistics an LS receiver lacks.
IMPRACTICAL = {("ls", "ul_lsfd")}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def setup_seed(master_seed: int, setup: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(setup,))


@dataclass
class ResultTable:
    """Per-UE rows plus optional Monte Carlo validation records."""

    setup: np.ndarray
    ue: np.ndarray
    estimator: np.ndarray
    scheme: np.ndarray
    sinr: np.ndarray
    se: np.ndarray
    validation: list = field(default_factory=list)

    def __len__(self):
        return len(self.se)

    @classmethod
    def from_rows(cls, rows, validation=()):
        rows = sorted(rows, key=lambda r: (r[0], r[1]))
        cols = list(zip(*rows)) if rows else [()] * 6
        return cls(
            setup=np.asarray(cols[0], dtype=int),
            ue=np.asarray(cols[1], dtype=int),
            estimator=np.asarray(cols[2], dtype=object),
            scheme=np.asarray(cols[3], dtype=object),
            sinr=np.asarray(cols[4], dtype=float),
            se=np.asarray(cols[5], dtype=float),
            validation=list(validation),
        )

    def rows(self):
        return zip(self.setup.tolist(), self.ue.tolist(), self.estimator.tolist(), self.scheme.tolist(), self.sinr.tolist(), self.se.tolist())

    def keys(self):
        """(estimator, scheme) pairs in first-appearance order."""
        seen = {}
        for e, s in zip(self.estimator, self.scheme):
            seen.setdefault((e, s), None)
        return list(seen)

    def select(self, estimator, scheme) -> np.ndarray:
        return self.se[(self.estimator == estimator) & (self.scheme == scheme)]

    def mean_se(self) -> dict:
        return {f"{e}/{s}": float(np.mean(self.select(e, s))) for e, s in self.keys()}

    def percentiles(self) -> dict:
        """SE at each 1% level of the pooled per-UE empirical CDF."""
        return {f"{e}/{s}": np.percentile(self.select(e, s), PERCENTILE_LEVELS, method="inverted_cdf").tolist() for e, s in self.keys()}


def run_setup(cfg: SimConfig, setup: int):
    """Closed-form SINR/SE rows (and optional validation) for one setup."""
    seq = setup_seed(cfg.master_seed, setup)
    rng = np.random.default_rng(seq)
    frame, powers = cfg.frame(), cfg.powers()
    try:
        net = generate_network(cfg.M, cfg.K, cfg.area(), cfg.shadow(), rng)
        assign = assign_pilots(net, cfg.tau_p, rng)
        stats = compute_statistics(net, assign, powers, frame)
        _, ul_power = powers.per_ue(cfg.K)
        rows = []
        for est in map(Estimator, cfg.estimators):
            reports = {}
            if "ul_single" in cfg.schemes or "ul_lsfd" in cfg.schemes:
                moments = ul_moments(stats, ul_power, est)
                for scheme in ("single", "lsfd"):
                    if f"ul_{scheme}" in cfg.schemes:
                        reports[f"ul_{scheme}"] = ul_report(moments, scheme, frame)
            for mode in (COHERENT, NONCOHERENT):
                if f"dl_{mode}" in cfg.schemes:
                    alloc = dl_power_allocation(stats, powers.dl_total_power, est, mode)
                    reports[f"dl_{mode}"] = dl_report(stats, alloc, powers.noise_dl, frame)
            for scheme in cfg.schemes:
                rep = reports[scheme]
                rows.extend((setup, k, est.value, scheme, float(rep.sinr[k]), float(rep.se[k])) for k in range(cfg.K))
        validation = []
        if cfg.mc_trials > 0:
            mc_seed = int(seq.generate_state(1)[0])
            validation = validate_instance(net, assign, powers, frame, cfg.mc_trials, mc_seed, batches=cfg.mc_batches, estimators=cfg.estimators)
            validation = [(setup, r) for r in validation]
    except CellFreeError as exc:
        raise type(exc)(f"setup {setup}: {exc}") from exc
    return rows, validation


def _run_setup_args(args):
    return run_setup(*args)


def run_sweep(cfg: SimConfig, workers: int = 1) -> ResultTable:
    """Run every setup; output does not depend on ``workers``."""
    jobs = [(cfg, s) for s in range(cfg.num_setups)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_setup_args, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [run_setup(*job) for job in jobs]
    rows = [r for res in results for r in res[0]]
    validation = [v for res in results for v in res[1]]
    return ResultTable.from_rows(rows, validation)


def emit_results(table: ResultTable, out_dir, config: SimConfig | None = None) -> list[str]:
    """Write ``rows.csv``, ``summary.json`` and, if present, ``validation.csv``.

    Returns the written paths.
    """
    if len(table) == 0:
        raise ValueError("result table is empty")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    rows_path = os.path.join(out_dir, "rows.csv")
    with open(rows_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROW_HEADER)
        for setup, ue, est, scheme, sinr, se in table.rows():
            writer.writerow((setup, ue, est, scheme, _fmt(sinr), _fmt(se)))
    paths.append(rows_path)

    summary = {
        "num_rows": len(table),
        "num_setups": int(len(np.unique(table.setup))),
        "mean_se": {k: float(_fmt(v)) for k, v in table.mean_se().items()},
        "percentile_levels": PERCENTILE_LEVELS.tolist(),
        "se_percentiles": {k: [float(_fmt(x)) for x in v] for k, v in table.percentiles().items()},
        "impractical": sorted(f"{e}/{s}" for e, s in table.keys() if (e, s) in IMPRACTICAL),
    }
    if config is not None:
        # The output location is not part of the result.
        summary["config"] = {k: v for k, v in config.to_dict().items() if k != "output"}
    if table.validation:
        summary["validation"] = {
            "checks": len(table.validation),
            "failures": sum(not r.passed for _, r in table.validation),
        }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(summary_path)

    if table.validation:
        val_path = os.path.join(out_dir, "validation.csv")
        with open(val_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(VALIDATION_HEADER)
            for setup, r in table.validation:
                writer.writerow((setup, r.name, _fmt(r.closed_form), _fmt(r.mc_value), _fmt(r.std_error), _fmt(r.z_score), int(r.passed)))
        paths.append(val_path)
    return paths


def read_rows(path) -> ResultTable:
    """Parse a ``rows.csv`` written by :func:`emit_results`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ROW_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = [(int(s), int(u), e, sc, float(g), float(se)) for s, u, e, sc, g, se in reader]
    return ResultTable.from_rows(rows)
