"""Monte Carlo harness: configuration, per-trial pipeline, sweeps and reporting.

A trial draws a channel, sends ``T`` random pilots at the requested SNR, runs
one estimator, rebuilds ``H_hat`` and scores it with NMSE and ARSPR.  SNR is
measured at the receiver: the noise variance is the trial's own mean
noise-free pilot power ``|v^H H w|^2`` divided by ``10**(snr_db/10)``.

Seeding is schedule-independent.  The channel of trial ``k`` depends only on
``(master_seed, k)``, so every algorithm and axis value sees the same channel
draws.  Pilots and noise depend on ``(master_seed, axis, axis_value,
algorithm, k)``.  Rows are sorted before the final CSV write, so the output
bytes do not depend on the worker count.
"""
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .arrays import GridSpec, UlaSpec, UpaSpec, build_dictionaries
from .beamforming import BeamformingConfig, MetricsRecord, arspr, nmse
from .cascade import (assemble_problem, build_representation, merge_coefficients,
                      reconstruct_h, x_to_lam)
from .channel import ChannelStatistics, draw_channel, grid_coefficients
from .solvers import (GampConfig, UnderdeterminedError, conventional_ls, default_residual_tol,
                      gamp_em_bg, omp, oracle_ls, oracle_support_from_truth, true_support)

logger = logging.getLogger(__name__)

ALGORITHMS = ("omp", "gamp", "oracle_ls", "conventional_ls")
AXES = ("t", "snr_db")
CSV_COLUMNS = ("axis_name", "axis_value", "algorithm", "trial", "seed", "nmse", "arspr",
               "iterations", "converged", "runtime_ms")


@dataclass
class ExperimentConfig:
    """Everything that determines a sweep's output.

    ``snr_db=None`` means noise-free pilots.  ``ls_pilots`` is the pilot count
    used by conventional LS when the sweep axis is SNR; on a ``t`` axis,
    conventional LS only runs at entries with ``T >= N M``.  ``gamp`` holds
    overrides for :class:`irscs.solvers.GampConfig`.  ``record_timing`` fills
    the ``runtime_ms`` column; it is off by default because wall-clock times
    would make the CSV non-reproducible.
    """
    n_antennas: int = 16
    m_x: int = 8
    m_y: int = 8
    spacing: float = 0.5
    n_grid_tx: int = 64
    m_grid_x: int = 32
    m_grid_y: int = 32
    rician_k_db: float = 13.2
    l_paths: int = 3
    lprime_paths: int = 3
    on_grid: bool = False
    axis_name: str = "snr_db"
    axis_values: list = field(default_factory=lambda: [10.0])
    t_pilots: int = 110
    snr_db: float | None = 10.0
    ls_pilots: int = 1524
    algorithms: list = field(default_factory=lambda: ["omp", "gamp", "oracle_ls"])
    trials: int = 100
    master_seed: int = 0
    omp_max_support: int = 32
    oracle_k: int | None = None
    beamforming_restarts: int = 8
    gamp: dict = field(default_factory=dict)
    record_timing: bool = False
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.axis_name not in AXES:
            raise ValueError(f"axis_name must be one of {AXES}, got {self.axis_name!r}")
        if not self.axis_values:
            raise ValueError("axis_values is empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {self.algorithms}")
        bad = set(self.gamp) - {f.name for f in dataclasses.fields(GampConfig)}
        if bad:
            raise ValueError(f"unknown gamp options: {sorted(bad)}")
        if self.axis_name == "t" and any(int(t) != t or t < 1 for t in self.axis_values):
            raise ValueError("T axis values must be positive integers")
        if "conventional_ls" in self.algorithms:
            nm = self.n_antennas * self.m_x * self.m_y
            if self.axis_name == "t" and max(self.axis_values) < nm:
                raise ValueError(f"conventional_ls needs some T >= NM={nm} on the T axis")
            if self.axis_name == "snr_db" and self.ls_pilots < nm:
                raise ValueError(f"ls_pilots={self.ls_pilots} < NM={nm}")
        # build the specs once so size errors surface at load time
        self.specs()

    def specs(self):
        ula = UlaSpec(self.n_antennas, self.spacing)
        upa = UpaSpec(self.m_x, self.m_y, self.spacing)
        grid = GridSpec(self.n_grid_tx, self.m_grid_x, self.m_grid_y)
        if grid.n_grid_tx < ula.n_antennas or grid.m_grid_x < upa.m_x or grid.m_grid_y < upa.m_y:
            raise ValueError("grids must be at least as large as the arrays")
        return ula, upa, grid

    def statistics(self) -> ChannelStatistics:
        return ChannelStatistics(rician_k_db=self.rician_k_db, l_paths=self.l_paths,
                                 lprime_paths=self.lprime_paths)

    def gamp_config(self) -> GampConfig:
        return GampConfig(**self.gamp)

    def cells(self):
        """``(axis_value, algorithm)`` pairs in output order, skipping LS entries with ``T < NM``."""
        nm = self.n_antennas * self.m_x * self.m_y
        out = []
        for value in self.axis_values:
            for alg in self.algorithms:
                if alg == "conventional_ls" and self.axis_name == "t" and value < nm:
                    continue
                out.append((value, alg))
        return out

    def operating_point(self, axis_value, algorithm) -> tuple[int, float | None]:
        """``(T, snr_db)`` used by ``algorithm`` at ``axis_value``."""
        if self.axis_name == "t":
            return int(axis_value), self.snr_db
        t = self.ls_pilots if algorithm == "conventional_ls" else self.t_pilots
        return t, (None if axis_value is None else float(axis_value))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


PRESETS = {
    # array and grid sizes of the reference scenario
    "paper": {},
    # reduced sizes for quick checks and demos
    "small": {"n_antennas": 4, "m_x": 4, "m_y": 4, "n_grid_tx": 16, "m_grid_x": 8, "m_grid_y": 8,
              "t_pilots": 40, "ls_pilots": 80, "omp_max_support": 16},
}

SWEEPS = {
    "sweep-t": {"axis_name": "t", "axis_values": [20, 40, 60, 80, 100, 110, 120, 140, 160],
                "snr_db": 10.0, "algorithms": ["omp", "gamp", "oracle_ls"]},
    "sweep-snr": {"axis_name": "snr_db", "axis_values": [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
                  "algorithms": ["omp", "gamp", "oracle_ls", "conventional_ls"]},
    "run": {},
}


def preset_config(preset: str = "paper", sweep: str = "run", **overrides) -> ExperimentConfig:
    """Config for a named preset and sweep kind; ``overrides`` win over both."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}")
    data = {**SWEEPS[sweep], **PRESETS[preset], **overrides}
    if preset == "small" and sweep == "sweep-t" and "axis_values" not in overrides:
        data["axis_values"] = [10, 20, 30, 40, 60, 80]
    return ExperimentConfig.from_dict(data)


# -- seeding -----------------------------------------------------------------

def _hash_seed(*parts) -> int:
    text = "|".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little") >> 1


def trial_seed(master_seed: int, axis_name: str, axis_value, algorithm: str, trial: int) -> int:
    """Seed for pilots, noise and beamforming restarts of one trial."""
    return _hash_seed(int(master_seed), axis_name, _canon(axis_value), algorithm, int(trial))


def channel_seed(master_seed: int, trial: int) -> int:
    """Seed for the channel draw; shared by all cells with the same trial index."""
    return _hash_seed(int(master_seed), "channel", int(trial))


def _canon(value):
    # 10 and 10.0 must hash alike
    return None if value is None else float(value)


# -- one trial ---------------------------------------------------------------

@dataclass
class TrialRow:
    axis_name: str
    axis_value: float
    trial: int
    metrics: MetricsRecord
    iterations: int
    converged: bool
    runtime_ms: float | None
    flags: tuple = ()

    def csv_fields(self) -> list[str]:
        m = self.metrics
        return [self.axis_name, _fmt(self.axis_value), m.algorithm, str(self.trial), str(m.seed),
                _fmt(m.nmse), _fmt(m.arspr), str(self.iterations),
                "true" if self.converged else "false",
                "" if self.runtime_ms is None else _fmt(round(self.runtime_ms, 3))]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@lru_cache(maxsize=4)
def _representation(ula: UlaSpec, upa: UpaSpec, grid: GridSpec):
    return build_representation(build_dictionaries(ula, upa, grid))


def run_trial(config: ExperimentConfig, axis_value, algorithm: str, trial_index: int) -> TrialRow:
    """Run one Monte Carlo trial and score it.

    Solver failures (non-convergence, numerical breakdown) are recorded in the
    row with ``converged=False`` and, when no estimate exists, NaN metrics.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    ula, upa, grid = config.specs()
    rep = _representation(ula, upa, grid)
    t, snr_db = config.operating_point(axis_value, algorithm)
    seed = trial_seed(config.master_seed, config.axis_name, axis_value, algorithm, trial_index)

    ch_rng = np.random.default_rng(channel_seed(config.master_seed, trial_index))
    stats = config.statistics()
    channel = draw_channel(ch_rng, ula, upa, stats, grid if config.on_grid else None)
    h_true = channel.h_cascade

    rng = np.random.default_rng(seed)
    if snr_db is None:
        problem = assemble_problem(channel, rep, t, rng, noise_std=0.0)
    else:
        problem = assemble_problem(channel, rep, t, rng, snr_db=snr_db)

    start = time.perf_counter()
    iterations, converged, flags, h_hat = 0, True, (), None
    try:
        if algorithm == "conventional_ls":
            vec_h = conventional_ls(problem.w_v(), problem.y)
            h_hat = vec_h.reshape(h_true.shape, order="F")
            iterations = 1
        else:
            if algorithm == "omp":
                est = omp(problem.operator, problem.y, max_support=min(config.omp_max_support, t),
                          residual_tol=default_residual_tol(problem.y, problem.noise_std))
            elif algorithm == "gamp":
                est = gamp_em_bg(problem.operator, problem.y, config.gamp_config())
            else:
                est = oracle_ls(problem.operator, problem.y, _oracle_support(config, channel, rep, stats, t))
            iterations, converged, flags = est.iterations, est.converged, tuple(est.flags)
            h_hat = reconstruct_h(x_to_lam(est.x_hat, grid.m_grid), rep.d_u, rep.dicts)
    except (np.linalg.LinAlgError, FloatingPointError, UnderdeterminedError) as exc:
        logger.warning("%s failed on trial %d: %s", algorithm, trial_index, exc)
        converged, flags = False, ("solver_error",)
    elapsed = (time.perf_counter() - start) * 1e3

    if h_hat is not None and np.all(np.isfinite(h_hat)):
        err = nmse(h_hat, h_true)
        ratio = arspr(h_hat, h_true, BeamformingConfig(restarts=config.beamforming_restarts,
                                                       seed=seed % 2 ** 32))
    else:
        err = ratio = float("nan")
        converged = False
    metrics = MetricsRecord(nmse=err, arspr=ratio, snr_db=snr_db, t_pilots=t,
                            algorithm=algorithm, seed=seed)
    return TrialRow(axis_name=config.axis_name, axis_value=axis_value, trial=trial_index,
                    metrics=metrics, iterations=int(iterations), converged=bool(converged),
                    runtime_ms=elapsed if config.record_timing else None, flags=flags)


def _oracle_support(config, channel, rep, stats, t):
    """True merged support on-grid; greedy surrogate support off-grid."""
    k = config.oracle_k or config.l_paths * config.lprime_paths
    if config.on_grid:
        ula, upa, grid = config.specs()
        alpha, sigma = grid_coefficients(channel, ula, upa, grid, stats)
        support = true_support(merge_coefficients(alpha, sigma, rep.merge))
    else:
        support = oracle_support_from_truth(channel.h_cascade, rep, min(k, t))
    return support[:t]


# -- sweeps ------------------------------------------------------------------

@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list
    aggregates: list

    def pilot_overhead(self) -> dict | None:
        """LS-to-CS pilot ratio when both conventional LS and a sparse method ran."""
        ts = {r.metrics.algorithm: r.metrics.t_pilots for r in self.rows}
        if "conventional_ls" not in ts or len(ts) < 2 or self.config.axis_name != "snr_db":
            return None
        t_cs = self.config.t_pilots
        return {"t_cs": t_cs, "t_ls": ts["conventional_ls"], "ratio": ts["conventional_ls"] / t_cs}


def _sort_key(config: ExperimentConfig):
    order = {cell: i for i, cell in enumerate(config.cells())}
    return lambda row: (order[(row.axis_value, row.metrics.algorithm)], row.trial)


def aggregate(rows) -> list[dict]:
    """Per-cell means and standard errors, in first-appearance order."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.axis_name, r.axis_value, r.metrics.algorithm), []).append(r)
    out = []
    for (axis_name, value, alg), members in cells.items():
        entry = {"axis_name": axis_name, "axis_value": value, "algorithm": alg,
                 "t_pilots": members[0].metrics.t_pilots, "snr_db": members[0].metrics.snr_db,
                 "n": len(members),
                 "converged_fraction": float(np.mean([m.converged for m in members]))}
        for key in ("nmse", "arspr"):
            vals = np.array([getattr(m.metrics, key) for m in members], dtype=float)
            entry[f"{key}_mean"] = float(np.mean(vals))
            entry[f"{key}_se"] = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        out.append(entry)
    return out


def _trial_task(args):
    config_dict, value, alg, k = args
    return run_trial(ExperimentConfig.from_dict(config_dict), value, alg, k)


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(r.csv_fields())


def run_sweep(config: ExperimentConfig, out: str | None = None, parallel: int = 1,
              progress=None) -> SweepResult:
    """Run every (axis value, algorithm, trial) and write CSV plus aggregate JSON.

    Rows are appended to ``<out>.partial`` as they finish, so an interrupted
    sweep leaves its completed trials on disk.  On completion the rows are
    sorted, written to ``out`` and the partial file is removed.  The aggregate
    JSON goes next to the CSV with a ``.json`` suffix.
    """
    out = out or config.output
    tasks = [(value, alg, k) for value, alg in config.cells() for k in range(config.trials)]
    partial = f"{out}.partial" if out else None
    rows = []
    fh = open(partial, "w", newline="") if partial else None
    writer = csv.writer(fh, lineterminator="\n") if fh else None
    if writer:
        writer.writerow(CSV_COLUMNS)
    try:
        if parallel > 1:
            cfg = config.to_dict()
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                results = pool.map(_trial_task, [(cfg, *task) for task in tasks])
                for row in results:
                    _collect(row, rows, writer, fh, progress, len(tasks))
        else:
            for value, alg, k in tasks:
                _collect(run_trial(config, value, alg, k), rows, writer, fh, progress, len(tasks))
    finally:
        if fh:
            fh.close()
    rows.sort(key=_sort_key(config))
    result = SweepResult(config=config, rows=rows, aggregates=aggregate(rows))
    if out:
        write_csv(rows, out)
        with open(os.path.splitext(out)[0] + ".json", "w") as jf:
            json.dump({"config": config.to_dict(), "cells": result.aggregates,
                       "pilot_overhead": result.pilot_overhead()}, jf, indent=2, default=_json_default)
            jf.write("\n")
        os.remove(partial)
    return result


def _collect(row, rows, writer, fh, progress, total):
    rows.append(row)
    if writer:
        writer.writerow(row.csv_fields())
        fh.flush()
    if progress:
        progress(len(rows), total, row)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_csv(path) -> list[dict]:
    """Rows of a sweep CSV with numeric fields parsed."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("axis_value", "nmse", "arspr"):
            r[key] = float(r[key]) if r[key] else math.nan
        for key in ("trial", "seed", "iterations"):
            r[key] = int(r[key])
        r["converged"] = r["converged"] == "true"
        r["runtime_ms"] = float(r["runtime_ms"]) if r["runtime_ms"] else None
    return rows
