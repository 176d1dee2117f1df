"""Joint active/passive beamforming on a cascade channel and the two evaluation metrics.

The IRS phase vector ``v`` (unit modulus) is chosen to maximize the received
power ``||v^H H||^2`` by projected power iteration,
``v <- exp(j arg(H H^H v))``, which never decreases the objective.  The BS
precoder is then maximum-ratio transmission along ``(v^H H)^H``.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class BeamformingResult:
    v_opt: np.ndarray
    w_opt: np.ndarray
    objective: float
    restarts_used: int
    flags: tuple = ()


@dataclass
class BeamformingConfig:
    restarts: int = 8
    max_iters: int = 200
    tol: float = 1e-10
    seed: int = 0


@dataclass
class MetricsRecord:
    nmse: float
    arspr: float
    snr_db: float
    t_pilots: int
    algorithm: str
    seed: int


def received_power(h: np.ndarray, v: np.ndarray) -> float:
    """``||v^H H||_2^2``."""
    return float(np.sum(np.abs(np.conj(v) @ h) ** 2))


def _power_iterate(gram, v, max_iters, tol, trace=None):
    obj = float(np.real(np.vdot(v, gram @ v)))
    if trace is not None:
        trace.append(obj)
    for _ in range(max_iters):
        g = gram @ v
        # zero components keep their current phase
        v_new = np.where(np.abs(g) > 0, np.exp(1j * np.angle(g)), v)
        new_obj = float(np.real(np.vdot(v_new, gram @ v_new)))
        if trace is not None:
            trace.append(new_obj)
        v, improved = v_new, new_obj - obj
        obj = new_obj
        if improved <= tol * max(abs(obj), 1.0):
            break
    return v, obj


def optimize_phases(h: np.ndarray, restarts: int = 8, max_iters: int = 200, tol: float = 1e-10,
                    rng: np.random.Generator | None = None, trace: list | None = None) -> np.ndarray:
    """Unit-modulus ``v`` approximately maximizing ``v^H (H H^H) v``.

    Runs projected power iteration from the all-ones vector and from
    ``restarts`` random phase vectors; returns the best.  ``H = 0`` gives the
    all-ones vector.  If ``trace`` is a list, the objective after every
    iteration of every run is appended to it.
    """
    h = np.asarray(h)
    m = h.shape[0]
    ones = np.ones(m, dtype=complex)
    if not np.any(h):
        return ones
    rng = rng if rng is not None else np.random.default_rng(0)
    gram = h @ h.conj().T
    starts = [ones] + [np.exp(2j * np.pi * rng.random(m)) for _ in range(restarts)]
    best_v, best_obj = ones, -np.inf
    for v0 in starts:
        v, obj = _power_iterate(gram, v0, max_iters, tol, trace)
        if obj > best_obj:
            best_v, best_obj = v, obj
    return best_v


def mrt_precoder(h: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, bool]:
    """Unit-norm ``w`` along ``(v^H H)^H``; returns ``(w, degenerate)``.

    A zero effective channel gives ``w = e_1`` and ``degenerate=True``.
    """
    eff = np.conj(v) @ h
    nrm = np.linalg.norm(eff)
    if nrm == 0:
        w = np.zeros(h.shape[1], dtype=complex)
        w[0] = 1
        return w, True
    return np.conj(eff) / nrm, False


def beamform(h: np.ndarray, config: BeamformingConfig | None = None) -> BeamformingResult:
    cfg = config or BeamformingConfig()
    v = optimize_phases(h, cfg.restarts, cfg.max_iters, cfg.tol, np.random.default_rng(cfg.seed))
    w, degenerate = mrt_precoder(h, v)
    return BeamformingResult(v_opt=v, w_opt=w, objective=received_power(h, v),
                             restarts_used=cfg.restarts,
                             flags=("zero_effective_channel",) if degenerate else ())


def nmse(h_hat: np.ndarray, h_true: np.ndarray) -> float:
    """``||H_hat - H||_F^2 / ||H||_F^2`` for one trial."""
    h_hat, h_true = np.asarray(h_hat), np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    den = np.linalg.norm(h_true) ** 2
    if den == 0:
        raise ValueError("true channel is zero")
    return float(np.linalg.norm(h_hat - h_true) ** 2 / den)


def arspr(h_hat: np.ndarray, h_true: np.ndarray, config: BeamformingConfig | None = None) -> float:
    """Receive-power ratio ``||v^H H||^2 / ||v*^H H||^2``, both on the true channel.

    ``v`` is optimized on ``h_hat``, ``v*`` on ``h_true``, each with the same
    restart seed so identical inputs give identical phase vectors.
    """
    cfg = config or BeamformingConfig()
    h_hat, h_true = np.asarray(h_hat), np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    if not np.any(h_true):
        raise ValueError("true channel is zero")
    v = optimize_phases(h_hat, cfg.restarts, cfg.max_iters, cfg.tol, np.random.default_rng(cfg.seed))
    v_star = optimize_phases(h_true, cfg.restarts, cfg.max_iters, cfg.tol, np.random.default_rng(cfg.seed))
    return received_power(h_true, v) / received_power(h_true, v_star)
