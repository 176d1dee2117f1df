"""Self-check against brute-force references (``irscs verify``)."""
import itertools
from dataclasses import dataclass

import numpy as np

from . import oracles
from .arrays import GridSpec, UlaSpec, UpaSpec, build_dictionaries
from .beamforming import arspr, optimize_phases, received_power
from .cascade import (assemble_mimo_problem, assemble_problem, build_d_bar_u, build_d_u,
                      build_mimo_operator, build_representation, lam_to_x, merge_coefficients,
                      merge_mimo_coefficients, mimo_channel, reconstruct_h, sensing_row)
from .channel import ChannelStatistics, assemble_g, draw_channel, grid_coefficients, sample_paths

FAULTS = (None, "d_u")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _d_u(dicts, fault):
    d_u = build_d_u(dicts)
    if fault == "d_u":
        d_u = d_u.copy()
        d_u[-1, -1] *= np.exp(0.01j)
    return d_u


def check_dictionary_dedup(fault=None, tol=1e-10) -> Check:
    """Distinct columns of the full ``D`` are the first ``M_G`` columns, which equal ``D_u``."""
    worst, count = 0.0, 0
    for m_x, m_y, g_x, g_y in itertools.product((1, 2), (1, 2), range(1, 5), range(1, 5)):
        if g_x < m_x or g_y < m_y:
            continue
        dicts = build_dictionaries(UlaSpec(1), UpaSpec(m_x, m_y), GridSpec(1, g_x, g_y))
        d = oracles.full_d(dicts.f_p)
        m_grid = g_x * g_y
        d_u = _d_u(dicts, fault)
        reps, _ = oracles.distinct_columns(d, tol)
        reps_u, _ = oracles.distinct_columns(d[:, :m_grid], tol)
        if len(reps) != len(reps_u):
            return Check("dictionary dedup", False, f"extra distinct columns at {(m_x, m_y, g_x, g_y)}")
        worst = max(worst, float(np.max(np.abs(d[:, :m_grid] - d_u))))
        count += 1
    ok = worst <= tol
    return Check("dictionary dedup", ok, f"{count} grid combinations, max |D[:, :M_G] - D_u| = {worst:.1e}")


def _small_dicts():
    return build_dictionaries(UlaSpec(4), UpaSpec(3, 2), GridSpec(8, 6, 4))


def check_representation(fault=None, draws=20, tol=1e-10) -> Check:
    """``diag(h_r^H) G == D_u Lambda F_L^H`` on on-grid draws."""
    rng = np.random.default_rng(1)
    dicts = _small_dicts()
    rep = build_representation(dicts)
    d_u = _d_u(dicts, fault)
    stats = ChannelStatistics()
    worst = 0.0
    for _ in range(draws):
        ch = draw_channel(rng, dicts.ula, dicts.upa, stats, dicts.grid)
        alpha, sigma = grid_coefficients(ch, dicts.ula, dicts.upa, dicts.grid, stats)
        lam = merge_coefficients(alpha, sigma, rep.merge)
        h = ch.h_cascade
        worst = max(worst, np.linalg.norm(reconstruct_h(lam, d_u, dicts) - h) / np.linalg.norm(h))
    return Check("representation identity", worst <= tol, f"{draws} on-grid draws, max rel. error {worst:.1e}")


def check_sensing(fault=None, tol=1e-10) -> Check:
    """Measurements equal ``Phi x``, and the implicit operator equals the dense row stack."""
    rng = np.random.default_rng(2)
    dicts = _small_dicts()
    rep = build_representation(dicts)
    rep.d_u = _d_u(dicts, fault)
    stats = ChannelStatistics()
    ch = draw_channel(rng, dicts.ula, dicts.upa, stats, dicts.grid)
    alpha, sigma = grid_coefficients(ch, dicts.ula, dicts.upa, dicts.grid, stats)
    x = lam_to_x(merge_coefficients(alpha, sigma, rep.merge))
    prob = assemble_problem(ch, rep, 12, rng, noise_std=0.0)
    dense = np.stack([sensing_row(w, v, dicts, rep.d_u) for w, v in zip(prob.precoders, prob.phase_vectors)])
    op = prob.operator
    z = rng.standard_normal(dense.shape[1]) + 1j * rng.standard_normal(dense.shape[1])
    s = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    errs = [np.max(np.abs(dense @ x - prob.y)) / np.max(np.abs(prob.y)),
            np.max(np.abs(op.matvec(z) - dense @ z)) / np.max(np.abs(dense @ z)),
            np.max(np.abs(op.rmatvec(s) - dense.conj().T @ s)) / np.max(np.abs(dense.conj().T @ s))]
    worst = float(max(errs))
    return Check("sensing operator", worst <= tol, f"y vs Phi x and implicit vs dense, max rel. error {worst:.1e}")


def check_mimo(fault=None, draws=20, tol=1e-10) -> Check:
    """``vec(H_bar) = K x_bar`` and ``y = W_f K x_bar`` at small scale."""
    rng = np.random.default_rng(3)
    dicts = build_dictionaries(UlaSpec(2), UpaSpec(2, 2), GridSpec(2, 2, 2))
    rx = UlaSpec(2)
    d_bar = oracles.full_d_bar(dicts.f_p)
    m_grid = dicts.grid.m_grid
    worst = float(np.max(np.abs(d_bar[:m_grid] - build_d_bar_u(dicts))))
    for _ in range(draws):
        v = np.exp(2j * np.pi * rng.random(dicts.upa.m))
        mimo = build_mimo_operator(dicts, rx, 2, v)
        sigma = np.zeros((m_grid, 2), dtype=complex)
        gamma = np.zeros((2, m_grid), dtype=complex)
        sigma[rng.integers(m_grid), rng.integers(2)] = 1 + 1j * rng.standard_normal()
        gamma[rng.integers(2), rng.integers(m_grid)] = rng.standard_normal() + 1j
        x_bar = merge_mimo_coefficients(sigma, gamma, mimo.merge).reshape(-1, order="F")
        h_bar = mimo_channel(mimo, sigma, gamma)
        worst = max(worst, float(np.max(np.abs(mimo.k_op @ x_bar - h_bar.reshape(-1, order="F")))))
        w_f, y = assemble_mimo_problem(mimo, x_bar, 6, rng)
        worst = max(worst, float(np.max(np.abs(y - w_f @ h_bar.reshape(-1, order="F")))))
    return Check("MIMO chain identity", worst <= tol, f"{draws} draws, max abs error {worst:.1e}")


def check_beamforming(fault=None, draws=20) -> Check:
    """Rank-1 channels reach the analytic optimum ``(sum |a_m|)^2 ||b||^2``."""
    rng = np.random.default_rng(4)
    worst = 1.0
    for _ in range(draws):
        a = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        h = np.outer(a, b.conj())
        best = np.sum(np.abs(a)) ** 2 * np.linalg.norm(b) ** 2
        worst = min(worst, received_power(h, optimize_phases(h, rng=rng)) / best)
    self_ratio = arspr(h, h)
    ok = worst >= 0.999 and abs(self_ratio - 1) <= 1e-9
    return Check("rank-1 beamforming optimum", ok, f"worst ratio {worst:.6f}, arspr(H, H) = {self_ratio:.12f}")


def check_geometry(fault=None, tol=1e-10) -> Check:
    """Vectorized ``G`` matches a scalar loop over paths and elements."""
    rng = np.random.default_rng(5)
    ula, upa = UlaSpec(3), UpaSpec(2, 3)
    paths = sample_paths(rng, 3)
    g = assemble_g(paths, ula, upa)
    ref = oracles.scalar_loop_g(paths, 3, 2, 3)
    worst = float(np.max(np.abs(g - ref)))
    return Check("geometric channel", worst <= tol, f"max abs error {worst:.1e}")


CHECKS = (check_dictionary_dedup, check_representation, check_sensing, check_mimo,
          check_beamforming, check_geometry)


def verify_suite(fault=None, out=print) -> list[Check]:
    """Run every check, print a checklist and return the results.

    ``fault="d_u"`` perturbs one entry of ``D_u`` before use, as a negative control.
    """
    if fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    results = [check(fault) for check in CHECKS]
    for c in results:
        out(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    return results
