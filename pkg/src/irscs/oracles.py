"""Brute-force reference computations used by ``irscs verify``.

Everything here materializes the full objects (``D``, ``D_bar``, the
Kronecker sensing matrix) or loops over scalars, so it is only meant for
small sizes.
"""
import numpy as np

from .arrays import steering_matrix, uniform_grid


def full_d(f_p: np.ndarray) -> np.ndarray:
    """``D = conj(F_P) . F_P``; row m is ``kron(conj(F_P[m]), F_P[m])``."""
    m, g = f_p.shape
    d = np.empty((m, g * g), dtype=complex)
    for row in range(m):
        d[row] = np.kron(np.conj(f_p[row]), f_p[row])
    return d


def full_d_bar(f_p: np.ndarray) -> np.ndarray:
    """``D_bar = F_P^T (Khatri-Rao) F_P^H``; column m is ``kron(F_P[m], conj(F_P[m]))``."""
    m, g = f_p.shape
    d_bar = np.empty((g * g, m), dtype=complex)
    for col in range(m):
        d_bar[:, col] = np.kron(f_p[col], np.conj(f_p[col]))
    return d_bar


def distinct_columns(mat: np.ndarray, tol: float = 1e-10):
    """Greedy dedup: ``(representatives, labels)`` with ``labels[n]`` the representative of column n."""
    reps: list[int] = []
    labels = np.empty(mat.shape[1], dtype=int)
    for n in range(mat.shape[1]):
        for k, r in enumerate(reps):
            if np.max(np.abs(mat[:, n] - mat[:, r])) <= tol:
                labels[n] = k
                break
        else:
            labels[n] = len(reps)
            reps.append(n)
    return reps, labels


def upa_dictionary(m_x: int, m_y: int, g_x: int, g_y: int) -> np.ndarray:
    """``F_x kron F_y`` on the periodic grids, without grid-size validation."""
    return np.kron(steering_matrix(m_x, uniform_grid(g_x)), steering_matrix(m_y, uniform_grid(g_y)))


def scalar_loop_g(paths, n: int, m_x: int, m_y: int, spacing: float = 0.5, pathloss: float = 1.0):
    """Entrywise evaluation of the BS->IRS geometric channel."""
    m = m_x * m_y
    g = np.zeros((m, n), dtype=complex)
    for p in paths:
        u = 2 * np.pi * spacing * np.cos(p.elevation)
        v = 2 * np.pi * spacing * np.sin(p.elevation) * np.cos(p.azimuth)
        f = 2 * np.pi * spacing * np.sin(p.departure)
        for ix in range(m_x):
            for iy in range(m_y):
                ar = np.exp(1j * (ix * u + iy * v)) / np.sqrt(m)
                for k in range(n):
                    at = np.exp(1j * k * f) / np.sqrt(n)
                    g[ix * m_y + iy, k] += p.gain * ar * np.conj(at)
    return np.sqrt(n * m / pathloss) * g
