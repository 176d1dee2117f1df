"""Geometric Rician channels for the BS->IRS link ``G`` and the IRS->user link ``h_r``.

Every channel has one LOS path with fixed power and uniformly random phase
plus ``L - 1`` NLOS paths with equal-variance circular Gaussian gains.
The Rician factor is the LOS/NLOS power ratio and the total mean path power
is one.  Angles are uniform on ``[-pi/2, pi/2]`` and off-grid unless a
:class:`~irscs.arrays.GridSpec` is passed to snap them.
"""
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .arrays import (
    GridSpec,
    UlaSpec,
    UpaSpec,
    angles_to_spatial_freq,
    nearest_grid_index,
    ula_angle_to_spatial_freq,
    uniform_grid,
    steering_matrix,
)


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    azimuth: float
    elevation: float
    is_los: bool = False
    # BS departure angle; only meaningful for paths of G
    departure: float = 0.0


@dataclass(frozen=True)
class ChannelStatistics:
    rician_k_db: float = 13.2
    l_paths: int = 3
    lprime_paths: int = 3
    pathloss_g: float = 1.0
    pathloss_hr: float = 1.0

    def __post_init__(self):
        if self.l_paths < 1 or self.lprime_paths < 1:
            raise ValueError("path counts must be >= 1")
        if not (self.pathloss_g > 0 and self.pathloss_hr > 0):
            raise ValueError("path losses must be positive")


@dataclass
class ChannelRealization:
    g: np.ndarray = field(repr=False)
    h_r: np.ndarray = field(repr=False)
    h_cascade: np.ndarray = field(repr=False)
    paths_g: list
    paths_hr: list
    on_grid: bool = False

    def to_json(self) -> str:
        """Dump paths and matrices as JSON (complex values as ``[re, im]`` pairs)."""

        def cplx(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        def path(p):
            d = asdict(p)
            d["gain"] = [float(np.real(p.gain)), float(np.imag(p.gain))]
            return d

        return json.dumps(
            {
                "on_grid": self.on_grid,
                "paths_g": [path(p) for p in self.paths_g],
                "paths_hr": [path(p) for p in self.paths_hr],
                "g": cplx(self.g),
                "h_r": cplx(self.h_r),
                "h_cascade": cplx(self.h_cascade),
            }
        )


def rician_powers(count: int, rician_k_db: float) -> tuple[float, float]:
    """LOS power and per-path NLOS variance for unit total power."""
    if count < 1:
        raise ValueError(f"path count must be >= 1, got {count}")
    if count == 1:
        return 1.0, 0.0
    k = 10 ** (rician_k_db / 10)
    return k / (1 + k), 1 / ((1 + k) * (count - 1))


def sample_paths(rng: np.random.Generator, count: int, rician_k_db: float = 13.2) -> list:
    """Draw one LOS path and ``count - 1`` NLOS paths."""
    p_los, var_nlos = rician_powers(count, rician_k_db)
    gains = np.empty(count, dtype=complex)
    gains[0] = np.sqrt(p_los) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    gains[1:] = np.sqrt(var_nlos / 2) * (
        rng.standard_normal(count - 1) + 1j * rng.standard_normal(count - 1)
    )
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=(count, 3))
    return [
        PathComponent(
            gain=complex(gains[i]),
            azimuth=float(angles[i, 0]),
            elevation=float(angles[i, 1]),
            is_los=i == 0,
            departure=float(angles[i, 2]),
        )
        for i in range(count)
    ]


def _irs_freqs(paths, upa: UpaSpec, grid: GridSpec | None):
    az = np.array([p.azimuth for p in paths])
    el = np.array([p.elevation for p in paths])
    u, v = angles_to_spatial_freq(az, el, upa.spacing)
    if grid is not None:
        u = uniform_grid(grid.m_grid_x)[nearest_grid_index(u, grid.m_grid_x)]
        v = uniform_grid(grid.m_grid_y)[nearest_grid_index(v, grid.m_grid_y)]
    return u, v


def _bs_freqs(paths, ula: UlaSpec, grid: GridSpec | None):
    f = ula_angle_to_spatial_freq(np.array([p.departure for p in paths]), ula.spacing)
    if grid is not None:
        f = uniform_grid(grid.n_grid_tx)[nearest_grid_index(f, grid.n_grid_tx)]
    return f


def _irs_response(paths, upa: UpaSpec, grid: GridSpec | None) -> np.ndarray:
    u, v = _irs_freqs(paths, upa, grid)
    ax = steering_matrix(upa.m_x, u)
    ay = steering_matrix(upa.m_y, v)
    # column l = a_x(u_l) kron a_y(v_l)
    return (ax[:, None, :] * ay[None, :, :]).reshape(upa.m, len(paths))


def assemble_g(paths, ula: UlaSpec, upa: UpaSpec, pathloss: float = 1.0,
               grid: GridSpec | None = None) -> np.ndarray:
    """``G = sqrt(NM / rho) sum_l gain_l a_r(az_l, el_l) a_t(dep_l)^H``.

    With ``grid`` set, every spatial frequency is snapped to its nearest grid point.
    """
    if not paths:
        raise ValueError("need at least one path")
    gains = np.array([p.gain for p in paths])
    a_r = _irs_response(paths, upa, grid)
    a_t = steering_matrix(ula.n_antennas, _bs_freqs(paths, ula, grid))
    scale = np.sqrt(ula.n_antennas * upa.m / pathloss)
    return scale * (a_r * gains) @ a_t.conj().T


def assemble_hr(paths, upa: UpaSpec, pathloss: float = 1.0,
                grid: GridSpec | None = None) -> np.ndarray:
    """``h_r = sqrt(M / eps) sum_l gain_l a_r(az_l, el_l)``."""
    if not paths:
        raise ValueError("need at least one path")
    gains = np.array([p.gain for p in paths])
    return np.sqrt(upa.m / pathloss) * _irs_response(paths, upa, grid) @ gains


def cascade(g: np.ndarray, h_r: np.ndarray) -> np.ndarray:
    """Cascade channel ``diag(h_r^H) G``: row m of G scaled by ``conj(h_r[m])``."""
    if g.shape[0] != h_r.shape[0]:
        raise ValueError(f"shape mismatch: G {g.shape}, h_r {h_r.shape}")
    return np.conj(h_r)[:, None] * g


def grid_coefficients(realization: ChannelRealization, ula: UlaSpec, upa: UpaSpec,
                      grid: GridSpec, stats: ChannelStatistics | None = None):
    """Sparse grid coefficients ``(alpha, sigma)`` of an on-grid realization.

    ``h_r = F_P alpha`` and ``G = F_P sigma F_L^H`` hold exactly when the
    realization was drawn with the same ``grid``.
    """
    stats = stats or ChannelStatistics()
    m, n = upa.m, ula.n_antennas

    def irs_index(paths):
        u, v = _irs_freqs(paths, upa, grid)
        return nearest_grid_index(u, grid.m_grid_x) * grid.m_grid_y + nearest_grid_index(v, grid.m_grid_y)

    alpha = np.zeros(grid.m_grid, dtype=complex)
    np.add.at(alpha, irs_index(realization.paths_hr),
              np.sqrt(m / stats.pathloss_hr) * np.array([p.gain for p in realization.paths_hr]))
    sigma = np.zeros((grid.m_grid, grid.n_grid_tx), dtype=complex)
    tx = nearest_grid_index(_bs_freqs(realization.paths_g, ula, grid), grid.n_grid_tx)
    np.add.at(sigma, (irs_index(realization.paths_g), tx),
              np.sqrt(n * m / stats.pathloss_g) * np.array([p.gain for p in realization.paths_g]))
    return alpha, sigma


def draw_channel(rng: np.random.Generator, ula: UlaSpec, upa: UpaSpec,
                 stats: ChannelStatistics | None = None,
                 grid: GridSpec | None = None) -> ChannelRealization:
    """Draw ``G``, ``h_r`` and the cascade ``H``; on-grid when ``grid`` is given."""
    stats = stats or ChannelStatistics()
    paths_g = sample_paths(rng, stats.l_paths, stats.rician_k_db)
    paths_hr = sample_paths(rng, stats.lprime_paths, stats.rician_k_db)
    g = assemble_g(paths_g, ula, upa, stats.pathloss_g, grid)
    h_r = assemble_hr(paths_hr, upa, stats.pathloss_hr, grid)
    return ChannelRealization(
        g=g, h_r=h_r, h_cascade=cascade(g, h_r),
        paths_g=paths_g, paths_hr=paths_hr, on_grid=grid is not None,
    )


def received_sample(h_cascade: np.ndarray, w: np.ndarray, v_phase: np.ndarray,
                    noise_std: float = 0.0, rng: np.random.Generator | None = None) -> complex:
    """One pilot observation ``v^H H w + noise`` (pilot symbol fixed to 1)."""
    v_phase = np.asarray(v_phase)
    if not np.allclose(np.abs(v_phase), 1.0, rtol=0, atol=1e-9):
        raise ValueError("IRS phase vector must be unit-modulus")
    y = np.vdot(v_phase, h_cascade @ w)
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        y += noise_std * complex_normal(rng, ())
    return complex(y)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
