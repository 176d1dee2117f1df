"""Steering vectors and grid dictionaries for the BS ULA and the IRS UPA.

Grids are uniform in the spatial-frequency domain, ``2*pi*i/size`` for
``i = 0..size-1``.  Anchoring the first grid point at zero frequency makes
the set of pairwise frequency differences close on the grid, which the
cascade representation in :mod:`irscs.cascade` relies on.

Column ordering of ``f_p`` is x-major: column ``qx * m_grid_y + qy`` holds
``a_x(grid_u[qx]) kron a_y(grid_v[qy])``.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UlaSpec:
    n_antennas: int
    spacing: float = 0.5  # d / lambda

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError(f"n_antennas must be >= 1, got {self.n_antennas}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class UpaSpec:
    m_x: int
    m_y: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.m_x < 1 or self.m_y < 1:
            raise ValueError(f"UPA dimensions must be >= 1, got {self.m_x}x{self.m_y}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def m(self) -> int:
        return self.m_x * self.m_y


@dataclass(frozen=True)
class GridSpec:
    n_grid_tx: int
    m_grid_x: int
    m_grid_y: int

    def __post_init__(self):
        if min(self.n_grid_tx, self.m_grid_x, self.m_grid_y) < 1:
            raise ValueError("grid sizes must be >= 1")

    @property
    def m_grid(self) -> int:
        return self.m_grid_x * self.m_grid_y

    def tx_freqs(self) -> np.ndarray:
        return uniform_grid(self.n_grid_tx)

    def u_freqs(self) -> np.ndarray:
        return uniform_grid(self.m_grid_x)

    def v_freqs(self) -> np.ndarray:
        return uniform_grid(self.m_grid_y)


@dataclass(frozen=True)
class DictionarySet:
    """Grid dictionaries ``F_L`` (BS), ``F_x``, ``F_y`` and ``F_P = F_x kron F_y`` (IRS)."""

    ula: UlaSpec
    upa: UpaSpec
    grid: GridSpec
    f_l: np.ndarray = field(repr=False)
    f_x: np.ndarray = field(repr=False)
    f_y: np.ndarray = field(repr=False)
    f_p: np.ndarray = field(repr=False)


def uniform_grid(size: int) -> np.ndarray:
    return 2 * np.pi * np.arange(size) / size


def _steering(n: int, freq: float) -> np.ndarray:
    return np.exp(1j * np.arange(n) * freq) / np.sqrt(n)


def ula_steering(spec: UlaSpec, spatial_freq: float) -> np.ndarray:
    """ULA response ``exp(j k f) / sqrt(N)``, ``k = 0..N-1``."""
    return _steering(spec.n_antennas, spatial_freq)


def upa_steering(spec: UpaSpec, u: float, v: float) -> np.ndarray:
    """UPA response ``a_x(u) kron a_y(v)`` with unit 2-norm."""
    return np.kron(_steering(spec.m_x, u), _steering(spec.m_y, v))


def angles_to_spatial_freq(azimuth, elevation, spacing: float = 0.5):
    """Map (azimuth, elevation) of a UPA path to its spatial frequencies (u, v).

    ``u = 2 pi (d/lambda) cos(elevation)`` and
    ``v = 2 pi (d/lambda) sin(elevation) cos(azimuth)``.
    Works elementwise on arrays.
    """
    u = 2 * np.pi * spacing * np.cos(elevation)
    v = 2 * np.pi * spacing * np.sin(elevation) * np.cos(azimuth)
    return u, v


def ula_angle_to_spatial_freq(angle, spacing: float = 0.5):
    """Spatial frequency ``2 pi (d/lambda) sin(angle)`` of a ULA departure angle."""
    return 2 * np.pi * spacing * np.sin(angle)


def steering_matrix(n: int, freqs) -> np.ndarray:
    """Columns ``exp(j k f_i) / sqrt(n)`` for every frequency in ``freqs``."""
    freqs = np.asarray(freqs, dtype=float)
    return np.exp(1j * np.outer(np.arange(n), freqs)) / np.sqrt(n)


def build_dictionaries(ula: UlaSpec, upa: UpaSpec, grid: GridSpec) -> DictionarySet:
    if grid.n_grid_tx < ula.n_antennas:
        raise ValueError(f"n_grid_tx={grid.n_grid_tx} < N={ula.n_antennas}")
    if grid.m_grid_x < upa.m_x:
        raise ValueError(f"m_grid_x={grid.m_grid_x} < M_x={upa.m_x}")
    if grid.m_grid_y < upa.m_y:
        raise ValueError(f"m_grid_y={grid.m_grid_y} < M_y={upa.m_y}")
    f_l = steering_matrix(ula.n_antennas, grid.tx_freqs())
    f_x = steering_matrix(upa.m_x, grid.u_freqs())
    f_y = steering_matrix(upa.m_y, grid.v_freqs())
    f_p = np.kron(f_x, f_y)
    for arr in (f_l, f_x, f_y, f_p):
        arr.setflags(write=False)
    return DictionarySet(ula=ula, upa=upa, grid=grid, f_l=f_l, f_x=f_x, f_y=f_y, f_p=f_p)


def nearest_grid_index(freq, size: int):
    """Index of the grid point closest to ``freq`` on the periodic grid of ``size`` points."""
    idx = np.rint(np.mod(np.asarray(freq, dtype=float), 2 * np.pi) * size / (2 * np.pi))
    return np.mod(idx.astype(int), size)
