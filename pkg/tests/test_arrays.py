import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irscs.arrays import (GridSpec, UlaSpec, UpaSpec, angles_to_spatial_freq, build_dictionaries,
                          nearest_grid_index, ula_steering, upa_steering, uniform_grid)


def dft_column(n, size, k):
    # independent generator: explicit loop over elements
    return np.array([np.exp(2j * np.pi * i * k / size) for i in range(n)]) / np.sqrt(n)


def test_ula_zero_frequency_is_flat():
    np.testing.assert_allclose(ula_steering(UlaSpec(4), 0.0), np.ones(4) / 2)


def test_ula_alternating_sign():
    np.testing.assert_allclose(ula_steering(UlaSpec(2), np.pi), np.array([1, -1]) / np.sqrt(2), atol=1e-15)


def test_ula_matches_dft_column():
    dicts = build_dictionaries(UlaSpec(16), UpaSpec(2, 2), GridSpec(64, 2, 2))
    a = ula_steering(UlaSpec(16), 2 * np.pi * 3 / 64)
    np.testing.assert_allclose(a, dft_column(16, 64, 3), atol=1e-14)
    np.testing.assert_allclose(dicts.f_l[:, 3], a, atol=1e-14)


def test_upa_small_cases():
    spec = UpaSpec(2, 2)
    np.testing.assert_allclose(upa_steering(spec, 0, 0), np.ones(4) / 2)
    np.testing.assert_allclose(upa_steering(spec, np.pi, 0), np.array([1, 1, -1, -1]) / 2, atol=1e-15)


def test_upa_elementwise_oracle():
    u, v = 2 * np.pi / 32, 2 * np.pi * 5 / 32
    ref = np.array([np.exp(1j * (kx * u + ky * v)) for kx in range(8) for ky in range(8)]) / 8
    np.testing.assert_allclose(upa_steering(UpaSpec(8, 8), u, v), ref, atol=1e-14)


@pytest.mark.parametrize("az, el, expected", [
    (0.0, np.pi / 2, (0.0, np.pi)),
    (np.pi / 2, np.pi / 2, (0.0, 0.0)),
    (np.pi / 3, np.pi / 4, (np.pi * np.sqrt(2) / 2, np.pi * np.sqrt(2) / 4)),
])
def test_angles_to_spatial_freq(az, el, expected):
    u, v = angles_to_spatial_freq(az, el, 0.5)
    np.testing.assert_allclose((u, v), expected, atol=1e-12)


def test_critical_grid_is_unitary():
    dicts = build_dictionaries(UlaSpec(4), UpaSpec(2, 3), GridSpec(4, 2, 3))
    np.testing.assert_allclose(dicts.f_l @ dicts.f_l.conj().T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(dicts.f_p.conj().T @ dicts.f_p, np.eye(6), atol=1e-10)


def test_reference_shapes():
    dicts = build_dictionaries(UlaSpec(16), UpaSpec(8, 8), GridSpec(64, 32, 32))
    assert dicts.f_l.shape == (16, 64)
    assert dicts.f_p.shape == (64, 1024)
    assert not dicts.f_p.flags.writeable


def test_grid_smaller_than_array_rejected():
    with pytest.raises(ValueError):
        build_dictionaries(UlaSpec(8), UpaSpec(2, 2), GridSpec(4, 2, 2))
    with pytest.raises(ValueError):
        build_dictionaries(UlaSpec(2), UpaSpec(4, 2), GridSpec(4, 2, 2))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), mx=st.integers(1, 4), my=st.integers(1, 4),
       extra=st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)))
def test_dictionary_invariants(n, mx, my, extra):
    grid = GridSpec(n + extra[0], mx + extra[1], my + extra[2])
    dicts = build_dictionaries(UlaSpec(n), UpaSpec(mx, my), grid)
    for mat in (dicts.f_l, dicts.f_x, dicts.f_y, dicts.f_p):
        np.testing.assert_allclose(np.linalg.norm(mat, axis=0), 1.0, atol=1e-12)
    # x-major column order of F_P
    u, v = uniform_grid(grid.m_grid_x), uniform_grid(grid.m_grid_y)
    for qx in range(grid.m_grid_x):
        for qy in range(grid.m_grid_y):
            np.testing.assert_allclose(dicts.f_p[:, qx * grid.m_grid_y + qy],
                                       upa_steering(UpaSpec(mx, my), u[qx], v[qy]), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 8), size=st.integers(1, 16), p=st.integers(0, 15), q=st.integers(0, 15))
def test_conjugate_shift_identity(m, size, p, q):
    p, q = p % size, q % size
    grid = uniform_grid(size)
    lhs = np.conj(ula_steering(UlaSpec(m), grid[p])) * ula_steering(UlaSpec(m), grid[q])
    rhs = ula_steering(UlaSpec(m), grid[(q - p) % size]) / np.sqrt(m)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_nearest_grid_index_wraps():
    assert nearest_grid_index(2 * np.pi - 1e-3, 8) == 0
    assert nearest_grid_index(-2 * np.pi / 8, 8) == 7
    assert nearest_grid_index(2 * np.pi * 3 / 8 + 0.1, 8) == 3
