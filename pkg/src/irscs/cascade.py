"""Sparse representation of the cascade channel and its pilot sensing operator.

On the periodic grid, ``conj(a(u_p)) * a(u_q)`` depends only on ``u_q - u_p``,
so the transposed Khatri-Rao product ``D = conj(F_P) . F_P`` has just ``M_G``
distinct columns, the first ``M_G``.  The cascade channel then reads

    H = D_u @ Lambda @ F_L^H,   Lambda[i, :] = sum_{(p, q) in S_i} conj(alpha_p) Sigma[q, :]

and every pilot observation is a row of a Kronecker-structured operator
acting on ``x = vec(Lambda)`` (column-major, index ``j * M_G + i``).
"""
from dataclasses import dataclass, field

import numpy as np

from .arrays import DictionarySet, GridSpec, UlaSpec, steering_matrix, uniform_grid
from .channel import ChannelRealization, complex_normal


@dataclass(frozen=True)
class MergeMap:
    """Partition of the ``M_G**2`` pair indices ``n = p * M_G + q`` into ``M_G`` classes.

    Pair ``(p, q)`` with 2-D grid indices ``(px, py)``, ``(qx, qy)`` belongs to
    class ``((qx - px) % Gx) * Gy + (qy - py) % Gy``.
    """

    m_grid_x: int
    m_grid_y: int

    @property
    def m_grid(self) -> int:
        return self.m_grid_x * self.m_grid_y

    def class_of(self, p, q):
        px, py = np.divmod(np.asarray(p), self.m_grid_y)
        qx, qy = np.divmod(np.asarray(q), self.m_grid_y)
        return np.mod(qx - px, self.m_grid_x) * self.m_grid_y + np.mod(qy - py, self.m_grid_y)

    def class_of_pair_index(self, n):
        p, q = np.divmod(np.asarray(n), self.m_grid)
        return self.class_of(p, q)

    def table(self) -> np.ndarray:
        """Class of every pair index, shape ``(M_G**2,)``."""
        return self.class_of_pair_index(np.arange(self.m_grid ** 2))

    def members(self, i: int) -> np.ndarray:
        """Pair indices in class ``i`` (sorted); always ``M_G`` of them."""
        p = np.arange(self.m_grid)
        px, py = np.divmod(p, self.m_grid_y)
        ix, iy = divmod(int(i), self.m_grid_y)
        q = np.mod(px + ix, self.m_grid_x) * self.m_grid_y + np.mod(py + iy, self.m_grid_y)
        return np.sort(p * self.m_grid + q)


def build_merge_map(grid: GridSpec) -> MergeMap:
    return MergeMap(grid.m_grid_x, grid.m_grid_y)


def build_d_u(dicts: DictionarySet) -> np.ndarray:
    """Distinct columns of ``D``: ``conj(F_P[:, 0]) * F_P[:, q]`` for every q.

    The first grid point sits at frequency zero, so this also equals
    ``F_P / sqrt(M)``; both forms are computed and checked against each other.
    """
    f_p = dicts.f_p
    d_u = np.conj(f_p[:, :1]) * f_p
    shortcut = f_p / np.sqrt(f_p.shape[0])
    if not np.allclose(d_u, shortcut, rtol=0, atol=1e-12):
        raise ValueError("F_P[:, 0] is not the zero-frequency atom; grid must start at 0")
    return d_u


@dataclass
class CascadeRepresentation:
    dicts: DictionarySet = field(repr=False)
    d_u: np.ndarray = field(repr=False)
    merge: MergeMap
    lam: np.ndarray | None = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray | None:
        return None if self.lam is None else lam_to_x(self.lam)

    @property
    def n_coeffs(self) -> int:
        return self.dicts.grid.m_grid * self.dicts.grid.n_grid_tx


def build_representation(dicts: DictionarySet) -> CascadeRepresentation:
    return CascadeRepresentation(dicts=dicts, d_u=build_d_u(dicts), merge=build_merge_map(dicts.grid))


def lam_to_x(lam: np.ndarray) -> np.ndarray:
    return np.asarray(lam).reshape(-1, order="F")


def x_to_lam(x: np.ndarray, m_grid: int) -> np.ndarray:
    return np.asarray(x).reshape(m_grid, -1, order="F")


def merge_coefficients(alpha: np.ndarray, sigma: np.ndarray, merge: MergeMap) -> np.ndarray:
    """Merged coefficients ``Lambda[i, :] = sum_{(p,q) in S_i} conj(alpha_p) sigma[q, :]``."""
    lam = np.zeros(sigma.shape, dtype=complex)
    q_all = np.arange(merge.m_grid)
    for p in np.flatnonzero(alpha):
        rows = merge.class_of(p, q_all)
        np.add.at(lam, rows, np.conj(alpha[p]) * sigma)
    return lam


def reconstruct_h(lam: np.ndarray, d_u: np.ndarray, dicts: DictionarySet) -> np.ndarray:
    """``H_hat = D_u Lambda F_L^H``."""
    return d_u @ lam @ dicts.f_l.conj().T


def sensing_row(w: np.ndarray, v_phase: np.ndarray, dicts: DictionarySet, d_u: np.ndarray) -> np.ndarray:
    """Row ``(w^T conj(F_L)) kron (v^H D_u)`` of the sensing matrix."""
    return np.kron(w @ dicts.f_l.conj(), np.conj(v_phase) @ d_u)


class DenseOperator:
    """Linear operator view of an explicit matrix."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix)
        self.shape = self.matrix.shape

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, s):
        return self.matrix.conj().T @ s

    def columns(self, idx):
        return self.matrix[:, idx]

    def col_norms_sq(self):
        return np.sum(np.abs(self.matrix) ** 2, axis=0)

    def dense(self):
        return self.matrix


class KroneckerRowOperator:
    """Operator whose row t is ``kron(a[t], b[t])``.

    Products cost two small matrix multiplies; the ``T x (n_a * n_b)`` matrix
    is only formed on request by :meth:`dense`.
    """

    def __init__(self, a, b):
        self.a = np.asarray(a)
        self.b = np.asarray(b)
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError("factor row counts differ")
        self.n_a = self.a.shape[1]
        self.n_b = self.b.shape[1]
        self.shape = (self.a.shape[0], self.n_a * self.n_b)

    def matvec(self, x):
        mat = np.asarray(x).reshape(self.n_a, self.n_b).T
        return np.sum((self.b @ mat) * self.a, axis=1)

    def rmatvec(self, s):
        z = self.b.conj().T @ (np.asarray(s)[:, None] * self.a.conj())
        return z.T.reshape(-1)

    def columns(self, idx):
        j, i = np.divmod(np.asarray(idx), self.n_b)
        return self.a[:, j] * self.b[:, i]

    def col_norms_sq(self):
        z = (np.abs(self.b) ** 2).T @ (np.abs(self.a) ** 2)
        return z.T.reshape(-1)

    def dense(self):
        return (self.a[:, :, None] * self.b[:, None, :]).reshape(self.shape[0], -1)


def as_operator(phi):
    return phi if hasattr(phi, "rmatvec") else DenseOperator(phi)


@dataclass
class SensingProblem:
    precoders: np.ndarray = field(repr=False)      # (T, N), row t is w(t)
    phase_vectors: np.ndarray = field(repr=False)  # (T, M), row t is v(t)
    operator: KroneckerRowOperator = field(repr=False)
    y: np.ndarray = field(repr=False)
    noise_std: float
    signal_power: float

    @property
    def t(self) -> int:
        return self.y.shape[0]

    @property
    def phi(self) -> np.ndarray:
        return self.operator.dense()

    def w_v(self) -> np.ndarray:
        """Rows ``w(t)^T kron v(t)^H`` acting on ``vec(H)``."""
        return training_matrix(self.precoders, self.phase_vectors)


def training_matrix(precoders: np.ndarray, phase_vectors: np.ndarray) -> np.ndarray:
    t = precoders.shape[0]
    return (precoders[:, :, None] * np.conj(phase_vectors)[:, None, :]).reshape(t, -1)


def random_training(rng: np.random.Generator, t: int, n: int, m: int):
    """Unit-modulus random phases: ``w(t)`` scaled by ``1/sqrt(N)``, ``v(t)`` unscaled."""
    w = np.exp(2j * np.pi * rng.random((t, n))) / np.sqrt(n)
    v = np.exp(2j * np.pi * rng.random((t, m)))
    return w, v


def noise_std_for_snr(signal_power: float, snr_db: float) -> float:
    return float(np.sqrt(signal_power / 10 ** (snr_db / 10)))


def assemble_problem(channel: ChannelRealization, rep: CascadeRepresentation, t: int,
                     rng: np.random.Generator, noise_std: float | None = None,
                     snr_db: float | None = None, training=None) -> SensingProblem:
    """Draw ``t`` pilots, observe ``y(t) = v(t)^H H w(t) + noise`` and build the operator.

    Give either ``noise_std`` directly or ``snr_db``; the latter sets the noise
    variance to the mean noise-free pilot power divided by ``10**(snr_db/10)``.
    ``training`` overrides the random ``(precoders, phase_vectors)`` pair.
    """
    if t < 1:
        raise ValueError(f"need at least one pilot, got T={t}")
    if noise_std is not None and snr_db is not None:
        raise ValueError("give noise_std or snr_db, not both")
    h = channel.h_cascade
    m, n = h.shape
    if training is None:
        w, v = random_training(rng, t, n, m)
    else:
        w, v = (np.asarray(a) for a in training)
        if w.shape != (t, n) or v.shape != (t, m):
            raise ValueError("training shapes do not match (T, N) and (T, M)")
        if not np.allclose(np.abs(v), 1.0, rtol=0, atol=1e-9):
            raise ValueError("IRS phase vectors must be unit-modulus")
    clean = np.einsum("tm,mn,tn->t", np.conj(v), h, w)
    signal_power = float(np.mean(np.abs(clean) ** 2))
    if snr_db is not None:
        noise_std = noise_std_for_snr(signal_power, snr_db)
    noise_std = float(noise_std or 0.0)
    noise = complex_normal(rng, t)
    y = clean + noise_std * noise if noise_std > 0 else clean
    dicts = rep.dicts
    op = KroneckerRowOperator(w @ dicts.f_l.conj(), np.conj(v) @ rep.d_u)
    return SensingProblem(precoders=w, phase_vectors=v, operator=op, y=y,
                          noise_std=noise_std, signal_power=signal_power)


# -- multi-antenna receiver -------------------------------------------------


@dataclass
class MimoRepresentation:
    dicts: DictionarySet = field(repr=False)
    f_r: np.ndarray = field(repr=False)
    d_bar_u: np.ndarray = field(repr=False)
    k_op: np.ndarray = field(repr=False)
    v_phase: np.ndarray = field(repr=False)
    merge: MergeMap

    @property
    def n_r(self) -> int:
        return self.f_r.shape[0]


def build_d_bar_u(dicts: DictionarySet) -> np.ndarray:
    """First ``M_G`` rows of ``F_P^T (Khatri-Rao) F_P^H``: ``F_P[:, 0] * conj(F_P[:, q])``."""
    f_p = dicts.f_p
    return (f_p[:, :1] * np.conj(f_p)).T


def build_mimo_operator(dicts: DictionarySet, rx: UlaSpec, n_grid_rx: int,
                        v_phase: np.ndarray) -> MimoRepresentation:
    """``K = (D_bar_u conj(v))^T kron (conj(F_L) kron F_r)`` for a fixed IRS phase vector.

    ``v_phase`` follows the same convention as the single-antenna model, so the
    IRS reflection matrix is ``diag(conj(v_phase))``.
    """
    v_phase = np.asarray(v_phase)
    if not np.allclose(np.abs(v_phase), 1.0, rtol=0, atol=1e-9):
        raise ValueError("IRS phase vector must be unit-modulus")
    if n_grid_rx < rx.n_antennas:
        raise ValueError(f"n_grid_rx={n_grid_rx} < N_r={rx.n_antennas}")
    f_r = steering_matrix(rx.n_antennas, uniform_grid(n_grid_rx))
    d_bar_u = build_d_bar_u(dicts)
    k_op = np.kron((d_bar_u @ np.conj(v_phase))[None, :], np.kron(dicts.f_l.conj(), f_r))
    return MimoRepresentation(dicts=dicts, f_r=f_r, d_bar_u=d_bar_u, k_op=k_op,
                              v_phase=v_phase, merge=build_merge_map(dicts.grid))


def merge_mimo_coefficients(sigma: np.ndarray, gamma: np.ndarray, merge: MergeMap) -> np.ndarray:
    """``Lambda_bar[:, i] = sum_{n in Q_i} J_bar[:, n]`` with ``J_bar = Sigma^T kron Gamma``.

    Column ``n = a * M_G + b`` of ``J_bar`` is ``kron(Sigma[a, :], Gamma[:, b])`` and
    belongs to class ``(b - a) mod grid``, the same rule as :class:`MergeMap`.
    """
    m_grid = merge.m_grid
    lam_bar = np.zeros((sigma.shape[1] * gamma.shape[0], m_grid), dtype=complex)
    rows_a = np.flatnonzero(np.any(sigma != 0, axis=1))
    cols_b = np.flatnonzero(np.any(gamma != 0, axis=0))
    for a in rows_a:
        for b in cols_b:
            lam_bar[:, int(merge.class_of(a, b))] += np.kron(sigma[a, :], gamma[:, b])
    return lam_bar


def mimo_channel(mimo: MimoRepresentation, sigma: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """``H_bar = F_r Gamma F_P^H Theta F_P Sigma F_L^H`` with ``Theta = diag(conj(v_phase))``."""
    f_p, f_l = mimo.dicts.f_p, mimo.dicts.f_l
    theta = np.conj(mimo.v_phase)
    return mimo.f_r @ gamma @ (f_p.conj().T * theta) @ f_p @ sigma @ f_l.conj().T


def assemble_mimo_problem(mimo: MimoRepresentation, x_bar: np.ndarray, t: int,
                          rng: np.random.Generator, noise_std: float = 0.0, training=None):
    """Pilot system ``y = W_f K x_bar + noise`` with ``W_f[t] = w(t)^T kron f(t)^H``.

    Returns ``(w_f, y)``.  ``training`` overrides the random ``(precoders, combiners)``.
    """
    if t < 1:
        raise ValueError(f"need at least one pilot, got T={t}")
    n = mimo.dicts.ula.n_antennas
    if training is None:
        w = np.exp(2j * np.pi * rng.random((t, n))) / np.sqrt(n)
        f = np.exp(2j * np.pi * rng.random((t, mimo.n_r))) / np.sqrt(mimo.n_r)
    else:
        w, f = (np.asarray(a) for a in training)
    w_f = (w[:, :, None] * np.conj(f)[:, None, :]).reshape(t, -1)
    y = w_f @ (mimo.k_op @ x_bar)
    if noise_std > 0:
        y = y + noise_std * complex_normal(rng, t)
    return w_f, y
