"""Sparse recovery for ``y = Phi x + noise`` and the least-squares baselines.

``phi`` may be a dense array or any operator exposing ``matvec``, ``rmatvec``,
``columns`` and ``col_norms_sq`` (see :mod:`irscs.cascade`).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cascade import CascadeRepresentation, as_operator, lam_to_x

logger = logging.getLogger(__name__)


@dataclass
class SparseEstimate:
    x_hat: np.ndarray = field(repr=False)
    support: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    residual_history: list = field(default_factory=list, repr=False)
    noise_var: float | None = None
    flags: tuple = ()


class UnderdeterminedError(ValueError):
    """Conventional LS was asked to solve a system with fewer pilots than unknowns."""


def default_residual_tol(y: np.ndarray, noise_std: float | None = None) -> float:
    """``1.1 sqrt(T) sigma`` when the noise level is known, else ``1e-6 ||y||``."""
    if noise_std:
        return 1.1 * np.sqrt(len(y)) * noise_std
    return 1e-6 * np.linalg.norm(y)


def omp(phi, y, max_support: int = 32, residual_tol: float | None = None) -> SparseEstimate:
    """Orthogonal matching pursuit.

    Picks the column with the largest normalized correlation with the residual,
    refits LS on the running support and stops once ``||r|| <= residual_tol``
    or ``max_support`` atoms are in.  Zero-norm columns are never selected.

    Parameters
    ----------
    phi : ndarray or operator, shape (T, n)
    y : ndarray, shape (T,)
    max_support : int
        At most ``T``.
    residual_tol : float, optional
        Absolute residual threshold; defaults to ``1e-6 ||y||``.
    """
    op = as_operator(phi)
    y = np.asarray(y, dtype=complex)
    t, n = op.shape
    if max_support > t:
        raise ValueError(f"max_support={max_support} exceeds T={t}")
    if residual_tol is None:
        residual_tol = default_residual_tol(y)
    norms = np.sqrt(op.col_norms_sq())
    usable = norms > 0
    inv_norms = np.where(usable, 1 / np.where(usable, norms, 1), 0.0)

    x_hat = np.zeros(n, dtype=complex)
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    r = y.copy()
    history = [float(np.linalg.norm(r))]
    q = np.zeros((t, 0), dtype=complex)
    rmat = np.zeros((0, 0), dtype=complex)
    while history[-1] > residual_tol and len(support) < max_support:
        corr = np.abs(op.rmatvec(r)) * inv_norms
        corr[support] = -1.0
        k = int(np.argmax(corr))
        if corr[k] <= 0:
            break
        # grow the QR factorization of the support columns by one
        col = op.columns([k])[:, 0]
        proj = q.conj().T @ col
        resid_col = col - q @ proj
        proj2 = q.conj().T @ resid_col
        resid_col -= q @ proj2
        proj += proj2
        diag = np.linalg.norm(resid_col)
        if diag <= 1e-12 * norms[k]:
            # numerically dependent on the support: drop it from further consideration
            inv_norms[k] = 0.0
            continue
        support.append(k)
        q = np.column_stack([q, resid_col / diag])
        rmat = np.block([[rmat, proj[:, None]], [np.zeros((1, rmat.shape[1])), np.array([[diag]])]])
        coef = scipy.linalg.solve_triangular(rmat, q.conj().T @ y)
        r = y - q @ (q.conj().T @ y)
        history.append(float(np.linalg.norm(r)))
    if support:
        x_hat[support] = coef
    return SparseEstimate(
        x_hat=x_hat,
        support=np.array(sorted(support), dtype=int),
        iterations=len(support),
        residual_norm=history[-1],
        converged=history[-1] <= residual_tol,
        residual_history=history,
    )


@dataclass
class GampConfig:
    """Knobs of :func:`gamp_em_bg`.

    ``damping`` is the initial step of the adaptive step-size control; a
    step that lowers the cost is grown by 10%, one that raises it is undone
    and halved (never below ``min_step``).  EM re-estimates the prior and
    noise after an inner run settles (relative change below ``em_tol``) or
    after ``em_period`` iterations, whichever comes first.
    """

    max_iters: int = 300
    tol: float = 1e-6
    damping: float = 0.9
    min_step: float = 0.01
    init_sparsity_rate: float = 0.01
    em_tol: float = 1e-3
    em_period: int = 10
    max_restarts: int = 3
    learn_mean: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.em_period < 1 or self.max_restarts < 0:
            raise ValueError("max_iters and em_period must be >= 1, max_restarts >= 0")
        if not (0 < self.min_step <= self.damping <= 1):
            raise ValueError("need 0 < min_step <= damping <= 1")
        if not (0 < self.init_sparsity_rate < 1):
            raise ValueError("init_sparsity_rate must lie in (0, 1)")


@dataclass
class GampState:
    sparsity_rate: float
    active_mean: complex
    active_var: float
    noise_var: float
    damping: float
    posterior_means: np.ndarray = field(repr=False, default=None)
    posterior_vars: np.ndarray = field(repr=False, default=None)


_RATE_CLIP = (1e-8, 1 - 1e-8)
_TINY = 1e-300


def _bg_denoise(r, vr, rate, mean, var):
    """Posterior of ``x ~ (1-rate) delta_0 + rate CN(mean, var)`` given ``r = x + CN(0, vr)``.

    Returns ``(x_mean, x_var, activity, gamma, nu, neg_kl)``.  ``gamma`` and
    ``nu`` are the mean and variance of ``x`` conditioned on being active,
    and ``neg_kl`` is minus the summed KL divergence from posterior to prior.
    """
    tot = var + vr
    log_off = np.log1p(-rate) - np.log(np.pi * vr) - np.abs(r) ** 2 / vr
    log_on = np.log(rate) - np.log(np.pi * tot) - np.abs(r - mean) ** 2 / tot
    log_z = np.logaddexp(log_off, log_on)
    pi = np.exp(log_on - log_z)
    gamma = (r * var + mean * vr) / tot
    nu = var * vr / tot
    x = pi * gamma
    vx = np.maximum(pi * (nu + np.abs(gamma) ** 2) - np.abs(x) ** 2, _TINY)
    neg_kl = float(np.sum(log_z + np.log(np.pi * vr) + (np.abs(x - r) ** 2 + vx) / vr))
    return x, vx, pi, gamma, nu, neg_kl


def _init_state(y, frob2, t, cfg: GampConfig, step: float) -> GampState:
    ynorm2 = float(np.vdot(y, y).real)
    noise_var = max(0.1 * ynorm2 / t, _TINY)
    rate = cfg.init_sparsity_rate
    active_var = max((ynorm2 - t * noise_var) / (frob2 * rate), _TINY)
    return GampState(sparsity_rate=rate, active_mean=0j, active_var=active_var,
                     noise_var=noise_var, damping=step)


def _em_update(st: GampState, y, den, learn_mean: bool) -> float:
    """One EM step on the prior and noise; returns the relative change of the noise variance."""
    pi, gamma, nu, p, vp = den
    z_post = (vp * y + st.noise_var * p) / (vp + st.noise_var)
    vz = vp * st.noise_var / (vp + st.noise_var)
    noise_var = max(float(np.mean(np.abs(y - z_post) ** 2)) + vz, _TINY)
    change = abs(noise_var - st.noise_var) / st.noise_var
    st.noise_var = noise_var
    pi_sum = float(np.sum(pi))
    st.sparsity_rate = float(np.clip(pi_sum / pi.size, *_RATE_CLIP))
    if pi_sum > 0:
        if learn_mean:
            st.active_mean = complex(np.sum(pi * gamma) / pi_sum)
        st.active_var = max(float(np.sum(pi * (np.abs(st.active_mean - gamma) ** 2 + nu)) / pi_sum), _TINY)
    return change


def _gamp_run(matvec, rmatvec, shape, y, frob2, cfg: GampConfig, step0: float):
    t, n = shape
    c_out, c_in = frob2 / t, frob2 / n
    st = _init_state(y, frob2, t, cfg, step0)
    x = np.full(n, st.sparsity_rate * st.active_mean, dtype=complex)
    vx = np.full(n, max(st.sparsity_rate * st.active_var, _TINY))
    s = np.zeros(t, dtype=complex)
    vs = None
    x_bar = x.copy()
    step = step0
    val_in, last_val, saved = -np.inf, -np.inf, None
    den = None
    history = []
    best = (np.inf, x.copy())
    diverged = converged = False
    inner = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        vp = c_out * float(np.mean(vx))
        p_fix = matvec(x)
        resid = float(np.linalg.norm(y - p_fix))
        if not (np.isfinite(resid) and np.all(np.isfinite(x))):
            diverged = True
            break
        history.append(resid)
        if resid < best[0]:
            best = (resid, x.copy())
        p = p_fix - vp * s
        val = val_in - (resid ** 2 + t * vp) / st.noise_var
        if saved is None or val > last_val or step <= cfg.min_step:
            saved = (x, vx, s, vs, x_bar, val_in, p, vp, den)
            last_val = val
            step = min(1.1 * step, 1.0)
        else:
            x, vx, s, vs, x_bar, val_in, p, vp, den = saved
            step = max(0.5 * step, cfg.min_step)

        s_new = (y - p) / (vp + st.noise_var)
        vs_new = 1.0 / (vp + st.noise_var)
        s = (1 - step) * s + step * s_new
        vs = vs_new if vs is None else (1 - step) * vs + step * vs_new
        x_bar = (1 - step) * x_bar + step * x
        vr = 1.0 / (c_in * vs)
        r = x_bar + vr * rmatvec(s)
        x_prev = x
        x, vx, pi, gamma, nu, val_in = _bg_denoise(r, vr, st.sparsity_rate, st.active_mean, st.active_var)
        den = (pi, gamma, nu, p, vp)

        change = np.linalg.norm(x - x_prev) / max(np.linalg.norm(x), _TINY)
        inner += 1
        if change < cfg.em_tol or inner >= cfg.em_period:
            noise_change = _em_update(st, y, den, cfg.learn_mean)
            inner = 0
            saved, last_val = None, -np.inf
            if change < cfg.tol and noise_change < 1e-3:
                converged = True
                break
    st.posterior_means, st.posterior_vars = x, vx
    st.damping = step
    return x, st, it, history, diverged, converged, best


def gamp_em_bg(phi, y, config: GampConfig | None = None) -> SparseEstimate:
    """EM-tuned Bernoulli-Gaussian GAMP with scalar variances, complex-valued.

    Columns are normalized internally.  Hyperparameters (sparsity rate,
    active mean and variance, noise variance) are re-estimated by EM between
    inner GAMP runs, which are warm-started.  A run that produces non-finite
    values restarts with half the initial step, at most
    ``config.max_restarts`` times; after that the best iterate so far is
    returned with ``converged=False``.
    """
    cfg = config or GampConfig()
    op = as_operator(phi)
    y = np.asarray(y, dtype=complex)
    t, n = op.shape
    if not np.all(np.isfinite(y)):
        raise ValueError("y has non-finite entries")
    if not np.any(y):
        return SparseEstimate(x_hat=np.zeros(n, dtype=complex), support=np.zeros(0, dtype=int),
                              iterations=0, residual_norm=0.0, converged=True)
    norms2 = op.col_norms_sq()
    scale = np.where(norms2 > 0, 1 / np.sqrt(np.where(norms2 > 0, norms2, 1)), 0.0)
    frob2 = float(np.count_nonzero(norms2))

    def matvec(x):
        return op.matvec(scale * x)

    def rmatvec(s):
        return scale * op.rmatvec(s)

    step = cfg.damping
    total_iters = 0
    flags = []
    for _ in range(cfg.max_restarts + 1):
        x, st, iters, history, diverged, converged, best = _gamp_run(
            matvec, rmatvec, (t, n), y, frob2, cfg, step)
        total_iters += iters
        if not diverged:
            break
        logger.debug("GAMP diverged with initial step %.3g, restarting", step)
        flags.append("restarted")
        step *= 0.5
    else:
        flags.append("diverged")
        x = best[1]
        converged = False
    x_hat = scale * x
    resid = float(np.linalg.norm(y - op.matvec(x_hat)))
    return SparseEstimate(
        x_hat=x_hat,
        support=np.flatnonzero(_energy_support(x_hat)),
        iterations=total_iters,
        residual_norm=resid,
        converged=bool(converged),
        residual_history=history,
        noise_var=st.noise_var,
        flags=tuple(flags),
    )


def _energy_support(x, fraction=0.99):
    # smallest set of entries holding `fraction` of the energy; GAMP never returns exact zeros
    mag = np.abs(x) ** 2
    out = np.zeros(mag.shape, dtype=bool)
    if not mag.any():
        return out
    order = np.argsort(mag)[::-1]
    k = int(np.searchsorted(np.cumsum(mag[order]), fraction * mag.sum())) + 1
    out[order[:k]] = True
    return out


def oracle_ls(phi, y, support) -> SparseEstimate:
    """Least squares restricted to ``support`` columns; zero elsewhere.

    A rank-deficient restriction yields the minimum-norm solution and the
    ``"rank_deficient"`` flag.
    """
    op = as_operator(phi)
    y = np.asarray(y, dtype=complex)
    t, n = op.shape
    support = np.unique(np.asarray(support, dtype=int))
    x_hat = np.zeros(n, dtype=complex)
    flags = ()
    if support.size:
        if support.size > t:
            raise ValueError(f"support size {support.size} exceeds T={t}")
        a = op.columns(support)
        coef, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
        if rank < support.size:
            flags = ("rank_deficient",)
        x_hat[support] = coef
    resid = float(np.linalg.norm(y - op.matvec(x_hat)))
    return SparseEstimate(x_hat=x_hat, support=support, iterations=1, residual_norm=resid,
                          converged=not flags, flags=flags)


def conventional_ls(w_v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Estimate ``vec(H)`` from the overdetermined system ``y = W_v vec(H) + noise`` via QR."""
    w_v = np.asarray(w_v)
    t, nm = w_v.shape
    if t < nm:
        raise UnderdeterminedError(f"conventional LS needs T >= NM, got T={t} < NM={nm}")
    q, r = scipy.linalg.qr(w_v, mode="economic", check_finite=False)
    return scipy.linalg.solve_triangular(r, q.conj().T @ y, check_finite=False)


def ls_error_floor(w_v: np.ndarray, noise_std: float) -> float:
    """Expected squared error ``sigma^2 trace((W_v^H W_v)^{-1})`` of :func:`conventional_ls`."""
    r = scipy.linalg.qr(np.asarray(w_v), mode="r", check_finite=False)[0]
    r = r[: r.shape[1]]
    rinv = scipy.linalg.solve_triangular(r, np.eye(r.shape[1]), check_finite=False)
    return noise_std ** 2 * float(np.sum(np.abs(rinv) ** 2))


def conventional_ls_flops(t: int, nm: int) -> float:
    """Rough complex-flop count of the QR-based LS solve, ``O(T (NM)^2)``."""
    return 4.0 * t * nm ** 2


def sparse_solver_flops(t: int, n: int, iterations: int) -> float:
    """Rough complex-flop count of ``iterations`` operator passes, ``O(T n)`` each."""
    return 2.0 * t * n * iterations


def oracle_support_from_truth(h_true: np.ndarray, rep: CascadeRepresentation, k: int,
                              max_atoms: int = 32) -> np.ndarray:
    """Surrogate "true support": the ``k`` strongest atoms of a greedy sparse fit of ``H``.

    Runs OMP on ``vec(H) = (conj(F_L) kron D_u) x`` with the full channel as
    measurements (no pilots, no noise), using ``D_u^H R F_L`` for the
    correlations, then keeps the ``k`` largest fitted coefficients.  On-grid
    channels with well-separated atoms give back the exact nonzero set.
    Indices follow the ``x = vec(Lambda)`` ordering.
    """
    if k <= 0:
        return np.zeros(0, dtype=int)
    d_u, f_l = rep.d_u, rep.dicts.f_l
    m_grid = d_u.shape[1]
    norms = np.sqrt(np.outer(np.sum(np.abs(d_u) ** 2, axis=0), np.sum(np.abs(f_l) ** 2, axis=0)))
    h = np.asarray(h_true)
    target = h.reshape(-1)
    tol = 1e-10 * np.linalg.norm(target)
    resid = h.copy()
    atoms: list[tuple[int, int]] = []
    coef = np.zeros(0, dtype=complex)
    for _ in range(max(k, max_atoms)):
        corr = np.abs(d_u.conj().T @ resid @ f_l) / norms
        for i, j in atoms:
            corr[i, j] = -1
        i, j = np.unravel_index(int(np.argmax(corr)), corr.shape)
        atoms.append((int(i), int(j)))
        basis = np.stack([np.outer(d_u[:, a], f_l[:, b].conj()).reshape(-1) for a, b in atoms], axis=1)
        coef = np.linalg.lstsq(basis, target, rcond=None)[0]
        resid = h - (basis @ coef).reshape(h.shape)
        if np.linalg.norm(resid) <= tol:
            break
    order = np.argsort(-np.abs(coef))[:k]
    order = [o for o in order if np.abs(coef[o]) > 1e-9 * np.abs(coef).max()]
    return np.sort(np.array([atoms[o][1] * m_grid + atoms[o][0] for o in order], dtype=int))


def true_support(lam: np.ndarray) -> np.ndarray:
    """Nonzero positions of ``vec(Lambda)``."""
    return np.flatnonzero(lam_to_x(lam))
