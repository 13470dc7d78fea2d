"""Cylindrical Brownian motion, Ito integrals and stochastic convolutions.

Brownian paths live on dyadic grids of [0, T] and are generated by the Levy
midpoint construction from one keyed stream per sample, so a grid with 2^L
steps and a grid with 2^(L+1) steps carry the same path, and the first S
samples of a larger ensemble coincide with an ensemble of size S.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import rng
from .errors import ContractViolationError, InvalidInputError, PreconditionError
from .gamma_space import (StepFunction, TimeGrid, frequency_lattice, gamma_norm,
                          gamma_norm_gram, weighted_frequency_norm)
from .maxreg import Propagator, horizon, phi1
from .sectorial import as_operator, frac_power
from .space_model import SpaceModel, lq_norm

BM_TAG = rng.tag("brownian")
OU_TAG = rng.tag("ou-exact")


class CylindricalBM:
    """m independent Brownian motions on a dyadic grid of [0, T] with 2^levels steps."""

    def __init__(self, m, T, levels, samples, seed, offset=0):
        if m < 1 or levels < 0 or samples < 1 or not (T > 0):
            raise InvalidInputError("need m >= 1, levels >= 0, samples >= 1 and T > 0")
        self.m, self.T, self.levels = int(m), float(T), int(levels)
        self.samples, self.seed, self.offset = int(samples), int(seed), int(offset)
        N = 2 ** self.levels
        self.grid = TimeGrid(np.linspace(0.0, self.T, N + 1))
        z = np.stack([rng.stream(self.seed, BM_TAG, j).standard_normal((N, self.m))
                      for j in range(self.offset, self.offset + self.samples)])
        W = np.zeros((self.samples, N + 1, self.m))
        W[:, N] = math.sqrt(self.T) * z[:, 0]
        for lev in range(1, self.levels + 1):
            step = N >> lev
            mid = np.arange(step, N, 2 * step)
            noise = z[:, 2 ** (lev - 1):2 ** lev]
            W[:, mid] = 0.5 * (W[:, mid - step] + W[:, mid + step]) + \
                math.sqrt(self.T / 2 ** (lev + 1)) * noise
        self.paths = W
        self.increments = np.diff(W, axis=1)

    @property
    def dt(self):
        return self.T / 2 ** self.levels

    def coarsen(self, levels):
        """The same paths observed on a coarser dyadic grid."""
        if levels > self.levels:
            raise InvalidInputError("can only coarsen to fewer levels")
        return CylindricalBM(self.m, self.T, levels, self.samples, self.seed, self.offset)

    def lineage(self):
        return ("brownian", self.seed, self.offset, self.samples, self.levels)


class AdaptedProcess:
    """Per-interval n x m matrices G_i, deterministic (N, n, m) or random (S, N, n, m)."""

    def __init__(self, grid, values, adapted=True):
        v = np.asarray(values)
        if v.ndim not in (3, 4) or v.shape[-3] != grid.n_intervals:
            raise InvalidInputError(f"values shape {v.shape} does not fit {grid.n_intervals} intervals")
        self.grid = grid
        self.values = v
        self.adapted = bool(adapted)

    @classmethod
    def deterministic(cls, grid, values):
        return cls(grid, values, True)

    @classmethod
    def build(cls, W, fn, n):
        """G_i = fn(i, increments before t_i); adapted by construction."""
        N = W.grid.n_intervals
        vals = np.zeros((W.samples, N, n, W.m))
        for i in range(N):
            vals[:, i] = fn(i, W.increments[:, :i])
        return cls(W.grid, vals, True)

    @property
    def random(self):
        return self.values.ndim == 4

    @property
    def dim(self):
        return self.values.shape[-2]

    def per_sample(self, samples):
        return self.values if self.random else np.broadcast_to(self.values, (samples,) + self.values.shape)

    def gamma_norms(self, space=None, samples=256, seed=0):
        """Per-sample ||G(omega)||_{gamma(0,T;H,X)}."""
        mu = self.grid.measures()
        vals = self.values if self.random else self.values[None]
        if space is None or space.is_hilbert:
            return np.sqrt(np.einsum("i,sinm->s", mu, np.abs(vals) ** 2))
        out = []
        for j, v in enumerate(vals):
            f = StepFunction(self.grid, v, space)
            out.append(gamma_norm(f, samples, seed, j).value)
        return np.array(out)


@dataclass
class PathEnsemble:
    """Sample paths (S, J, n) at the knots of a grid, with the seeds that produced them."""

    grid: TimeGrid
    paths: np.ndarray
    lineage: tuple = field(default=())

    @property
    def samples(self):
        return self.paths.shape[0]

    @property
    def dim(self):
        return self.paths.shape[2]

    def second_moment(self, index=-1):
        """Mean of ||U(t_index)||^2 with its standard error."""
        v = np.sum(np.abs(self.paths[:, index]) ** 2, axis=-1)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _check_pair(G, W):
    if G.grid != W.grid:
        raise InvalidInputError("integrand and Brownian motion live on different grids")
    if not G.adapted:
        raise ContractViolationError("integrand is not adapted to the Brownian filtration")
    if G.random and G.values.shape[0] != W.samples:
        raise InvalidInputError("integrand and Brownian motion have different sample counts")
    if G.values.shape[-1] != W.m:
        raise InvalidInputError("integrand width does not match the noise dimension")


def ito_integral(G, W):
    """Running left-endpoint Ito sums sum_{i<j} G_i (W(t_{i+1}) - W(t_i))."""
    _check_pair(G, W)
    Gs = G.per_sample(W.samples)
    incr = np.einsum("sinm,sim->sin", Gs, W.increments)
    paths = np.concatenate([np.zeros((W.samples, 1, G.dim)), np.cumsum(incr, axis=1)], axis=1)
    return PathEnsemble(W.grid, paths, W.lineage())


def ito_isomorphism_check(G, W, p, space=None):
    """(E sup_t ||int_0^t G dW||^p, E ||G||_gamma^p, ratio); ratio is nan when both vanish."""
    if not (p > 0):
        raise InvalidInputError(f"p must be positive, got {p}")
    ens = ito_integral(G, W)
    q = 2.0 if space is None else space.q
    sup = np.max(lq_norm(ens.paths, q), axis=1)
    lhs = float(np.mean(sup ** p))
    norms = G.gamma_norms(space)
    rhs = float(np.mean(norms ** p))
    ratio = lhs / rhs if rhs > 0 else math.nan
    return lhs, rhs, ratio


def _symmetric_eig(A):
    M = A.matrix
    if np.iscomplexobj(M) or not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(A.opnorm, 1e-300)):
        raise InvalidInputError("the exact integrator needs a real symmetric operator")
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    return lam, Q


def stoch_convolve(A, G, W, method="euler"):
    """S <> G at the grid knots.

    ``euler`` uses U_{j+1} = S(h)(U_j + G_j dW_j); ``exact`` samples the
    per-mode Ornstein-Uhlenbeck increments exactly, jointly with the given
    Brownian increments, for symmetric A.
    """
    A = as_operator(A)
    if A.angle >= math.pi / 2:
        raise InvalidInputError("stochastic convolution needs an analytic semigroup")
    _check_pair(G, W)
    if G.dim != A.dim:
        raise InvalidInputError("integrand rows do not match the operator dimension")
    S_, N, n = W.samples, W.grid.n_intervals, A.dim
    h = W.dt
    Gs = G.per_sample(S_)
    U = np.zeros((S_, N + 1, n))
    if method == "euler":
        Sh, _ = Propagator(A)(h)
        for j in range(N):
            kick = np.einsum("snm,sm->sn", Gs[:, j], W.increments[:, j])
            U[:, j + 1] = (U[:, j] + kick) @ Sh.T
    elif method == "exact":
        lam, Q = _symmetric_eig(A)
        decay = np.exp(-lam * h)
        c = h * phi1(lam * h)
        C = h * phi1((lam[:, None] + lam[None, :]) * h)
        cond = C - np.outer(c, c) / h
        d, V = np.linalg.eigh(0.5 * (cond + cond.T))
        L = V * np.sqrt(np.clip(d, 0, None))[None, :]
        extra = np.stack([rng.stream(W.seed, OU_TAG, j).standard_normal((N, W.m, n))
                          for j in range(W.offset, W.offset + S_)])
        Gq = np.einsum("kn,sinm->sikm", Q, Gs)
        V_ = np.zeros((S_, n))
        for j in range(N):
            # I[s, k, l] = int_{t_j}^{t_j+h} e^{-lam_k (t_j + h - r)} dW_l(r)
            I = (c[None, :, None] / h) * W.increments[:, j][:, None, :] + \
                np.einsum("kr,smr->skm", L, extra[:, j])
            V_ = decay * V_ + np.einsum("skm,skm->sk", Gq[:, j], I)
            U[:, j + 1] = V_ @ Q.T
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return PathEnsemble(W.grid, U, W.lineage() + (method,))


def weak_residual(ens, A, G, W, x):
    """Per-sample <U(T), x> + int <U, A^* x> ds - sum <G_j^* x, dW_j> (left-point sums)."""
    A = as_operator(A)
    x = np.asarray(x, dtype=float)
    Gs = G.per_sample(W.samples)
    h = np.diff(ens.grid.knots)
    drift = np.einsum("j,sjn,n->s", h, ens.paths[:, :-1], A.matrix.T @ x)
    noise = np.einsum("sjnm,n,sjm->s", Gs, x, W.increments)
    return ens.paths[:, -1] @ x + drift - noise


def path_gamma_norms(ens, A, B=None, space=None):
    """Per-sample ||t -> B U(t)||_{gamma(R_+; X)} with the free-decay tail after the grid.

    Inside the grid the trapezoidal rule is used on the knots; after the last
    knot U(T + r) = S(r) U(T) and the tail is integrated exactly through a
    Lyapunov equation. Only the Hilbert case is evaluated exactly; other q use
    a Monte Carlo gamma-norm per sample.
    """
    A = as_operator(A)
    Bm = np.eye(A.dim) if B is None else np.asarray(B)
    h = np.diff(ens.grid.knots)
    w = np.zeros(ens.grid.knots.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    BU = ens.paths @ Bm.T
    X = scipy.linalg.solve_continuous_lyapunov(A.matrix.conj().T, Bm.conj().T @ Bm)
    last = ens.paths[:, -1]
    if space is None or space.is_hilbert:
        inner = np.einsum("j,sjn->s", w, np.abs(BU) ** 2)
        tail = np.einsum("sn,nk,sk->s", last.conj(), X, last).real
        return np.sqrt(inner + tail)
    out = []
    for s in range(ens.samples):
        C = (BU[s] * w[:, None]).T @ BU[s].conj()
        Y = scipy.linalg.solve_continuous_lyapunov(A.matrix, np.outer(last[s], last[s].conj()))
        C = C + Bm @ Y @ Bm.conj().T
        out.append(gamma_norm_gram(C.real, space, 256, 0, s).value)
    return np.array(out)


def lp_norm(values, p):
    return float(np.mean(np.asarray(values) ** p) ** (1.0 / p))


def stoch_maxreg_ratio(A, G, W, p=2.0, method=None, space=None):
    """||A^(1/2) S<>G||_{L^p(Omega; gamma)} / ||G||_{L^p(Omega; gamma(H, X))}."""
    A = as_operator(A)
    if not A.invertible:
        raise PreconditionError("needs an invertible operator")
    if method is None:
        method = "exact" if A.normal and not np.iscomplexobj(A.matrix) and \
            np.allclose(A.matrix, A.matrix.T) else "euler"
    ens = stoch_convolve(A, G, W, method)
    H = np.asarray(frac_power(A, 0.5)).real
    num = lp_norm(path_gamma_norms(ens, A, H, space), p)
    den = lp_norm(G.gamma_norms(space), p)
    return num / den if den > 0 else math.nan


def stoch_maxreg_lyapunov(A):
    """sqrt(||X||) where A^* X + X A = (A^(1/2))^* A^(1/2).

    E||A^(1/2) S<>G||^2 = int <X G(s), G(s)>_HS ds for deterministic G, so on
    Hilbert spaces this is the supremum of the stochastic maximal-regularity
    ratio over deterministic integrands.
    """
    A = as_operator(A)
    H = np.asarray(frac_power(A, 0.5))
    X = scipy.linalg.solve_continuous_lyapunov(A.matrix.conj().T, H.conj().T @ H)
    return math.sqrt(float(np.linalg.norm(0.5 * (X + X.conj().T), 2)))


def random_integrand(A, seed, index, levels, m=2, blocks=8):
    """Deterministic step integrand on a dyadic grid whose length is matched to A."""
    A = as_operator(A)
    g = rng.stream(seed, rng.tag("stoch-integrand"), index)
    T = math.exp(g.uniform(0.0, 1.5)) / A.min_modulus
    N = 2 ** levels
    per = N // blocks
    vals = np.repeat(g.standard_normal((blocks, A.dim, m)), per, axis=0)
    return T, vals


def stoch_maxreg_constant(A, trials=4, samples=1024, p=2.0, seed=0, levels=10, m=2,
                          space=None):
    """Largest measured stochastic maximal-regularity ratio over seeded integrands."""
    A = as_operator(A)
    best = 0.0
    for i in range(int(trials)):
        T, vals = random_integrand(A, seed, i, levels, m)
        W = CylindricalBM(m, T, levels, samples, rng.tag(f"smr-{seed}-{i}"))
        G = AdaptedProcess.deterministic(W.grid, vals)
        best = max(best, stoch_maxreg_ratio(A, G, W, p, space=space))
    return best


def spacetime_reg_check(A, G, W, theta, method=None, xi_max=None, growth=1.25, tol=1e-8):
    """||D^theta A^(1/2 - theta) S<>G||_{L^2(Omega; gamma)} / ||G|| for 0 <= theta < 1/2.

    Each path is extended by its free decay up to the horizon where
    ||S(t)|| <= tol, represented by interval averages of the knot values, and
    measured in frequency with the homogeneous weight |xi|^theta for
    |xi| <= xi_max. The default cutoff 64 max|lambda(A)| does not move under
    grid refinement; it is capped at the Nyquist frequency pi / h.
    """
    if not (0.0 <= theta < 0.5):
        raise InvalidInputError(f"theta must lie in [0, 1/2), got {theta}")
    A = as_operator(A)
    if method is None:
        method = "exact" if A.normal and np.allclose(A.matrix, A.matrix.T) else "euler"
    ens = stoch_convolve(A, G, W, method)
    P = np.asarray(frac_power(A, 0.5 - theta)).real
    h = W.dt
    knots = list(ens.grid.knots)
    end = knots[-1] + horizon(A, tol)
    step = h
    while knots[-1] < end:
        knots.append(knots[-1] + step)
        step *= growth
    knots = np.array(knots)
    prop = Propagator(A)
    tail_t = knots[ens.grid.knots.size:] - ens.grid.knots[-1]
    last = ens.paths[:, -1]
    tail = np.stack([last @ prop(t)[0].T for t in tail_t], axis=1)
    pts = np.concatenate([ens.paths, tail], axis=1)
    avg = 0.5 * (pts[:, 1:] + pts[:, :-1]) @ P.T
    grid = TimeGrid(knots)
    span = knots[-1] - knots[0]
    dxi = 2 * math.pi / (2 * span)
    if xi_max is None:
        xi_max = 64 * A.max_modulus
    xi_max = min(float(xi_max), math.pi / h)
    lattice = frequency_lattice(grid, int(math.ceil(xi_max / dxi)))
    # samples stacked as extra coordinates: the Hilbert norm squared sums over them
    stacked = np.moveaxis(avg, 0, 1).reshape(grid.n_intervals, -1)
    f = StepFunction(grid, stacked)
    total = weighted_frequency_norm(f, lambda xi: np.abs(xi) ** theta, lattice).value
    num = total / math.sqrt(ens.samples)
    den = math.sqrt(float(np.mean(G.gamma_norms() ** 2)))
    return num / den if den > 0 else math.nan
