"""Step functions with values in l^q_n and their gamma-radonifying norms.

A step function f = sum_i 1_{I_i} y_i has gamma-norm
(E || sum_i g_i sqrt(mu(I_i)) y_i ||^2)^(1/2) with g_i i.i.d. standard
Gaussians. When the values are n x m matrices (operators from an
m-dimensional noise space into X) each column contributes its own Gaussian.
The norm depends only on the covariance sum_i mu(I_i) y_i y_i^*, which the
exact and square-function evaluators exploit.
"""
import math
import re
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (InvalidInputError, MethodMismatchError, UnsupportedError)
from .space_model import INF, SpaceModel, lq_norm

BATCH = 64
DEFAULT_SAMPLES = 4096


def _power_integral(a, b, beta):
    """int_a^b s^beta ds, elementwise, exact."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if beta == -1.0:
        with np.errstate(divide="ignore"):
            return np.log(b) - np.log(a)
    with np.errstate(divide="ignore"):
        return (b ** (beta + 1) - a ** (beta + 1)) / (beta + 1)


_POWER_RE = re.compile(r"^power\(\s*([-+0-9.eE]+)\s*\)$")


def parse_weight(weight):
    """Normalise a weight tag to (kind, beta)."""
    if isinstance(weight, tuple):
        kind, beta = weight
        return str(kind), float(beta)
    w = str(weight).strip()
    if w in ("lebesgue", "dt_over_t"):
        return w, None
    m = _POWER_RE.match(w)
    if m:
        return "power", float(m.group(1))
    raise InvalidInputError(f"unknown weight {weight!r}")


class TimeGrid:
    """Strictly increasing knots with a measure tag.

    weight is "lebesgue" (dt), "dt_over_t" (dt/t, needs t_0 > 0) or
    "power(beta)" (s^beta ds). ``domain="frequency"`` allows negative knots.
    """

    def __init__(self, knots, weight="lebesgue", domain="time"):
        k = np.array(knots, dtype=float)
        if k.ndim != 1 or k.size < 2:
            raise InvalidInputError("a grid needs at least two knots")
        if not np.all(np.isfinite(k)):
            raise InvalidInputError("grid knots must be finite")
        if np.any(np.diff(k) <= 0):
            raise InvalidInputError("grid knots must be strictly increasing")
        if domain not in ("time", "frequency"):
            raise InvalidInputError(f"unknown domain {domain!r}")
        if domain == "time" and k[0] < 0:
            raise InvalidInputError("time grids start at t_0 >= 0")
        kind, beta = parse_weight(weight)
        if kind == "dt_over_t" and k[0] <= 0:
            raise InvalidInputError("dt/t weight needs t_0 > 0")
        if kind == "power" and k[0] <= 0 and beta <= -1:
            raise InvalidInputError("power weight with beta <= -1 needs t_0 > 0")
        k.setflags(write=False)
        self.knots = k
        self.kind = kind
        self.beta = beta
        self.domain = domain

    @property
    def weight(self):
        return f"power({self.beta!r})" if self.kind == "power" else self.kind

    @property
    def n_intervals(self):
        return self.knots.size - 1

    @property
    def left(self):
        return self.knots[:-1]

    @property
    def right(self):
        return self.knots[1:]

    @property
    def widths(self):
        return np.diff(self.knots)

    @property
    def midpoints(self):
        return 0.5 * (self.left + self.right)

    def measures(self):
        if self.kind == "lebesgue":
            return self.widths
        if self.kind == "dt_over_t":
            return np.log(self.right / self.left)
        return _power_integral(self.left, self.right, self.beta)

    def with_knots(self, knots):
        return TimeGrid(knots, self.weight, self.domain)

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and self.weight == other.weight
                and self.knots.shape == other.knots.shape
                and np.array_equal(self.knots, other.knots))

    def __repr__(self):
        return (f"TimeGrid([{self.knots[0]:.4g}, {self.knots[-1]:.4g}], "
                f"N={self.n_intervals}, weight={self.weight})")


def uniform_grid(T, N, t0=0.0, weight="lebesgue"):
    return TimeGrid(np.linspace(t0, T, N + 1), weight)


class StepFunction:
    """Values y_i on the intervals of a grid, as vectors (N, n) or matrices (N, n, m)."""

    def __init__(self, grid, values, target=None):
        v = np.array(values)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim not in (2, 3):
            raise InvalidInputError(f"values must have shape (N, n) or (N, n, m), got {v.shape}")
        if v.shape[0] != grid.n_intervals:
            raise InvalidInputError(
                f"{v.shape[0]} values for {grid.n_intervals} intervals")
        if target is None:
            target = SpaceModel(v.shape[1])
        if v.shape[1] != target.dim:
            raise InvalidInputError(f"values have dim {v.shape[1]}, target has {target.dim}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("step function values must be finite")
        v.setflags(write=False)
        self.grid = grid
        self.values = v
        self.target = target

    @property
    def is_operator(self):
        return self.values.ndim == 3

    @property
    def dim(self):
        return self.target.dim

    def columns(self):
        """Values as (N, n, m) with m = 1 for vector-valued functions."""
        return self.values if self.is_operator else self.values[:, :, None]

    def coefficients(self):
        """Rows sqrt(mu_i) y_i^(k), one per (interval, noise direction)."""
        mu = self.grid.measures()
        c = self.columns() * np.sqrt(mu)[:, None, None]
        return np.transpose(c, (0, 2, 1)).reshape(-1, self.dim)

    def gram(self):
        """sum_i mu_i y_i y_i^* (an n x n positive semidefinite matrix)."""
        c = self.coefficients()
        return c.T @ c.conj()

    def with_values(self, values, target=None):
        return StepFunction(self.grid, values, self.target if target is None else target)

    def __add__(self, other):
        if self.grid != other.grid:
            raise InvalidInputError("cannot add step functions on different grids")
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        if self.grid != other.grid:
            raise InvalidInputError("cannot subtract step functions on different grids")
        return self.with_values(self.values - other.values)

    def scale(self, c):
        return self.with_values(c * self.values)

    def __repr__(self):
        return f"StepFunction({self.grid!r}, values{self.values.shape}, q={self.target.q:g})"


def indicator(a, b, vector, target=None):
    """1_{(a,b)} x as a one-interval step function."""
    grid = TimeGrid([a, b])
    return StepFunction(grid, np.asarray(vector)[None, :], target)


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    method: str
    samples: int = 0
    stderr: float = 0.0

    def __float__(self):
        return float(self.value)


def gamma_norm_hilbert(f):
    """Exact gamma-norm when the target is l^2: the L^2 norm of f."""
    if not f.target.is_hilbert:
        raise MethodMismatchError(f"exact Hilbert evaluation needs q = 2, got q = {f.target.q}")
    c = f.coefficients()
    return GammaEstimate(float(np.sqrt(np.sum(np.abs(c) ** 2))), "hilbert_exact")


def _mc_from_rows(rows, q, samples, seed, experiment):
    """Estimate (E||sum_k g_k rows_k||_q^2)^(1/2) with keyed batches of 64."""
    if int(samples) != samples or samples < 2:
        raise InvalidInputError(f"need at least 2 samples, got {samples}")
    samples = int(samples)
    if not np.any(rows):
        return GammaEstimate(0.0, "monte_carlo", samples, 0.0)
    K = rows.shape[0]
    sums, sqs, sizes = [], [], []
    per_sample = []
    for b, start in enumerate(range(0, samples, BATCH)):
        size = min(BATCH, samples - start)
        Z = rng.normals((size, K), seed, experiment, b)
        sq = lq_norm(Z @ rows, q) ** 2
        sums.append(np.sum(sq))
        sizes.append(size)
        if samples < 2 * BATCH:
            per_sample.append(sq)
    total = float(rng.tree_sum(sums))
    mean_sq = total / samples
    value = math.sqrt(mean_sq)
    if samples >= 2 * BATCH:
        means = np.array(sums) / np.array(sizes)
        full = np.array(sizes) == BATCH
        means = means[full]
        se_sq = float(np.std(means, ddof=1) / math.sqrt(means.size))
    else:
        sq = np.concatenate(per_sample)
        se_sq = float(np.std(sq, ddof=1) / math.sqrt(sq.size))
    stderr = se_sq / (2 * value) if value > 0 else 0.0
    return GammaEstimate(value, "monte_carlo", samples, stderr)


def gamma_norm_mc(f, samples=DEFAULT_SAMPLES, seed=0, experiment=0):
    """Monte Carlo gamma-norm from the Gaussian-sum definition."""
    return _mc_from_rows(f.coefficients(), f.target.q, samples, seed, experiment)


def gamma_norm_sqfn(f):
    """Square-function norm ||(sum_i mu_i |y_i|^2)^(1/2)||_q, coordinatewise."""
    if f.target.q == INF:
        raise UnsupportedError("square-function norm is not equivalent for q = inf")
    c = f.coefficients()
    s = np.sqrt(np.sum(np.abs(c) ** 2, axis=0))
    return GammaEstimate(float(lq_norm(s, f.target.q)), "square_function")


def gamma_norm(f, samples=DEFAULT_SAMPLES, seed=0, experiment=0):
    """Exact evaluation in the Hilbert case, Monte Carlo otherwise."""
    if f.target.is_hilbert:
        return gamma_norm_hilbert(f)
    return gamma_norm_mc(f, samples, seed, experiment)


def gram_factor(C):
    """Rows r_k with sum_k r_k r_k^T = C for a real symmetric PSD matrix."""
    C = 0.5 * (C + C.conj().T)
    if np.iscomplexobj(C):
        raise InvalidInputError("gram_factor expects a real covariance")
    d, U = np.linalg.eigh(C)
    d = np.clip(d, 0.0, None)
    return (U * np.sqrt(d)[None, :]).T


def gamma_norm_gram(C, space, samples=DEFAULT_SAMPLES, seed=0, experiment=0):
    """gamma-norm of any X-valued function with covariance matrix C."""
    C = np.asarray(C)
    if not np.all(np.isfinite(C)):
        return GammaEstimate(math.inf, "hilbert_exact" if space.is_hilbert else "monte_carlo")
    if space.is_hilbert:
        return GammaEstimate(float(math.sqrt(max(np.trace(C).real, 0.0))), "hilbert_exact")
    return _mc_from_rows(gram_factor(C), space.q, samples, seed, experiment)


def _resolve_matrix_family(M, f):
    N = f.grid.n_intervals
    if callable(M):
        M = M(f.grid.midpoints)
    M = np.asarray(M)
    if M.ndim == 0:
        M = np.full(N, M)
    if M.ndim == 1:
        if M.shape[0] != N:
            raise InvalidInputError(f"{M.shape[0]} multiplier values for {N} intervals")
        return M, True
    if M.ndim == 2:
        M = np.broadcast_to(M, (N,) + M.shape)
    if M.ndim != 3 or M.shape[0] != N:
        raise InvalidInputError(f"multiplier shape {M.shape} does not fit {N} intervals")
    if M.shape[2] != f.dim:
        raise InvalidInputError(f"multiplier acts on dim {M.shape[2]}, function has dim {f.dim}")
    return M, False


def apply_multiplier(M, f):
    """Interval-wise product M_i y_i.

    M may be a scalar, a callable evaluated at interval midpoints, an array
    of per-interval scalars, one matrix, or a stack of per-interval matrices.
    """
    M, scalar = _resolve_matrix_family(M, f)
    if scalar:
        shape = (-1,) + (1,) * (f.values.ndim - 1)
        return f.with_values(M.reshape(shape) * f.values)
    out = np.einsum("ipn,in...->ip...", M, f.values)
    target = f.target if M.shape[1] == f.dim else SpaceModel(M.shape[1], f.target.q)
    return StepFunction(f.grid, out, target)


def _normalise_set(F):
    F = [] if F is None else [tuple(map(float, p)) for p in F]
    for a, b in F:
        if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
            raise InvalidInputError(f"invalid interval ({a}, {b})")
    return F


def refine(f, points):
    """Insert extra knots, duplicating values on split intervals."""
    k = f.grid.knots
    pts = np.asarray([p for p in points if k[0] < p < k[-1]], dtype=float)
    new = np.union1d(k, pts)
    if new.size == k.size:
        return f
    mids = 0.5 * (new[:-1] + new[1:])
    idx = np.searchsorted(k, mids) - 1
    return StepFunction(f.grid.with_knots(new), f.values[idx], f.target)


def restrict(f, F):
    """1_F f for F a finite union of intervals; the grid is split at F's ends."""
    F = _normalise_set(F)
    g = refine(f, [e for p in F for e in p])
    mids = g.grid.midpoints
    inside = np.zeros(mids.shape, dtype=bool)
    for a, b in F:
        inside |= (mids > a) & (mids < b)
    shape = (-1,) + (1,) * (g.values.ndim - 1)
    return g.with_values(np.where(inside.reshape(shape), g.values, 0))


def integrate(f, F=None):
    """sum over intervals in F of mu(I_i) y_i."""
    g = f if F is None else restrict(f, F)
    mu = g.grid.measures()
    return np.tensordot(mu, g.values, axes=1)


def _kernel(xi, a, b):
    """int_a^b exp(-i xi t) dt for arrays xi (K,) and interval ends (N,)."""
    xi = np.asarray(xi, dtype=float)[:, None]
    w = (b - a)[None, :]
    c = 0.5 * (a + b)[None, :]
    # e^{-i xi c} * w * sinc(xi w / 2), stable at xi = 0
    return np.exp(-1j * xi * c) * w * np.sinc(xi * w / (2 * math.pi))


def frequency_lattice(grid, k_max=None, oversample=2.0):
    """Cells of width 2 pi / (oversample * span) centred at the lattice k * dxi.

    With oversample >= 1 the midpoint sum of |f_hat|^2 reproduces
    2 pi ||f||_2^2 up to truncation at |k| <= k_max.
    """
    span = grid.knots[-1] - grid.knots[0]
    dxi = 2 * math.pi / (oversample * span)
    if k_max is None:
        hmin = float(np.min(grid.widths))
        k_max = int(math.ceil(64 * math.pi / hmin / dxi))
    k = np.arange(-k_max, k_max + 2) - 0.5
    return TimeGrid(k * dxi, "lebesgue", domain="frequency")


def fourier(f, grid_out=None):
    """f_hat(xi) = int f(t) e^{-i xi t} dt sampled at the cell midpoints of grid_out."""
    if f.grid.kind != "lebesgue" or f.grid.domain != "time":
        raise InvalidInputError("the Fourier transform needs a Lebesgue time grid")
    if grid_out is None:
        grid_out = frequency_lattice(f.grid)
    xi = grid_out.midpoints
    if not np.allclose(xi, -xi[::-1], rtol=0, atol=1e-9 * np.abs(xi).max()):
        raise InvalidInputError("frequency grid must be symmetric about 0")
    K = _kernel(xi, f.grid.left, f.grid.right)
    vals = np.tensordot(K, f.values, axes=1)
    return StepFunction(grid_out, vals, f.target)


def inverse_fourier(fhat, grid, method="lstsq"):
    """Preimage of fhat among step functions on ``grid``.

    ``lstsq`` minimises the midpoint-quadrature L^2 distance in frequency, so
    transforms of step functions on ``grid`` are recovered to rounding error.
    ``adjoint`` uses the exact Gram matrix 2 pi diag(|I_i|) of the transformed
    indicators instead; it is the better choice for transforms of functions
    outside the step space whose spectra decay faster than 1/|xi|.
    """
    if method not in ("lstsq", "adjoint"):
        raise InvalidInputError(f"unknown inversion method {method!r}")
    xi = fhat.grid.midpoints
    w = fhat.grid.widths
    K = _kernel(xi, grid.left, grid.right)
    rhs = fhat.values.reshape(len(xi), -1)
    if method == "lstsq":
        sw = np.sqrt(w)[:, None]
        coef, *_ = np.linalg.lstsq(K * sw, rhs * sw, rcond=None)
    else:
        coef = (K.conj().T @ (rhs * w[:, None])) / (2 * math.pi * grid.widths[:, None])
    coef = coef.reshape((grid.n_intervals,) + fhat.values.shape[1:])
    scale = max(np.abs(coef).max(initial=0.0), 1e-300)
    if np.abs(coef.imag).max(initial=0.0) <= 1e-8 * scale:
        coef = coef.real
    return StepFunction(grid, coef, fhat.target)


def weighted_frequency_norm(f, weight, grid_out=None, samples=DEFAULT_SAMPLES, seed=0):
    """||xi -> w(xi) f_hat(xi)|| / sqrt(2 pi) for a scalar frequency weight w."""
    fhat = fourier(f, grid_out)
    xi = fhat.grid.midpoints
    g = apply_multiplier(weight(xi), fhat)
    est = gamma_norm(g, samples, seed)
    r = 1.0 / math.sqrt(2 * math.pi)
    return GammaEstimate(est.value * r, est.method, est.samples, est.stderr * r)


def gamma_s_norm(f, s, grid_out=None, samples=DEFAULT_SAMPLES, seed=0):
    """||xi -> (1 + xi^2)^(s/2) f_hat(xi)|| / sqrt(2 pi), the gamma^s norm."""
    if not (-2.0 <= s <= 2.0):
        raise InvalidInputError(f"s must lie in [-2, 2], got {s}")
    return weighted_frequency_norm(f, lambda xi: (1 + xi ** 2) ** (s / 2), grid_out,
                                   samples, seed)


def _hardy_grams(f, alpha):
    """Covariances of sigma^(-alpha-1/2) int_0^sigma f and sigma^(-alpha+1/2) f."""
    Y = f.columns()
    a, b = f.grid.left, f.grid.right
    n = f.dim
    F = np.concatenate([np.zeros((1,) + Y.shape[1:]), np.cumsum(Y * (b - a)[:, None, None], 0)])
    beta = -2 * alpha - 1
    lhs = np.zeros((n, n))
    rhs = np.zeros((n, n))

    def add(acc, M, integral):
        if not np.any(M):
            return acc
        return acc + M * integral

    for i in range(f.grid.n_intervals):
        y = Y[i]
        p = F[i] - y * a[i]
        pp, py, yy = p @ p.T, p @ y.T + y @ p.T, y @ y.T
        lhs = add(lhs, pp, _power_integral(a[i], b[i], beta))
        lhs = add(lhs, py, _power_integral(a[i], b[i], beta + 1))
        lhs = add(lhs, yy, _power_integral(a[i], b[i], beta + 2))
        rhs = add(rhs, yy, _power_integral(a[i], b[i], 1 - 2 * alpha))
    T = b[-1]
    FT = F[-1]
    lhs = add(lhs, FT @ FT.T, T ** (-2 * alpha) / (2 * alpha))
    return lhs, rhs


def hardy_check(f, alpha, samples=DEFAULT_SAMPLES, seed=0):
    """Both sides of the weighted Hardy inequality for step functions on (0, T].

    lhs = ||sigma -> sigma^(-alpha-1/2) int_0^sigma f||,
    rhs = alpha^(-1) ||sigma -> sigma^(-alpha+1/2) f(sigma)||, norms in
    gamma(R_+; X). The power weights are integrated exactly on each interval
    and the tail beyond T in closed form, so no truncation is involved.
    Monte Carlo evaluations (q != 2) share their Gaussian draws.
    """
    if not (alpha > 0):
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    if f.grid.kind != "lebesgue":
        raise InvalidInputError("hardy_check expects a Lebesgue grid")
    if np.iscomplexobj(f.values):
        raise InvalidInputError("hardy_check expects real values")
    G_l, G_r = _hardy_grams(f, alpha)
    exp_id = rng.tag("hardy")
    lhs = gamma_norm_gram(G_l, f.target, samples, seed, exp_id)
    rhs = gamma_norm_gram(G_r, f.target, samples, seed, exp_id)
    return lhs.value, rhs.value / alpha


def gamma_bound_estimate(family, trials=64, seed=0, space=None, samples=1024, max_len=4,
                         power_steps=40):
    """Lower bound for the gamma-bound of a finite operator family.

    Each trial draws a finite sequence (T_k) from the family and vectors
    (x_k), then improves the x_k by power iteration on the block operator
    diag(T_k^* T_k), which maximises the ratio exactly when X is Hilbert.
    The returned value is the largest ratio
    (E||sum g_k T_k x_k||^2)^(1/2) / (E||sum g_k x_k||^2)^(1/2) seen.
    """
    mats = [np.asarray(T) for T in family]
    if not mats:
        raise InvalidInputError("empty operator family")
    shape = mats[0].shape
    if any(T.shape != shape for T in mats) or len(shape) != 2:
        raise InvalidInputError("family members must share a matrix shape")
    p, n = shape
    Ts = np.stack(mats)
    src = SpaceModel(n) if space is None else space
    dst = SpaceModel(p, src.q)
    exp_id = rng.tag("gamma_bound")
    best = GammaEstimate(0.0, "hilbert_exact" if src.is_hilbert else "monte_carlo")
    for trial in range(int(trials)):
        g = rng.stream(seed, exp_id, trial)
        k = int(g.integers(1, max_len + 1))
        idx = g.integers(0, len(mats), size=k)
        seq = Ts[idx]
        x = g.standard_normal((k, n))
        candidates = [x]
        y = x
        for _ in range(power_steps):
            y = np.einsum("kpn,kp->kn", seq.conj(), np.einsum("kpn,kn->kp", seq, y))
            nrm = np.linalg.norm(y)
            if nrm == 0:
                break
            y = y / nrm
        else:
            candidates.append(y)
        for c in candidates:
            num = np.einsum("kpn,kn->kp", seq, c)
            if src.is_hilbert:
                den = np.linalg.norm(c)
                r = float(np.linalg.norm(num) / den) if den > 0 else 0.0
                est = GammaEstimate(r, "hilbert_exact")
            else:
                a = _mc_from_rows(num, dst.q, samples, seed, exp_id + trial + 1)
                b = _mc_from_rows(c, src.q, samples, seed, exp_id + trial + 1)
                if b.value == 0:
                    continue
                r = a.value / b.value
                se = r * math.hypot(a.stderr / a.value if a.value else 0.0, b.stderr / b.value)
                est = GammaEstimate(r, "monte_carlo", samples, se)
            if est.value > best.value:
                best = est
    return best
