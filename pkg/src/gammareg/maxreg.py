"""Deterministic maximal regularity for u' + Au = f, u(0) = 0.

Mild solutions are propagated exactly between knots with the pair
S(h) = exp(-hA) and J(h) = int_0^h S(r) dr. Because the solution is an
explicit exponential orbit on every interval, its Gram matrices over the
half-line (and hence its gamma-norms) are computed in closed form through
Lyapunov equations rather than by sampling.
"""
import math

import numpy as np
import scipy.linalg

from . import rng
from .errors import (InsufficientGridError, InvalidInputError, NotAnalyticError,
                     PreconditionError)
from .gamma_space import (StepFunction, TimeGrid, frequency_lattice, fourier,
                          gamma_bound_estimate, gamma_norm, gamma_norm_gram,
                          inverse_fourier)
from .sectorial import SectorialOp, as_operator, frac_power, semigroup
from .space_model import SpaceModel, lq_norm


def phi1(z):
    """(1 - e^{-z}) / z with the removable singularity filled in."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1 - z / 2, -np.expm1(-safe) / safe)


class Propagator:
    """Cached S(h) and J(h) = int_0^h S(r) dr for a fixed operator."""

    def __init__(self, A):
        self.A = as_operator(A)
        self._cache = {}

    def __call__(self, h):
        h = float(h)
        hit = self._cache.get(h)
        if hit is not None:
            return hit
        A = self.A
        if A.normal:
            S = A.spectral(lambda lam: np.exp(-h * lam))
            J = A.spectral(lambda lam: h * phi1(h * lam))
        else:
            n = A.dim
            big = np.zeros((2 * n, 2 * n), dtype=A.matrix.dtype)
            big[:n, :n] = -h * A.matrix
            big[:n, n:] = h * np.eye(n)
            E = scipy.linalg.expm(big)
            S, J = E[:n, :n], E[:n, n:]
        self._cache[h] = (S, J)
        return S, J


def horizon(A, tol=1e-8):
    """A time T with ||S(T)|| <= tol."""
    A = as_operator(A)
    rate = float(np.min(A.eigvals.real))
    if rate <= 0:
        raise PreconditionError("the semigroup is not exponentially stable")
    T = math.log(1 / tol) / rate
    while np.linalg.norm(semigroup(A, T), 2) > tol:
        T *= 1.5
    return T


class MildSolution:
    """u = S * f sampled at knots, with exact evaluation in between."""

    def __init__(self, A, f, knots, values):
        self.A = A
        self.f = f
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values)
        self._prop = Propagator(A)

    @property
    def grid(self):
        return TimeGrid(self.knots) if self.knots.size > 1 else None

    def _forcing(self, t):
        """Value of f on the interval right after time t (zero outside the support)."""
        k = self.f.grid.knots
        i = np.searchsorted(k, t, side="right") - 1
        out = np.zeros((np.size(t), self.f.dim), dtype=self.f.values.dtype)
        ok = (i >= 0) & (i < self.f.grid.n_intervals)
        out[ok] = self.f.values[i[ok]]
        return out

    def at(self, t):
        """u(t) for an array of times, by exact propagation from the previous knot."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, None)
        base = self.knots[j]
        out = np.empty((t.size, self.A.dim), dtype=np.result_type(self.values, float))
        y = self._forcing(base)
        for idx in range(t.size):
            h = t[idx] - base[idx]
            if h == 0:
                out[idx] = self.values[j[idx]]
                continue
            S, J = self._prop(h)
            out[idx] = S @ self.values[j[idx]] + J @ y[idx]
        return out

    def derivative(self, t):
        """u'(t) = f(t) - A u(t) (right limits at jumps of f)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self._forcing(t) - self.at(t) @ self.A.matrix.T

    def balance_residual(self, nodes=8):
        """max_k ||u(t_k) + int_0^{t_k} Au - int_0^{t_k} f|| / (||f||_1 + tiny).

        The integral of Au is taken by Gauss-Legendre quadrature of the exact
        orbit, independently of the propagation used to produce the knots.
        """
        x, w = np.polynomial.legendre.leggauss(nodes)
        acc_Au = np.zeros(self.A.dim, dtype=np.result_type(self.values, float))
        acc_f = np.zeros_like(acc_Au)
        worst = np.linalg.norm(self.values[0])
        scale = 0.0
        for k in range(self.knots.size - 1):
            a, b = self.knots[k], self.knots[k + 1]
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            acc_Au = acc_Au + 0.5 * (b - a) * (w @ (self.at(t) @ self.A.matrix.T))
            acc_f = acc_f + (b - a) * self._forcing(np.array([a]))[0]
            scale += (b - a) * np.linalg.norm(self._forcing(np.array([a]))[0])
            worst = max(worst, np.linalg.norm(self.values[k + 1] + acc_Au - acc_f))
        return worst / max(scale, 1e-300)

    def gram(self, B=None):
        """int_0^inf (B u)(B u)^* dt in closed form (A invertible, stable)."""
        A = self.A
        if not A.invertible:
            raise PreconditionError("closed-form Gram matrices need an invertible operator")
        n = A.dim
        B = np.eye(n) if B is None else np.asarray(B)
        Ainv = np.linalg.inv(A.matrix)
        fk = self.f.grid.knots
        u0 = self.values[0] if self.knots[0] == 0 else self.at(np.array([0.0]))[0]
        u = u0.astype(np.result_type(u0, A.matrix, float))
        t0 = 0.0
        G = np.zeros((B.shape[0], B.shape[0]), dtype=np.result_type(B, u, float))
        # before the support of f (if it starts later) the orbit is free decay
        starts = list(fk[:-1])
        widths = list(np.diff(fk))
        vals = list(self.f.values)
        if fk[0] > 0:
            starts.insert(0, 0.0)
            widths.insert(0, fk[0])
            vals.insert(0, np.zeros(n))
        for a, h, y in zip(starts, widths, vals):
            S, J = self._prop(h)
            c = u - Ainv @ y
            d = B @ (Ainv @ y)
            X = _lyap_tail(A.matrix, c)
            Xh = X - S @ X @ S.conj().T
            BJc = B @ (J @ c)
            G = G + B @ Xh @ B.conj().T + np.outer(BJc, d.conj()) + np.outer(d, BJc.conj()) \
                + h * np.outer(d, d.conj())
            u = S @ u + J @ y
            t0 = a + h
        X = _lyap_tail(A.matrix, u)
        G = G + B @ X @ B.conj().T
        return 0.5 * (G + G.conj().T)

    def averages_Au(self, grid):
        """Exact interval averages of t -> A u(t) on a time grid."""
        A = self.A.matrix
        out = np.empty((grid.n_intervals, self.A.dim), dtype=np.result_type(self.values, float))
        for i, (a, b) in enumerate(zip(grid.left, grid.right)):
            pts = np.concatenate([[a], self.f.grid.knots[(self.f.grid.knots > a) & (self.f.grid.knots < b)], [b]])
            ua = self.at(pts)
            total = np.zeros(self.A.dim, dtype=out.dtype)
            for k in range(pts.size - 1):
                h = pts[k + 1] - pts[k]
                y = self._forcing(pts[k:k + 1])[0]
                S, J = self._prop(h)
                # A int_0^h u = (I - S(h)) u_k + h y - J(h) y
                total += ua[k] - S @ ua[k] + h * y - J @ y
            out[i] = total / (b - a)
        return out


def _lyap_tail(A, c):
    """int_0^inf S(r) c c^* S(r)^* dr, i.e. the solution of A X + X A^* = c c^*."""
    return scipy.linalg.solve_continuous_lyapunov(A, np.outer(c, c.conj()))


def _check_analytic(A):
    if A.angle >= math.pi / 2:
        raise NotAnalyticError(
            f"sector angle {A.angle:.4g} >= pi/2: -A does not generate an analytic semigroup")


def convolve(A, f, grid_out=None):
    """Mild solution u(t) = int_0^t S(t-s) f(s) ds at the knots of grid_out."""
    A = as_operator(A)
    _check_analytic(A)
    if f.is_operator:
        raise InvalidInputError("convolve expects a vector-valued step function")
    out_knots = f.grid.knots if grid_out is None else grid_out.knots
    if out_knots[0] < 0:
        raise InvalidInputError("output grid must start at t >= 0")
    marks = np.union1d(np.concatenate([[0.0], out_knots]),
                       f.grid.knots[f.grid.knots <= out_knots[-1]])
    prop = Propagator(A)
    sol = MildSolution(A, f, np.array([0.0]), np.zeros((1, A.dim)))
    u = np.zeros(A.dim, dtype=np.result_type(f.values, A.matrix, float))
    path = {0.0: u}
    for a, b in zip(marks[:-1], marks[1:]):
        y = sol._forcing(np.array([a]))[0]
        S, J = prop(b - a)
        u = S @ u + J @ y
        path[b] = u
    values = np.array([path[t] for t in out_knots])
    return MildSolution(A, f, out_knots, values)


def output_grid(A, f, growth=1.25, tol=1e-8):
    """f's knots followed by geometrically growing steps up to the decay horizon."""
    A = as_operator(A)
    k = list(f.grid.knots)
    if k[0] > 0:
        k.insert(0, 0.0)
    end = k[-1] + horizon(A, tol)
    h = float(np.min(np.diff(k)))
    while k[-1] < end:
        k.append(k[-1] + h)
        h *= growth
    return TimeGrid(k)


def _is_power(s, theta):
    """(i s)^theta on the principal branch, with the value 0 at s = 0 for theta > 0."""
    s = np.asarray(s, dtype=float)
    if theta == 0:
        return np.ones(s.shape, dtype=complex)
    return np.abs(s) ** theta * np.exp(1j * np.sign(s) * theta * math.pi / 2)


def symbol_apply(A, s, vecs, theta):
    """m_theta(s) v = (is)^theta A^(1-theta) (is + A)^{-1} v for rows v."""
    A = as_operator(A)
    vecs = np.asarray(vecs, dtype=complex)
    ist = _is_power(s, theta)
    if A.normal:
        T, Z = A.schur
        lam = A.eigvals
        coef = vecs @ Z.conj()
        sym = ist[:, None] * lam[None, :] ** (1 - theta) / (1j * s[:, None] + lam[None, :])
        return (coef * sym) @ Z.T
    P = frac_power(A, 1 - theta)
    M = 1j * s[:, None, None] * np.eye(A.dim)[None] + A.matrix[None]
    v = np.linalg.solve(M, vecs[..., None])[..., 0]
    return ist[:, None] * (v @ np.asarray(P).T)


def dtheta_a1mtheta(A, f, theta, grid_out=None, xi_max=None):
    """D^theta A^(1-theta) u for u = S * f, computed through the Fourier symbol.

    The transform of f is sampled on a frequency lattice, multiplied by
    m_theta(s) = (is)^theta A^(1-theta) (is + A)^{-1} and mapped back to step
    functions on ``grid_out`` with the exact Gram matrix of that step space.
    """
    A = as_operator(A)
    if not (0.0 <= theta <= 1.0):
        raise InvalidInputError(f"theta must lie in [0, 1], got {theta}")
    if theta < 1 and not A.invertible:
        raise PreconditionError("theta < 1 needs an invertible operator")
    if grid_out is None:
        grid_out = output_grid(A, f)
    hmin = float(np.min(grid_out.widths))
    if xi_max is None:
        xi_max = 64.0 / hmin
    span = grid_out.knots[-1] - grid_out.knots[0]
    dxi = 2 * math.pi / (2 * span)
    lattice = frequency_lattice(grid_out, int(math.ceil(xi_max / dxi)))
    fhat = fourier(f, lattice)
    s = lattice.midpoints
    if theta == 1:
        # is (is + A)^{-1} = I - A (is + A)^{-1}: the identity part is inverted
        # exactly on the step space, the smooth remainder by the adjoint rule
        vals = symbol_apply(A, s, fhat.values, 0.0)
        rest = inverse_fourier(StepFunction(lattice, vals, f.target), grid_out, "adjoint")
        return StepFunction(grid_out, resample_average(f, grid_out) - rest.values, f.target)
    vals = symbol_apply(A, s, fhat.values, theta)
    return inverse_fourier(StepFunction(lattice, vals, f.target), grid_out, "adjoint")


def resample_average(f, grid):
    """Interval averages of the step function f on another grid."""
    k = f.grid.knots
    out = np.zeros((grid.n_intervals,) + f.values.shape[1:], dtype=f.values.dtype)
    for i, (a, b) in enumerate(zip(grid.left, grid.right)):
        lo = np.maximum(k[:-1], a)
        hi = np.minimum(k[1:], b)
        ov = np.clip(hi - lo, 0.0, None)
        out[i] = np.tensordot(ov, f.values, axes=1) / (b - a)
    return out


def random_forcing(A, seed, index, N=16, space=None, experiment="maxreg"):
    """A seeded random step function on a time scale matched to A."""
    A = as_operator(A)
    g = rng.stream(seed, rng.tag(experiment), index)
    scale = 1.0 / A.min_modulus if A.min_modulus > 0 else 1.0
    T = scale * math.exp(g.uniform(-1.5, 1.5))
    widths = g.uniform(0.2, 1.0, size=N)
    knots = np.concatenate([[0.0], np.cumsum(widths)]) * (T / widths.sum())
    vals = g.standard_normal((N, A.dim))
    return StepFunction(TimeGrid(knots), vals, space or SpaceModel(A.dim))


def maxreg_ratio(A, f, samples=4096, seed=0):
    """||A u||_{gamma(R_+;X)} / ||f||_{gamma(R_+;X)} for u = S * f."""
    A = as_operator(A)
    u = convolve(A, f)
    num = gamma_norm_gram(u.gram(A.matrix).real, f.target, samples, seed, rng.tag("maxreg_num"))
    den = gamma_norm(f, samples, seed, rng.tag("maxreg_num"))
    return num.value / den.value if den.value > 0 else 0.0


def maxreg_constant(A, trials=100, seed=0, space=None, N=16, samples=4096):
    """Largest ratio ||Au|| / ||f|| over seeded random step functions (a lower bound for C)."""
    A = as_operator(A)
    _check_analytic(A)
    space = space or SpaceModel(A.dim)
    best = 0.0
    for i in range(int(trials)):
        f = random_forcing(A, seed, i, N, space)
        best = max(best, maxreg_ratio(A, f, samples, seed))
    return best


def symbol_sup(A, points=257):
    """max over a log frequency grid of ||A (is + A)^-1||, a lower bound for the maximal-regularity constant.

    On Hilbert spaces Plancherel makes it the exact operator norm of f -> A S * f.
    """
    A = as_operator(A)
    _check_analytic(A)
    lo, hi = A.min_modulus, A.max_modulus
    pos = np.logspace(math.log10(lo) - 4, math.log10(hi) + 4, points)
    s = np.concatenate([-pos[::-1], [0.0], pos])
    n = A.dim
    return max(float(np.linalg.norm(A.matrix @ np.linalg.inv(1j * si * np.eye(n) + A.matrix), 2))
               for si in s)


def holder_trace_norms(u, theta, levels=None, samples_per_level=256):
    """Dyadic Hoelder seminorm of A^(1-theta) u (exponent theta - 1/2) and sup ||A^(1/2) u||.

    Pair distances are h = 2^-k * T for k in ``levels``; the base points are
    ``samples_per_level`` evenly spaced times in [0, T - h].
    """
    if not (0.5 < theta <= 1.0):
        raise InvalidInputError(f"the Hoelder part needs theta in (1/2, 1], got {theta}")
    A = u.A
    if not A.invertible:
        raise PreconditionError("fractional domains need an invertible operator")
    T = float(u.knots[-1])
    if not np.any(u.values) and not np.any(u.f.values):
        return 0.0, 0.0
    P = np.asarray(frac_power(A, 1 - theta))
    H = np.asarray(frac_power(A, 0.5))
    levels = range(1, 11) if levels is None else levels
    q = u.f.target.q
    best = 0.0
    for k in levels:
        h = T * 2.0 ** (-k)
        t = np.linspace(0.0, T - h, samples_per_level)
        d = (u.at(t + h) - u.at(t)) @ P.T
        best = max(best, float(np.max(lq_norm(d, q))) / h ** (theta - 0.5))
    t = np.union1d(u.knots, np.linspace(0.0, T, 4 * samples_per_level))
    sup = float(np.max(lq_norm(u.at(t) @ H.T, q)))
    return best, sup


def extension(A, x, t):
    """Rows (1 + t_j A)^{-1} x."""
    A = as_operator(A)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x)
    M = np.eye(A.dim)[None] + t[:, None, None] * A.matrix[None]
    return np.linalg.solve(M, np.broadcast_to(x, (t.size, A.dim))[..., None])[..., 0]


def log_knots(lo, hi, per_decade=64):
    n = int(math.ceil(math.log10(hi / lo) * per_decade))
    return np.logspace(math.log10(lo), math.log10(hi), n + 1)


def trace_zero(t, values, relative_start=1e-4):
    """u(0) from samples on a log-spaced grid near 0 via the averaging identity.

    The identity u(0) = s^-1 int_0^s u - int_0^s t^-2 int_0^t (u(t) - u(r)) dr dt
    is evaluated with trapezoidal sums at s = t_1 and s = t_2 (the piece
    [0, t_0] uses the constant extension u(t_0)) and extrapolated linearly
    in s to s = 0.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(values)
    if t.size < 3 or t[0] <= 0 or t[0] > relative_start * t[-1]:
        raise InsufficientGridError(
            "trace_zero needs at least three knots with t_0 > 0 close to 0 "
            f"(t_0 <= {relative_start:g} * t_end)")
    tt = np.concatenate([[0.0], t])
    uu = np.concatenate([u[:1], u])

    def value(m):
        ts, us = tt[:m + 2], uu[:m + 2]
        s = ts[-1]
        cum = np.concatenate([[np.zeros_like(us[0])],
                              np.cumsum(0.5 * np.diff(ts)[:, None] * (us[1:] + us[:-1]), axis=0)])
        first = cum[-1] / s
        inner = ts[:, None] * us - cum
        g = np.zeros_like(inner)
        g[1:] = inner[1:] / ts[1:, None] ** 2
        second = np.sum(0.5 * np.diff(ts)[:, None] * (g[1:] + g[:-1]), axis=0)
        return first - second, s

    r1, s1 = value(1)
    r2, s2 = value(2)
    return (s2 * r1 - s1 * r2) / (s2 - s1)


class ExpSum:
    """u(t) = sum_j e^{-b_j t} x_j, a smooth test function with closed-form calculus."""

    def __init__(self, rates, vectors):
        self.rates = np.asarray(rates, dtype=float)
        self.vectors = np.asarray(vectors, dtype=float)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-np.outer(t, self.rates)) @ self.vectors

    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return -np.exp(-np.outer(t, self.rates)) @ (self.rates[:, None] * self.vectors)

    def average(self, s):
        """s^-1 int_0^s u."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        z = np.outer(s, self.rates)
        return phi1(z) @ self.vectors

    def second_term(self, s):
        """int_0^s t^-2 int_0^t r u'(r) dr dt, in closed form: -sum_j (1 - phi1(b_j s)) x_j."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return -(1 - phi1(np.outer(s, self.rates))) @ self.vectors

    def kernel(self, t):
        """t^-2 int_0^t r u'(r) dr."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = np.outer(t, self.rates)
        small = z < 1e-4
        zs = np.where(small, 1.0, z)
        # (1 - e^-z (1 + z)) / z^2, with its Taylor expansion near 0
        h = np.where(small, 0.5 - z / 3, (1 - np.exp(-zs) * (1 + zs)) / zs ** 2)
        return -(h * self.rates[None, :]) @ self.vectors

    def gram(self, B=None):
        """int_0^inf (B u)(B u)^T dt and the same for u'."""
        V = self.vectors if B is None else self.vectors @ np.asarray(B).T
        b = self.rates
        K = 1.0 / (b[:, None] + b[None, :])
        G = V.T @ K @ V
        D = (b[:, None] * self.vectors).T @ K @ (b[:, None] * self.vectors)
        return G, D


def _gram_quadrature(fun, lo, hi, per_decade=64):
    """int_0^inf fun(s) fun(s)^* ds by the trapezoidal rule in log s on [lo, hi]."""
    s = log_knots(lo, hi, per_decade)
    V = fun(s) * np.sqrt(s)[:, None]
    h = math.log(s[1] / s[0])
    w = np.full(s.size, h)
    w[[0, -1]] *= 0.5
    return (V * w[:, None]).T @ V.conj()


def extension_norm(A, x, space=None, samples=4096, seed=0):
    """||t -> A (1 + tA)^{-1} x|| in gamma(R_+; X)."""
    A = as_operator(A)
    lo, hi = A.min_modulus, A.max_modulus
    G = _gram_quadrature(lambda t: extension(A, x, t) @ A.matrix.T, 1e-14 / hi, 1e14 / lo)
    return gamma_norm_gram(G.real, space or SpaceModel(A.dim), samples, seed)


def trace_constant(A):
    """Smallest C with ||x|| <= C ||s -> A^(1/2)(1 + sA)^{-1} x||_{L^2(R_+; l^2)}."""
    A = as_operator(A)
    H = np.asarray(frac_power(A, 0.5))
    lo, hi = A.min_modulus, A.max_modulus
    s = log_knots(1e-14 / hi, 1e14 / lo)
    h = math.log(s[1] / s[0])
    M = np.eye(A.dim)[None] + s[:, None, None] * A.matrix[None]
    R = np.linalg.solve(M, np.broadcast_to(np.eye(A.dim), M.shape))
    K = np.einsum("ij,sjk->sik", H, R)
    w = np.full(s.size, h) * s
    w[[0, -1]] *= 0.5
    Q = np.einsum("s,sji,sjk->ik", w, K.conj(), K)
    return 1.0 / math.sqrt(float(np.linalg.eigvalsh(0.5 * (Q + Q.conj().T)).min()))


def trace_bound_chain(A, u, family_points=64):
    """Every link of the trace estimate for a smooth u (Hilbert space norms).

    Returns a dict with the trace norm ||A^(1/2) u(0)||, the constant C_ext
    of the lower square-function bound, the gamma-bounds C_res of
    {(1 + sA)^{-1}} and {sA(1 + sA)^{-1}}, the two terms T1 and T2, and
    the norms ||Au|| and ||u'||.
    """
    A = as_operator(A)
    n = A.dim
    H = np.asarray(frac_power(A, 0.5))
    lo, hi = A.min_modulus, A.max_modulus
    trace = float(np.linalg.norm(H @ u(0.0)[0]))
    c_ext = trace_constant(A)
    sig = np.concatenate([[0.0], np.logspace(math.log10(lo) - 8, math.log10(hi) + 8, family_points)])
    R = [np.linalg.inv(np.eye(n) + s_ * A.matrix) for s_ in sig]
    c1 = gamma_bound_estimate(R, trials=32, seed=0).value
    c2 = gamma_bound_estimate([s_ * A.matrix @ r for s_, r in zip(sig, R)] + [np.eye(n)],
                              trials=32, seed=1).value
    c_res = max(c1, c2)

    def t1_fun(s):
        avg = u.average(s)
        M = np.eye(n)[None] + s[:, None, None] * A.matrix[None]
        return np.linalg.solve(M, avg[..., None])[..., 0] @ A.matrix.T

    def t2_fun(s):
        val = u.second_term(s)
        M = np.eye(n)[None] + s[:, None, None] * A.matrix[None]
        return np.linalg.solve(M, val[..., None])[..., 0] @ A.matrix.T

    rmin = min(lo, float(u.rates.min()))
    rmax = max(hi, float(u.rates.max()))
    T1 = math.sqrt(np.trace(_gram_quadrature(t1_fun, 1e-12 / rmax, 1e12 / rmin)).real)
    T2 = math.sqrt(np.trace(_gram_quadrature(t2_fun, 1e-12 / rmax, 1e12 / rmin)).real)
    G, D = u.gram(A.matrix)
    return {"trace": trace, "c_ext": c_ext, "c_res": c_res, "T1": T1, "T2": T2,
            "Au": math.sqrt(np.trace(G)), "du": math.sqrt(np.trace(D))}


def gamma_sectoriality_from_maxreg(A, C=None, s_points=129, trials=64, seed=0):
    """Profile of ||s (is + A)^{-1}|| and a gamma-bound estimate of that family.

    Returns (profile, bound, ratio) where profile is a list of (s, norm),
    bound the gamma_bound_estimate of the sampled family and ratio = bound / C
    when a maximal-regularity constant C is supplied.
    """
    A = as_operator(A)
    if not A.invertible:
        raise PreconditionError("needs an invertible operator")
    lo, hi = A.min_modulus, A.max_modulus
    pos = np.logspace(math.log10(lo) - 6, math.log10(hi) + 6, (s_points - 1) // 2)
    s = np.concatenate([-pos[::-1], [0.0], pos])
    fam = [si * np.linalg.inv(1j * si * np.eye(A.dim) + A.matrix) for si in s]
    profile = [(float(si), float(np.linalg.norm(F, 2))) for si, F in zip(s, fam)]
    bound = gamma_bound_estimate(fam, trials=trials, seed=seed)
    ratio = bound.value / C if C else None
    return profile, bound, ratio
