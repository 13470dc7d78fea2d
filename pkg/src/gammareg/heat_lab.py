"""Stochastic heat equation with gradient noise on the 1D or 2D torus.

Fields are stored as Fourier coefficients in numpy's FFT layout on an M^d
collocation grid of [0, 2 pi)^d, normalised so that u(x) = sum_k u_k e^{ikx}.
Only modes with |k| <= K are kept; K <= M / 3 keeps quadratic products free
of aliasing. The Laplacian is integrated exactly and the noise is frozen over
each step (exponential Euler).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from . import rng
from .errors import InvalidConfigError, InvalidInputError, SpecViolationError
from .space_model import lq_norm
from .stochastic import CylindricalBM


def wavenumbers(M, d):
    k = np.fft.fftfreq(M, 1.0 / M)
    return np.stack(np.meshgrid(*([k] * d), indexing="ij")) if d > 1 else k[None]


class SpectralField:
    """Fourier coefficients of real fields, one per sample, on the d-torus."""

    def __init__(self, coeffs, K, d=1, q=2.0, s=0.0):
        c = np.asarray(coeffs, dtype=complex)
        if d not in (1, 2):
            raise InvalidConfigError("only d = 1 or 2 is supported")
        M = c.shape[-1]
        if c.ndim < d or any(n != M for n in c.shape[-d:]):
            raise InvalidInputError("coefficients must end in d axes of equal length M")
        if K > M / 3:
            raise InvalidConfigError(f"cutoff K={K} breaks the 2/3 dealiasing rule for M={M}")
        self.d, self.K, self.M, self.q, self.s = d, int(K), M, float(q), float(s)
        self.k = wavenumbers(M, d)
        self.k2 = np.sum(self.k ** 2, axis=0)
        self.mask = self.k2 <= self.K ** 2
        self.coeffs = c * self.mask
        self.growth_flag = False

    @classmethod
    def from_values(cls, values, K, d=1, q=2.0, s=0.0):
        v = np.asarray(values, dtype=float)
        axes = tuple(range(-d, 0))
        return cls(np.fft.fftn(v, axes=axes) / v.shape[-1] ** d, K, d, q, s)

    @classmethod
    def from_modes(cls, modes, K, M, d=1, samples=None, q=2.0, s=0.0):
        """Real field from a dict {k: amplitude} (k an int or a d-tuple); conjugates are added."""
        c = np.zeros((M,) * d, dtype=complex)
        for k, a in modes.items():
            idx = (k,) if np.isscalar(k) else tuple(k)
            c[tuple(i % M for i in idx)] += a
            c[tuple(-i % M for i in idx)] += np.conj(a)
        if samples is not None:
            c = np.broadcast_to(c, (samples,) + c.shape).copy()
        return cls(c, K, d, q, s)

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    def with_coeffs(self, coeffs):
        out = SpectralField(coeffs, self.K, self.d, self.q, self.s)
        out.growth_flag = self.growth_flag
        return out

    def values(self):
        return np.fft.ifftn(self.coeffs * self.M ** self.d, axes=self.axes).real

    def derivative(self, r):
        """Physical values of D^r u, stacked on a new axis after the sample axes.

        r = 0 gives u, r = 1 the gradient, r = 2 the Hessian (d^2 entries).
        """
        return _derivative(self.coeffs, self.k, r, self.M, self.axes)

    def reality_defect(self):
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=self.axes), 1, axis=self.axes)
        return float(np.abs(c - np.conj(flipped)).max(initial=0.0))

    def hsq_norm(self, s=None, q=None):
        """||(1 - Laplacian)^(s/2) u||_{L^q} over [0, 2 pi)^d, by collocation."""
        s = self.s if s is None else s
        q = self.q if q is None else q
        c = self.coeffs * (1 + self.k2) ** (s / 2)
        v = np.fft.ifftn(c * self.M ** self.d, axes=self.axes).real
        cell = (2 * math.pi / self.M) ** self.d
        flat = v.reshape(v.shape[:v.ndim - self.d] + (-1,))
        return lq_norm(flat, q) * cell ** (1.0 / q) if math.isfinite(q) else np.max(np.abs(flat), -1)


def _derivative(coeffs, k, r, M, axes):
    d = k.shape[0]
    if r == 0:
        parts = [coeffs]
    elif r == 1:
        parts = [1j * k[i] * coeffs for i in range(d)]
    elif r == 2:
        parts = [-k[i] * k[j] * coeffs for i in range(d) for j in range(d)]
    else:
        raise InvalidInputError("derivative order must be 0, 1 or 2")
    vals = [np.fft.ifftn(p * M ** d, axes=axes).real for p in parts]
    return np.stack(vals, axis=coeffs.ndim - d)


@dataclass
class NoisePreset:
    """Gradient noise b(x) . grad u dw, or a short sequence sum_n g_n(u, Du) dw_n.

    ``b`` is a scalar (d = 1), a d-vector, or a callable on collocation points
    returning shape (d, M, ...). ``g`` is a list of callables g_n(u, Du)
    acting on physical values, with declared Lipschitz constants.
    """

    kind: str = "gradient"
    b: object = 0.0
    g: list = field(default_factory=list)
    L_g1: float = 0.0
    L_g2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gradient", "sequence"):
            raise InvalidConfigError(f"unknown noise type {self.kind!r}")
        if self.kind == "sequence" and not (1 <= len(self.g) <= 8):
            raise InvalidConfigError("sequence noise needs between 1 and 8 terms")

    @property
    def m(self):
        return 1 if self.kind == "gradient" else len(self.g)

    @property
    def constant(self):
        return self.kind == "gradient" and not callable(self.b)

    def b_vector(self, d):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.size == 1:
            b = np.full(d, b[0])
        if b.size != d:
            raise InvalidConfigError(f"b has {b.size} components for d={d}")
        return b

    def parabolic(self, d):
        """|b|^2 < 2 for constant gradient noise; None when not decidable mode by mode."""
        if not self.constant:
            return None
        return bool(np.sum(self.b_vector(d) ** 2) < 2)

    def check_sequence(self, points=256, seed=0, d=1):
        """Worst ratio of (sum_n |g_n(x,a) - g_n(y,c)|^2)^(1/2) to L_g1|x-y| + L_g2|a-c|."""
        g = rng.stream(seed, rng.tag("noise-seq"))
        x, y = g.standard_normal((2, points))
        a, c = g.standard_normal((2, d, points))
        lhs = np.sqrt(sum((gn(x, a) - gn(y, c)) ** 2 for gn in self.g))
        rhs = self.L_g1 * np.abs(x - y) + self.L_g2 * np.linalg.norm(a - c, axis=0)
        return float(np.max(lhs / np.maximum(rhs, 1e-300)))


def _noise_coeffs(field_, noise):
    """Fourier coefficients of B(u), shape coeffs.shape + (m,)."""
    c, k, d, M = field_.coeffs, field_.k, field_.d, field_.M
    ax = field_.axes
    if noise.kind == "gradient":
        if noise.constant:
            b = noise.b_vector(d)
            bk = np.tensordot(b, k, axes=1)
            return (1j * bk * c)[..., None]
        grad = _derivative(c, k, 1, M, ax)
        x = np.meshgrid(*([np.arange(M) * 2 * math.pi / M] * d), indexing="ij")
        b = np.asarray(noise.b(np.stack(x)))
        phys = np.sum(b * grad, axis=c.ndim - d)
        out = np.fft.fftn(phys, axes=ax) / M ** d
        return (out * field_.mask)[..., None]
    u = field_.values()
    Du = np.moveaxis(_derivative(c, k, 1, M, ax), c.ndim - d, 0)
    outs = [np.fft.fftn(gn(u, Du), axes=ax) / M ** d * field_.mask for gn in noise.g]
    return np.stack(outs, axis=-1)


def spectral_heat_step(field_, noise, dt, dW, method="euler"):
    """One step of du = Laplacian u dt + B(u) dW.

    ``euler`` freezes B(u) at the left point: u_k <- e^{-|k|^2 dt}(u_k + B(u)_k dW).
    ``exact`` is available for constant gradient noise, where each mode is
    the explicit exponential u_k e^{(-|k|^2 + (b.k)^2 / 2) dt + i (b.k) dW}.
    dW has shape (samples,) or (samples, m).
    """
    dW = np.asarray(dW, dtype=float)
    if dW.ndim == 1:
        dW = dW[:, None]
    c = field_.coeffs
    lead = c.ndim - field_.d
    if lead != 1 or c.shape[0] != dW.shape[0]:
        raise InvalidInputError("field must carry one sample axis matching dW")
    par = noise.parabolic(field_.d)
    flag = field_.growth_flag
    if par is False and not flag:
        warnings.warn("|b|^2 >= 2: second moments grow, stochastic parabolicity fails",
                      RuntimeWarning, stacklevel=2)
        flag = True
    decay = np.exp(-field_.k2 * dt)
    shape = (-1,) + (1,) * field_.d
    if method == "exact":
        if not noise.constant:
            raise InvalidInputError("the exact step needs constant gradient noise")
        bk = np.tensordot(noise.b_vector(field_.d), field_.k, axes=1)
        expo = -field_.k2 * dt + 0.5 * bk ** 2 * dt + 1j * bk * dW[:, 0].reshape(shape)
        new = c * np.exp(expo)
    elif method == "euler":
        dw = dW.reshape((dW.shape[0],) + (1,) * field_.d + (dW.shape[1],))
        kick = np.sum(_noise_coeffs(field_, noise) * dw, axis=-1)
        new = decay * (c + kick)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    out = field_.with_coeffs(new)
    out.growth_flag = flag
    return out


@dataclass
class HeatRun:
    """Coefficient trajectories (S, J, M...) at stored times, with the run parameters."""

    times: np.ndarray
    coeffs: np.ndarray
    K: int
    M: int
    d: int
    dt: float
    seed: int
    growth_flag: bool = False
    label: str = ""

    @property
    def samples(self):
        return self.coeffs.shape[0]

    def field(self, j):
        return SpectralField(self.coeffs[:, j], self.K, self.d)


def simulate(u0, noise, T, levels, samples, seed, K=None, method="euler", store_every=1):
    """Run the spectral scheme with 2^levels steps; Brownian paths are dyadic and keyed by seed.

    Runs with the same seed and different ``levels`` are driven by the same
    Brownian paths. ``u0`` is a SpectralField without a sample axis (or with
    one of size ``samples``).
    """
    K = u0.K if K is None else K
    c0 = u0.coeffs
    if c0.ndim == u0.d:
        c0 = np.broadcast_to(c0, (samples,) + c0.shape)
    f = SpectralField(np.array(c0), K, u0.d, u0.q, u0.s)
    W = CylindricalBM(noise.m, T, levels, samples, seed)
    N = 2 ** levels
    dt = T / N
    stored_t, stored = [0.0], [f.coeffs]
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        for j in range(N):
            f = spectral_heat_step(f, noise, dt, W.increments[:, j], method)
            if (j + 1) % store_every == 0:
                stored_t.append((j + 1) * dt)
                stored.append(f.coeffs)
    return HeatRun(np.array(stored_t), np.stack(stored, axis=1), K, f.M, f.d, dt, seed,
                   f.growth_flag, noise.kind)


def deterministic_run(u0, times):
    """Exact heat flow u_k(t) = e^{-|k|^2 t} u_k(0) at the given times (one sample)."""
    times = np.asarray(times, dtype=float)
    c = u0.coeffs
    traj = np.exp(-np.multiply.outer(times, u0.k2)) * c
    return HeatRun(times, traj[None], u0.K, u0.M, u0.d, 0.0, 0, False, "deterministic")


def mode_growth_rate(run, k, index=-1):
    """Estimate of (1/(|k|^2 t)) log(E|u_k(t)|^2 / |u_k(0)|^2) with a delta-method stderr."""
    idx = (slice(None), index) + tuple(np.atleast_1d(k) % run.M)
    idx0 = (slice(None), 0) + tuple(np.atleast_1d(k) % run.M)
    e = np.abs(run.coeffs[idx]) ** 2
    e0 = float(np.mean(np.abs(run.coeffs[idx0]) ** 2))
    m, se = float(e.mean()), float(e.std(ddof=1) / math.sqrt(e.size))
    k2 = float(np.sum(np.atleast_1d(k) ** 2))
    t = run.times[index]
    return math.log(m / e0) / (k2 * t), se / (m * k2 * t)


def nemytskii(f, u, Du=None, D2u=None):
    """Pointwise f(u, Du, D^2u) on collocation values; derivative axes come first."""
    return f(u, Du, D2u)


def _time_weights(times):
    h = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def sqfn_space_time(values, times, q, d=1):
    """(int (int |v|^2 dt)^(q/2) dx)^(1/q) for values (S, J, [c,] M...), trapezoidal in t.

    An optional component axis after J (gradients, Hessians) is summed in
    the Euclidean sense.
    """
    v = np.asarray(values)
    w = _time_weights(np.asarray(times))
    sq = np.tensordot(w, np.abs(v) ** 2, axes=([0], [1]))
    if sq.ndim == d + 2:
        sq = sq.sum(axis=1)
    M = sq.shape[-1]
    cell = (2 * math.pi / M) ** d
    flat = np.sqrt(sq).reshape(sq.shape[0], -1)
    return lq_norm(flat, q) * cell ** (1.0 / q)


def lipschitz_check(f, L1, L2, L3, pairs=50, seed=0, M=64, J=33, T=1.0, d=1, q=2.0, K=None):
    """Both sides of the Nemytskii Lipschitz estimate on random smooth space-time pairs.

    lhs = ||f(phi1, D phi1, D^2 phi1) - f(phi2, ...)||, rhs = L1 ||phi1 - phi2||
    + L2 ||D(phi1 - phi2)|| + L3 ||D^2(phi1 - phi2)||, all in the square-function
    norm. Pointwise Lipschitz bounds give the estimate with constant 1. Returns
    the relative margins (rhs - lhs) / rhs; raises SpecViolationError if any
    margin is negative beyond rounding.
    """
    K = M // 3 if K is None else K
    g = rng.stream(seed, rng.tag("nemytskii"))
    times = np.linspace(0.0, T, J)
    k = wavenumbers(M, d)
    k2 = np.sum(k ** 2, axis=0)
    mask = (k2 <= K ** 2) & (k2 > 0)
    axes = tuple(range(-d, 0))
    margins = []
    for _ in range(pairs):
        fields = []
        for _ in range(2):
            amp = g.standard_normal((J,) + k2.shape) + 1j * g.standard_normal((J,) + k2.shape)
            amp = amp * mask * (1 + k2) ** (-g.uniform(1.0, 2.0))
            real = np.fft.ifftn(amp, axes=axes).real
            fields.append(np.fft.fftn(real, axes=axes) / M ** d)
        parts = []
        for c in fields:
            c = c[None]
            parts.append((_derivative(c, k, 0, M, axes)[:, :, 0], _derivative(c, k, 1, M, axes),
                          _derivative(c, k, 2, M, axes)))
        (u1, D1, H1), (u2, D2, H2) = parts
        val = lambda u, D, H: nemytskii(f, u, np.moveaxis(D, 2, 0), np.moveaxis(H, 2, 0))
        lhs = float(sqfn_space_time(val(u1, D1, H1) - val(u2, D2, H2), times, q, d)[0])
        rhs = L1 * float(sqfn_space_time(u1 - u2, times, q, d)[0]) + \
            L2 * float(sqfn_space_time(D1 - D2, times, q, d)[0]) + \
            L3 * float(sqfn_space_time(H1 - H2, times, q, d)[0])
        margins.append((rhs - lhs) / rhs if rhs > 0 else (0.0 if lhs == 0 else -math.inf))
    margins = np.array(margins)
    if np.any(margins < -1e-10):
        raise SpecViolationError(f"declared Lipschitz constants violated (worst margin {margins.min():.3g})")
    return margins


def measure_sqfn_norm(run, r=1, q=2.0):
    """Per-sample (int (int_0^T |D^r u|^2 dt)^(q/2) dx)^(1/q) with median and 10/90% quantiles."""
    axes = tuple(range(-run.d, 0))
    k = wavenumbers(run.M, run.d)
    vals = _derivative(run.coeffs, k, r, run.M, axes)
    per = sqfn_space_time(vals, run.times, q, run.d)
    return {"values": per, "median": float(np.median(per)),
            "q10": float(np.quantile(per, 0.1)), "q90": float(np.quantile(per, 0.9))}


def borderline_field(K, M, decay=1.5):
    """1D field with u_k = k^(-decay) for 1 <= k <= K, just outside D(A^(1/2)) for decay 3/2."""
    return SpectralField.from_modes({k: 0.5 * k ** -decay for k in range(1, K + 1)}, K, M)


def _fit(x, y):
    res = scipy.stats.linregress(x, y)
    return res.slope, res.rvalue ** 2


def time_exponent(run, theta, t_lo=None, t_hi=0.1):
    """Slope of log ||A^(1-theta)(u(t) - u(0))||_2 against log t, with R^2."""
    A = np.abs(wavenumbers(run.M, run.d) ** 2).sum(axis=0)
    t_lo = 256.0 / run.K ** 2 if t_lo is None else t_lo
    sel = (run.times >= t_lo) & (run.times <= t_hi)
    if sel.sum() < 4:
        raise InvalidConfigError("too few stored times in the fitting window")
    diff = (run.coeffs[0, sel] - run.coeffs[0, 0]) * A ** (1 - theta)
    norms = np.sqrt(np.sum(np.abs(diff) ** 2, axis=tuple(range(1, diff.ndim))))
    return _fit(np.log(run.times[sel]), np.log(norms))


def space_exponent(run, theta, k_lo=4):
    """(a - 1) / 2 where k^(4(1 - theta)) int |u_k|^2 dt decays like k^(-a)."""
    if run.d != 1:
        raise InvalidInputError("space exponent fits are implemented for d = 1")
    w = _time_weights(run.times)
    ks = np.arange(k_lo, run.K // 2 + 1)
    energy = w @ np.abs(run.coeffs[0][:, ks]) ** 2
    y = np.log(ks ** (4 * (1 - theta)) * energy)
    slope, r2 = _fit(np.log(ks), y)
    return (-slope - 1) / 2, r2


def exponent_table(runs, thetas=(0.6, 0.7, 0.8, 0.9, 1.0)):
    """Measured time and space exponents of A^(1-theta) u for deterministic runs, theta in (1/2, 1].

    Needs at least three runs (refinement levels in K); fits use the finest
    and the spread across levels is returned per row. Rows whose fits have
    R^2 < 0.95 are flagged inconclusive.
    """
    runs = sorted(runs, key=lambda r: r.K)
    if len(runs) < 3:
        raise InvalidConfigError("exponent tables need at least three refinement levels")
    rows = []
    for th in thetas:
        if not (0.5 < th <= 1.0):
            raise InvalidInputError(f"theta must lie in (1/2, 1], got {th}")
        fits = [time_exponent(r, th) for r in runs]
        te, r2t = fits[-1]
        se, r2s = space_exponent(runs[-1], th)
        r2 = min(r2t, r2s)
        rows.append({"theta": th, "time_exp_measured": te, "time_exp_paper": th - 0.5,
                     "space_exp_measured": se, "space_exp_paper": 2 * th, "r2": r2,
                     "spread": float(np.ptp([f[0] for f in fits])), "inconclusive": r2 < 0.95})
    return rows


TABLE_COLUMNS = ("theta", "time_exp_measured", "time_exp_paper", "space_exp_measured",
                 "space_exp_paper", "r2")


def trace_row(runs, q=2.0):
    """sup_t ||u(t)||_{L^q} per run (sample median), and the largest relative change between runs."""
    sups = []
    for run in runs:
        axes = tuple(range(-run.d, 0))
        vals = np.fft.ifftn(run.coeffs * run.M ** run.d, axes=axes).real
        cell = (2 * math.pi / run.M) ** run.d
        flat = vals.reshape(vals.shape[:2] + (-1,))
        norms = lq_norm(flat, q) * cell ** (1.0 / q)
        sups.append(float(np.median(norms.max(axis=1))))
    sups = np.array(sups)
    change = float(np.max(np.abs(np.diff(sups)) / sups[1:])) if sups.size > 1 else 0.0
    return {"sup_norms": sups, "max_relative_change": change,
            "finite": bool(np.all(np.isfinite(sups)))}
