"""Picard iteration for semilinear stochastic evolution equations.

The equation is dU = (-A U + F(t, U) + f(t)) dt + (B(t, U) + b(t)) dW on
[0, T] with U(0) = u0. Time stepping is exponential Euler on the grid of the
driving Brownian motion: the linear flow is exact and F, B are frozen at the
left endpoint of each step. Because that scheme is causal, the Picard map is a
Volterra operator on grid functions and its iterates settle within at most one
sweep per grid step; the measured ratios of successive increments are reported
alongside the a-priori contraction factor L_F K* + L_B K<>.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (DivergenceError, InvalidInputError, NonSplittableError,
                     PreconditionError, SmallnessError)
from .gamma_space import gamma_bound_estimate
from .maxreg import Propagator, maxreg_constant, symbol_sup
from .sectorial import SectorialOp, as_operator, frac_power
from .space_model import SpaceModel, lq_norm
from .stochastic import PathEnsemble, stoch_maxreg_constant, stoch_maxreg_lyapunov


@dataclass
class LipschitzSpec:
    """Nonlinearities acting on whole grid functions, with their declared constants.

    ``F(t, U)`` maps knot times (J,) and paths (S, J, n) to (S, J, n);
    ``B(t, U)`` maps them to (S, J, n, m). ``f(t)`` and ``b(t)`` are the
    deterministic inhomogeneities, returning (J, n) and (J, n, m).
    L_F, L_B are the Lipschitz constants with respect to the X_1 scale,
    Lt_F, Lt_B those with respect to X; C_F, C_B the linear growth bounds.
    """

    F: object = None
    B: object = None
    f: object = None
    b: object = None
    L_F: float = 0.0
    Lt_F: float = 0.0
    C_F: float = 0.0
    L_B: float = 0.0
    Lt_B: float = 0.0
    C_B: float = 0.0

    def __post_init__(self):
        for name in ("L_F", "Lt_F", "C_F", "L_B", "Lt_B", "C_B"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be a finite nonnegative number")


def linear_spec(A_shifted, M=None, Bs=None, f=None, b=None):
    """F(U) = M U and B(U) = [B_1 U, ..., B_m U], constants computed for the shifted operator.

    L_F = ||M A^-1|| and L_B = (sum_l ||A^(1/2) B_l A^-1||^2)^(1/2) bound the
    maps X_1 -> X and X_1 -> gamma(H, X_(1/2)) in the Hilbert case.
    """
    A = as_operator(A_shifted)
    if not A.invertible:
        raise PreconditionError("the shifted operator is not invertible")
    Ainv = np.linalg.inv(A.matrix)
    L_F = L_B = 0.0
    Fn = Bn = None
    if M is not None:
        M = np.asarray(M, dtype=float)
        L_F = float(np.linalg.norm(M @ Ainv, 2))
        Fn = lambda t, U: U @ M.T
    if Bs is not None:
        Bs = np.asarray(Bs, dtype=float)
        if Bs.ndim == 2:
            Bs = Bs[None]
        H = np.asarray(frac_power(A, 0.5)).real
        L_B = math.sqrt(sum(np.linalg.norm(H @ Bl @ Ainv, 2) ** 2 for Bl in Bs))
        Bn = lambda t, U: np.einsum("lij,sti->stjl", Bs.transpose(0, 2, 1), U)
    return LipschitzSpec(Fn, Bn, f, b, L_F=L_F, L_B=L_B)


def default_shift(A):
    """w = 2 max(0, -min Re lambda(A)) + 1."""
    lam = as_operator(A).eigvals
    return 2.0 * max(0.0, -float(np.min(lam.real))) + 1.0


@dataclass
class SEEProblem:
    """Operator (or family t -> A(t)), nonlinearities, initial data, horizon and shift."""

    A: object
    spec: LipschitzSpec
    u0: np.ndarray
    T: float
    w: float = None
    space: SpaceModel = None
    family: object = field(default=None, repr=False)

    def __post_init__(self):
        if callable(self.A) and not isinstance(self.A, SectorialOp):
            self.family = self.A
            self.A = as_operator(self.family(0.0))
        self.A = as_operator(self.A)
        if self.w is None:
            self.w = default_shift(self.A)
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape[-1] != self.A.dim:
            raise InvalidInputError("initial value does not match the operator dimension")
        if not np.all(np.isfinite(self.u0)):
            raise InvalidInputError("initial value has NaN or infinite entries")
        if not (self.T > 0):
            raise InvalidInputError("horizon must be positive")
        self.space = self.space or SpaceModel(self.A.dim)
        if not self.shifted.invertible:
            raise PreconditionError("the shifted operator is not invertible")

    @property
    def shifted(self):
        return self.operator_at(None)

    def operator_at(self, t):
        base = self.A if t is None or self.family is None else as_operator(self.family(t))
        return SectorialOp(base.matrix + self.w * np.eye(base.dim), base.label)

    @classmethod
    def linear(cls, A, u0, T, M=None, Bs=None, f=None, b=None, w=None, space=None):
        A = as_operator(A)
        w = default_shift(A) if w is None else w
        spec = linear_spec(A.matrix + w * np.eye(A.dim), M, Bs, f, b)
        return cls(A, spec, u0, T, w, space)


@dataclass
class RegularityConstants:
    """K* and K<> for the shifted operator.

    ``factor`` is L_F K* + L_B K<>. ``factor_full`` also charges the
    X-Lipschitz parts, including the shift w, through ||A_w^-1||.
    """

    K_star: float
    K_diamond: float
    factor: float
    factor_full: float = math.nan


def measure_constants(problem, trials=8, seed=0, samples=256, levels=8):
    """Lower bounds for the deterministic and stochastic regularity constants.

    On a Hilbert space K* is the symbol supremum (exact by Plancherel) and K<>
    the Lyapunov value (exact for deterministic integrands). Otherwise both
    are randomised maxima over seeded forcings, taken together with the
    Hilbert values as a floor.
    """
    Aw = problem.shifted
    K_star = symbol_sup(Aw)
    K_diamond = stoch_maxreg_lyapunov(Aw)
    if not problem.space.is_hilbert:
        K_star = max(K_star, maxreg_constant(Aw, trials, seed, problem.space, samples=samples))
        K_diamond = max(K_diamond, stoch_maxreg_constant(Aw, max(1, trials // 4), samples, 2.0,
                                                         seed, levels, space=problem.space))
    s = problem.spec
    inv = float(np.linalg.norm(np.linalg.inv(Aw.matrix), 2))
    full = (s.L_F + (s.Lt_F + problem.w) * inv) * K_star + (s.L_B + s.Lt_B * inv) * K_diamond
    return RegularityConstants(K_star, K_diamond, s.L_F * K_star + s.L_B * K_diamond, full)


def _trapezoid_weights(t):
    h = np.diff(t)
    w = np.zeros(t.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def x1_norms(paths, t, Aw, space=None):
    """Per-sample square-function norm of t -> A_w U(t) on [t_0, t_J], trapezoidal in time."""
    v = paths @ Aw.matrix.T
    sq = np.einsum("j,sjn->sn", _trapezoid_weights(t), np.abs(v) ** 2)
    q = 2.0 if space is None else space.q
    return lq_norm(np.sqrt(sq), q)


def _drift(problem, t, U):
    s = problem.spec
    out = problem.w * U
    if s.F is not None:
        out = out + s.F(t, U)
    if s.f is not None:
        out = out + np.asarray(s.f(t))[None]
    return out


def _diffusion(problem, t, U, m):
    s = problem.spec
    out = np.zeros(U.shape + (m,))
    if s.B is not None:
        out = out + s.B(t, U)
    if s.b is not None:
        out = out + np.asarray(s.b(t))[None]
    return out


def _sweep(Aw, t, dW, u0, drift, kick):
    """One application of the Picard map: exponential Euler with frozen coefficients."""
    S, J = Propagator(Aw)(t[1] - t[0])
    n = Aw.dim
    V = np.zeros(drift.shape)
    V[:, 0] = u0
    noise = np.einsum("sjnm,sjm->sjn", kick[:, :-1], dW)
    for j in range(t.size - 1):
        V[:, j + 1] = (V[:, j] + noise[:, j]) @ S.T + drift[:, j] @ J.T
    return V.real if np.isrealobj(Aw.matrix) else V


def _initial_guess(Aw, t, u0, samples, init):
    U = np.zeros((samples, t.size, Aw.dim))
    if init == "constant":
        U[:] = u0[..., None, :] if u0.ndim == 2 else u0
        return U
    if init != "semigroup":
        raise InvalidInputError(f"unknown initial guess {init!r}")
    S, _ = Propagator(Aw)(t[1] - t[0])
    U[:, 0] = u0
    for j in range(t.size - 1):
        U[:, j + 1] = U[:, j] @ S.T
    return U


def _iterate(problem, Aw, t, dW, u0, max_iter, tol, init, extra=None):
    samples, m = dW.shape[0], dW.shape[2]
    U = _initial_guess(Aw, t, u0, samples, init)
    ratios, increments = [], []
    prev = None
    rising = 0
    converged = False
    for k in range(int(max_iter)):
        drift = _drift(problem, t, U)
        if extra is not None:
            drift = drift + extra(t, U)
        kick = _diffusion(problem, t, U, m)
        V = _sweep(Aw, t, dW, u0, drift, kick)
        d = x1_norms(V - U, t, Aw, problem.space)
        inc = math.sqrt(float(np.mean(d ** 2)))
        increments.append(inc)
        if prev is not None and prev > 0:
            r = inc / prev
            ratios.append(r)
            rising = rising + 1 if r > 1 else 0
            if rising >= 3:
                raise DivergenceError(f"Picard increments grew for 3 iterations (last ratio {r:.3g})")
        if not np.all(np.isfinite(V)):
            raise DivergenceError("Picard iterate is no longer finite")
        prev = inc
        U = V
        if float(d.max()) <= tol:
            converged = True
            break
    return U, {"ratios": ratios, "increments": increments, "iterations": len(increments),
               "converged": converged}


def picard_solve(problem, W, max_iter=60, tol=1e-10, constants=None, init="semigroup"):
    """Fixed point of the mild-solution map on the grid of W.

    Returns the ensemble and a report with per-iteration contraction ratios,
    increments and the a-priori factor. Refuses with SmallnessError when
    L_F K* + L_B K<> >= 1.
    """
    if problem.family is not None:
        raise InvalidInputError("time-dependent operators go through solve_nonautonomous")
    if constants is None:
        constants = measure_constants(problem)
    if constants.factor >= 1:
        raise SmallnessError(
            f"contraction factor L_F K* + L_B K<> = {constants.factor:.4g} is not below 1 "
            f"(L_F={problem.spec.L_F:.3g}, K*={constants.K_star:.3g}, "
            f"L_B={problem.spec.L_B:.3g}, K<>={constants.K_diamond:.3g})")
    t = W.grid.knots
    U, report = _iterate(problem, problem.shifted, t, W.increments, problem.u0,
                         max_iter, tol, init)
    report["factor"] = constants.factor
    report["constants"] = constants
    return PathEnsemble(W.grid, U, W.lineage() + ("picard",)), report


def mild_strong_check(ens, problem, W):
    """Residuals of the strong form at every knot.

    r(t_k) = U(t_k) - u0 + int_0^t_k A U - int_0^t_k (F + f) - sum (B + b) dW,
    with the drift integrals taken exactly over each step for the frozen
    deterministic part and the stochastic integral as left-point sums; what
    remains is the error of freezing the noise within a step.
    Returns (max relative residual, median relative residual, residual array).
    """
    Aw = problem.shifted
    t = ens.grid.knots
    h = t[1] - t[0]
    S, J = Propagator(Aw)(h)
    U = ens.paths
    drift = _drift(problem, t, U)
    kick = _diffusion(problem, t, U, W.m)
    noise = np.einsum("sjnm,sjm->sjn", kick[:, :-1], W.increments)
    # A int over a step of the frozen deterministic flow from U_j with forcing drift_j
    Aint = (U[:, :-1] - U[:, :-1] @ S.T) + (h * drift[:, :-1] - drift[:, :-1] @ J.T)
    step = U[:, 1:] - U[:, :-1] + Aint - h * drift[:, :-1] - noise
    res = np.concatenate([np.zeros_like(U[:, :1]), np.cumsum(step, axis=1)], axis=1)
    q = problem.space.q
    scale = max(float(np.max(lq_norm(U, q))), 1e-300)
    rel = np.max(lq_norm(res, q), axis=1) / scale
    return float(rel.max()), float(np.median(rel)), res


def _family_gap(family, a, b, space, points=5):
    """gamma-bound of {A(u) - A(v) : u, v in [a, b]} sampled on a few points."""
    ts = np.linspace(a, b, points)
    mats = [np.asarray(as_operator(family(t)).matrix) for t in ts]
    diffs = [mats[i] - mats[j] for i in range(points) for j in range(i + 1, points)]
    if space is None or space.is_hilbert:
        return max(np.linalg.norm(d, 2) for d in diffs)
    return gamma_bound_estimate(diffs, trials=16, seed=rng.tag("split"), space=space).value


def split_points(family, T, epsilon, knots=None, space=None, max_depth=20):
    """Greedy partition 0 = s_0 < s_1 < ... = T with small operator oscillation on each piece.

    From each s_(m-1) the next point is the furthest one (found by bisection)
    for which the gamma-bound of differences stays below epsilon. With
    ``knots`` the points are restricted to the grid; otherwise the search is
    continuous with max_depth halvings.
    """
    if not (epsilon > 0):
        raise InvalidInputError("epsilon must be positive")
    if knots is not None:
        knots = np.asarray(knots, dtype=float)
        pts, i = [0], 0
        J = knots.size - 1
        while i < J:
            if _family_gap(family, knots[i], knots[i + 1], space) >= epsilon:
                raise NonSplittableError(f"one grid step at t={knots[i]:.4g} already exceeds epsilon")
            lo, hi = i + 1, J
            if _family_gap(family, knots[i], knots[J], space) < epsilon:
                lo = J
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if _family_gap(family, knots[i], knots[mid], space) < epsilon:
                    lo = mid
                else:
                    hi = mid
            i = lo
            pts.append(i)
        return knots[pts], pts
    pts = [0.0]
    s = 0.0
    while s < T:
        if _family_gap(family, s, T, space) < epsilon:
            pts.append(T)
            break
        lo, hi = s, T
        for _ in range(max_depth):
            mid = 0.5 * (lo + hi)
            if _family_gap(family, s, mid, space) < epsilon:
                lo = mid
            else:
                hi = mid
        if lo == s:
            raise NonSplittableError(f"no admissible piece after {max_depth} bisections at t={s:.4g}")
        pts.append(lo)
        s = lo
    return np.array(pts), None


def solve_nonautonomous(problem, W, epsilon, max_iter=60, tol=1e-10, constants=None):
    """Frozen-coefficient Picard solves on pieces where A(t) varies by less than epsilon.

    On [s_(m-1), s_m] the operator is frozen at A(s_(m-1)) and the
    difference (A(s_(m-1)) - A(t)) U is added to the drift; the terminal value
    of each piece starts the next one. Returns the ensemble and a report.
    """
    family = problem.family or (lambda t: problem.A)
    t = W.grid.knots
    _, idx = split_points(family, problem.T if problem.T <= t[-1] else t[-1], epsilon, t,
                          problem.space)
    if constants is None:
        constants = measure_constants(problem)
    if constants.factor >= 1:
        raise SmallnessError(f"contraction factor {constants.factor:.4g} is not below 1")
    paths = np.zeros((W.samples, t.size, problem.A.dim))
    u0 = problem.u0
    pieces = []
    for a, b in zip(idx[:-1], idx[1:]):
        frozen = problem.operator_at(t[a])
        Am = frozen.matrix

        def perturbation(tt, U, Am=Am):
            mats = np.stack([problem.operator_at(x).matrix for x in tt])
            return U @ Am.T - np.einsum("jkn,sjn->sjk", mats, U)

        U, rep = _iterate(problem, frozen, t[a:b + 1], W.increments[:, a:b], u0, max_iter, tol,
                          "semigroup", perturbation)
        paths[:, a:b + 1] = U
        u0 = U[:, -1]
        pieces.append((float(t[a]), float(t[b]), rep["iterations"]))
    report = {"pieces": pieces, "splits": len(pieces), "factor": constants.factor}
    return PathEnsemble(W.grid, paths, W.lineage() + ("frozen", epsilon)), report


def lipschitz_check(problem, pairs=16, seed=0, N=64, m=1):
    """Worst observed ratios of the F and B differences to their declared bounds.

    Random pairs of paths on a uniform grid of [0, T]; a value above 1 means
    the declared constants are violated.
    """
    Aw = problem.shifted
    s = problem.spec
    t = np.linspace(0.0, problem.T, N + 1)
    g = rng.stream(seed, rng.tag("lipschitz"))
    n = Aw.dim
    worst_F = worst_B = 0.0
    H = np.asarray(frac_power(Aw, 0.5)).real
    w = _trapezoid_weights(t)

    def gnorm(paths, M=None):
        v = paths if M is None else paths @ M.T
        return lq_norm(np.sqrt(np.einsum("j,sjn->sn", w, np.abs(v) ** 2)), problem.space.q)

    for _ in range(pairs):
        U1 = g.standard_normal((1, N + 1, n)).cumsum(axis=1) / math.sqrt(N)
        U2 = U1 + g.uniform(0.01, 1.0) * g.standard_normal((1, N + 1, n))
        d1 = gnorm(U1 - U2, Aw.matrix)[0]
        d0 = gnorm(U1 - U2)[0]
        if s.F is not None:
            lhs = gnorm(s.F(t, U1) - s.F(t, U2))[0]
            bound = s.L_F * d1 + s.Lt_F * d0
            worst_F = max(worst_F, lhs / bound if bound > 0 else (math.inf if lhs > 0 else 0.0))
        if s.B is not None:
            dB = s.B(t, U1) - s.B(t, U2)
            hs = np.sqrt(np.einsum("j,sjnm->sn", w, np.abs(np.einsum("kn,sjnm->sjkm", H, dB)) ** 2))
            lhs = lq_norm(hs, problem.space.q)[0]
            bound = s.L_B * d1 + s.Lt_B * d0
            worst_B = max(worst_B, lhs / bound if bound > 0 else (math.inf if lhs > 0 else 0.0))
    return worst_F, worst_B
