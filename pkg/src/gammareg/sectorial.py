"""Sectorial matrices and their holomorphic functional calculus.

Convention: the semigroup generated by -A is S(t) = exp(-tA), the resolvent
family used throughout is (z + A)^{-1}, and functions of A are defined by the
Dunford integral over the boundary of a sector containing the spectrum.
Fractional powers and z^theta use the principal branch, arg in (-pi, pi).
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (CertificateError, InvalidInputError, NotSectorialError,
                     PreconditionError, SingularityError)

NORMAL_TOL = 1e-12


class SectorialOp:
    """An n x n matrix whose spectrum avoids the closed negative real axis.

    The Schur form is computed once at construction; for normal matrices it
    is diagonal and all functions of A are evaluated by spectral mapping.
    """

    def __init__(self, matrix, label=""):
        a = np.array(matrix, dtype=np.result_type(np.asarray(matrix), float))
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("matrix has NaN or infinite entries")
        a.setflags(write=False)
        self.matrix = a
        self.label = label
        self.dim = a.shape[0]
        self.opnorm = float(np.linalg.norm(a, 2)) if a.size else 0.0
        comm = a @ a.conj().T - a.conj().T @ a
        self.normal = bool(np.linalg.norm(comm, 2) <= NORMAL_TOL * max(self.opnorm, 1e-300) ** 2)
        T, Z = scipy.linalg.schur(a.astype(complex), output="complex")
        self.schur = (T, Z)
        self.eigvals = np.diag(T).copy()
        mods = np.abs(self.eigvals)
        scale = max(self.opnorm, 1e-300)
        nonzero = mods > 1e-13 * scale
        on_neg_axis = nonzero & (self.eigvals.real < 0) & (
            np.abs(self.eigvals.imag) <= 1e-12 * mods)
        if np.any(on_neg_axis):
            raise NotSectorialError(
                f"eigenvalue {self.eigvals[on_neg_axis][0]} lies on the negative real axis")
        self.invertible = bool(np.all(nonzero)) and self.opnorm > 0
        args = np.abs(np.angle(self.eigvals[nonzero]))
        self.angle = float(args.max()) if args.size else 0.0
        self.min_modulus = float(mods[nonzero].min()) if np.any(nonzero) else 0.0
        self.max_modulus = float(mods.max()) if mods.size else 0.0

    @property
    def is_real(self):
        return not np.iscomplexobj(self.matrix)

    def spectral(self, g):
        """g(A) by spectral mapping; only valid for normal A."""
        T, Z = self.schur
        out = (Z * g(self.eigvals)[None, :]) @ Z.conj().T
        return self._cast(out)

    def _cast(self, m):
        if self.is_real and np.iscomplexobj(m):
            scale = max(np.abs(m).max(initial=0.0), 1e-300)
            if np.abs(m.imag).max(initial=0.0) <= 1e-9 * scale:
                return m.real.copy()
        return m

    def scaled(self, c):
        return SectorialOp(c * self.matrix, self.label)

    def __repr__(self):
        return f"SectorialOp(dim={self.dim}, angle={self.angle:.4g}, normal={self.normal})"


def as_operator(A):
    return A if isinstance(A, SectorialOp) else SectorialOp(A)


def semigroup(A, t):
    """exp(-tA) for t >= 0."""
    A = as_operator(A)
    if not np.isfinite(t) or t < 0:
        raise InvalidInputError(f"semigroup time must be finite and nonnegative, got {t}")
    if t == 0:
        return np.eye(A.dim, dtype=A.matrix.dtype)
    if A.normal:
        return A.spectral(lambda lam: np.exp(-t * lam))
    return scipy.linalg.expm(-t * A.matrix)


def resolvent(A, z):
    """(z + A)^{-1}."""
    A = as_operator(A)
    gap = np.min(np.abs(z + A.eigvals))
    if gap <= 1e-13 * max(1.0, abs(z), A.opnorm):
        raise SingularityError(f"z = {z} lies in the spectrum of -A")
    M = z * np.eye(A.dim) + A.matrix
    return np.linalg.solve(M, np.eye(A.dim, dtype=M.dtype))


def frac_power(A, alpha):
    """A^alpha on the principal branch."""
    A = as_operator(A)
    alpha = float(alpha)
    if alpha == 0:
        return np.eye(A.dim, dtype=A.matrix.dtype)
    if alpha < 0:
        if not A.invertible:
            raise PreconditionError("negative powers need an invertible operator")
        if A.normal:
            return A.spectral(lambda lam: lam ** alpha)
        return frac_power(SectorialOp(np.linalg.inv(A.matrix)), -alpha)
    if A.normal:
        return A.spectral(lambda lam: np.where(lam == 0, 0.0, lam) ** alpha)
    k = math.floor(alpha)
    frac = alpha - k
    out = np.linalg.matrix_power(A.matrix, k)
    if frac > 0:
        out = out @ _balakrishnan(A, frac)
    return A._cast(out)


def _balakrishnan(A, a):
    """A^a for 0 < a < 1 from sin(pi a)/pi int_0^inf t^(a-1) A (t+A)^{-1} dt.

    Substituting t = e^s gives an integrand decaying exponentially in both
    directions and analytic in a strip of half-width pi - angle, so the
    trapezoidal rule converges geometrically.
    """
    lo = A.min_modulus if A.min_modulus > 0 else 1e-16 * max(A.opnorm, 1e-300)
    hi = max(A.max_modulus, lo)
    tail = 40.0
    s0 = math.log(lo) - tail / a
    s1 = math.log(hi) + tail / (1 - a)
    d = math.pi - A.angle
    h = min(0.25, 2 * math.pi * d / 45.0)
    s = np.arange(s0, s1 + h, h)
    t = np.exp(s)
    eye = np.eye(A.dim)
    M = t[:, None, None] * eye[None] + A.matrix[None]
    X = np.linalg.solve(M, np.broadcast_to(A.matrix, M.shape))
    w = t ** a
    return math.sin(math.pi * a) / math.pi * h * np.tensordot(w, X, axes=1)


@dataclass(frozen=True)
class HoloFn:
    """A holomorphic function on a sector with a decay certificate.

    ``func`` must accept complex numpy arrays. The certificate asserts
    |f(z)| <= C |z|^eps / (1 + |z|)^(2 eps) on the sector |arg z| < angle.
    """

    func: object
    eps: float
    C: float
    angle: float = math.pi
    name: str = ""

    def __call__(self, z):
        return self.func(z)

    def bound(self, z):
        r = np.abs(z)
        return self.C * r ** self.eps / (1 + r) ** (2 * self.eps)

    def check(self, z, rtol=1e-8):
        if not (self.eps > 0 and self.C > 0):
            raise CertificateError(f"{self.name or 'f'}: certificate needs eps > 0 and C > 0")
        vals = np.abs(self.func(z))
        b = self.bound(z)
        bad = ~(vals <= b * (1 + rtol) + 1e-300)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise CertificateError(
                f"{self.name or 'f'}: |f(z)| = {vals.flat[i]:.3e} exceeds the decay bound "
                f"{b.flat[i]:.3e} at z = {np.ravel(z)[i]:.3e}")

    def times(self, other):
        return HoloFn(lambda z: self.func(z) * other.func(z), self.eps + other.eps,
                      self.C * other.C, min(self.angle, other.angle),
                      f"({self.name})*({other.name})")


def rational_bump(angle=0.75 * math.pi):
    """z / (1 + z)^2, certified on the sector of the given half-angle."""
    C = 1.0 / math.cos(angle / 2) ** 2
    return HoloFn(lambda z: z / (1 + z) ** 2, 1.0, C, angle, "z/(1+z)^2")


def sqrt_exp(angle=0.45 * math.pi):
    """z^(1/2) e^(-z), certified on a sector of half-angle below pi/2."""
    c = math.cos(angle)
    if c <= 0:
        raise InvalidInputError("sqrt_exp is only decaying on sectors narrower than pi/2")
    C = 1.0 if c >= 1.0 else max(1.0, math.exp(-(1 - c)) / c)
    return HoloFn(lambda z: np.sqrt(z) * np.exp(-z), 0.5, C, angle, "z^(1/2)e^(-z)")


def _contour(A, sigma, r_min, r_max, h):
    """Nodes z_k and weights w_k with f(A) ~ sum_k w_k f(z_k) (z_k - A)^{-1}."""
    u = np.arange(math.log(r_min), math.log(r_max) + h, h)
    r = np.exp(u)
    up = r * np.exp(1j * sigma)
    dn = r * np.exp(-1j * sigma)
    z = np.concatenate([up, dn])
    # boundary oriented with the sector on the left: in along the upper ray,
    # out along the lower ray; dz = z du on each ray
    w = np.concatenate([-up, dn]) * h / (2j * math.pi)
    return z, w


def _resolvents(A, z):
    eye = np.eye(A.dim)
    M = z[:, None, None] * eye[None] - A.matrix[None]
    return np.linalg.solve(M, np.broadcast_to(eye, M.shape).astype(complex))


def _contour_plan(A, f, sigma, quad, r_lo=None, r_hi=None):
    lo = A.min_modulus if A.min_modulus > 0 else 1e-8 * max(A.opnorm, 1e-300)
    hi = max(A.max_modulus, lo)
    eps, C = f.eps, f.C
    r_min = lo * min(1e-8, (1e-13 / C) ** (1 / eps)) if r_lo is None else r_lo
    r_max = hi * max(1e8, (C / (eps * 1e-13)) ** (1 / eps)) if r_hi is None else r_hi
    d = min(sigma - A.angle, f.angle - sigma)
    h_needed = 2 * math.pi * d / 30.0
    span = math.log(r_max / r_min)
    h = min(span / max(quad - 1, 1), h_needed)
    return r_min, r_max, h


def _default_sigma(A, f):
    return 0.5 * (A.angle + min(f.angle, math.pi))


def hinf_calculus(A, f, sigma_contour=None, quad=256):
    """f(A) by quadrature of the Dunford integral on the two boundary rays.

    Nodes are log-spaced in |z|; the radial range is widened until the
    certified decay bound is negligible, and the node count is raised above
    ``quad`` when the analyticity strip demands a finer step.
    """
    A = as_operator(A)
    sigma = _default_sigma(A, f) if sigma_contour is None else float(sigma_contour)
    if not (A.angle < sigma < f.angle):
        raise InvalidInputError(
            f"contour angle {sigma:.4g} must lie strictly between the operator angle "
            f"{A.angle:.4g} and the analyticity angle {f.angle:.4g}")
    r_min, r_max, h = _contour_plan(A, f, sigma, quad)
    z, w = _contour(A, sigma, r_min, r_max, h)
    f.check(z)
    R = _resolvents(A, z)
    out = np.tensordot(w * f(z), R, axes=1)
    return A._cast(out)


def measure_angle(A, sigmas=None, radii=256):
    """Eigenvalue angle and sampled resolvent profile sup ||z (z - A)^{-1}||.

    The profile is a list of (sigma', bound) pairs where the sup runs over
    both rays arg z = +-sigma' with log-spaced moduli.
    """
    A = as_operator(A)
    if sigmas is None:
        sigmas = np.unique(np.concatenate([
            np.linspace(A.angle, math.pi, 10)[1:-1],
            [math.pi / 2] if A.angle < math.pi / 2 else []]))
    lo = A.min_modulus if A.min_modulus > 0 else 1e-8 * max(A.opnorm, 1e-300)
    hi = max(A.max_modulus, lo)
    r = np.logspace(math.log10(lo) - 8, math.log10(hi) + 8, radii)
    eye = np.eye(A.dim)
    profile = []
    for s in sigmas:
        z = np.concatenate([r * np.exp(1j * s), r * np.exp(-1j * s)])
        M = z[:, None, None] * eye[None] - A.matrix[None]
        Rz = np.linalg.solve(M, np.broadcast_to(eye, M.shape).astype(complex))
        norms = np.linalg.norm(z[:, None, None] * Rz, ord=2, axis=(1, 2))
        profile.append((float(s), float(norms.max())))
    return A.angle, profile


def orbit(A, phi, x, t, sigma_contour=None, quad=256):
    """Rows phi(t_j A) x for an array of positive times t."""
    A = as_operator(A)
    x = np.asarray(x)
    t = np.asarray(t, dtype=float)
    if A.normal:
        T, Z = A.schur
        c = Z.conj().T @ x
        vals = phi(t[:, None] * A.eigvals[None, :]) * c[None, :]
        out = vals @ Z.T
    else:
        sigma = _default_sigma(A, phi) if sigma_contour is None else sigma_contour
        lo = A.min_modulus if A.min_modulus > 0 else 1e-8 * max(A.opnorm, 1e-300)
        hi = max(A.max_modulus, lo)
        r_lo = min(lo, 1.0 / t.max()) * 1e-10
        r_hi = max(hi, 1.0 / t.min()) * 1e10
        _, _, h = _contour_plan(A, phi, sigma, quad, r_lo, r_hi)
        z, w = _contour(A, sigma, r_lo, r_hi, h)
        eye = np.eye(A.dim)
        M = z[:, None, None] * eye[None] - A.matrix[None]
        Rx = np.linalg.solve(M, np.broadcast_to(x.astype(complex), (len(z), A.dim))[..., None])[..., 0]
        out = (phi(t[:, None] * z[None, :]) * w[None, :]) @ Rx
    if A.is_real and not np.iscomplexobj(x):
        scale = max(np.abs(out).max(initial=0.0), 1e-300)
        if np.abs(out.imag).max(initial=0.0) <= 1e-9 * scale:
            out = out.real
    return out


def sqfn_norm(A, phi, x, space=None, per_decade=64, samples=4096, seed=0):
    """||t -> phi(tA) x|| in gamma(R_+, dt/t; X) on a truncated log grid.

    The grid is cut where the certified decay of phi makes both tails
    smaller than 1e-12 in squared norm.
    """
    from .gamma_space import StepFunction, TimeGrid, gamma_norm
    from .space_model import SpaceModel
    A = as_operator(A)
    if not A.invertible:
        raise PreconditionError("square-function norms need an invertible operator")
    x = np.asarray(x)
    space = SpaceModel(A.dim) if space is None else space
    eps, C = phi.eps, phi.C
    lo, hi = A.min_modulus, A.max_modulus
    a = (1e-12 * 2 * eps / C ** 2) ** (1 / (2 * eps)) / hi
    b = (C ** 2 / (2 * eps * 1e-12)) ** (1 / (2 * eps)) / lo
    ndec = math.log10(b / a)
    knots = np.logspace(math.log10(a), math.log10(b), int(math.ceil(ndec * per_decade)) + 1)
    mids = np.sqrt(knots[:-1] * knots[1:])
    vals = orbit(A, phi, x, mids)
    f = StepFunction(TimeGrid(knots, "dt_over_t"), vals, space)
    return gamma_norm(f, samples=samples, seed=seed)
