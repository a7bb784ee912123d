"""Mirror-free proximal steps in the unconstrained setting.

A proximal step with anchor ``z_a`` and query ``z_b`` returns the zero of

    R(z') = F(z_b) + L (H(z') - H(z_a)) + m (H(z') - H(z_b)),

with ``m = 0`` for the plain step.  The generic solver runs damped Newton on
``R``.  For the third-order model operators the same zero is found by a
shifted linear solve plus a scalar root-find.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .operators import (
    FieldError,
    VectorField,
    as_point,
    d4_hessian,
    jacobian,
    second_directional,
)

log = logging.getLogger(__name__)


class ProxError(RuntimeError):
    pass


@dataclass
class ProxSpec:
    field_f: VectorField
    field_h: VectorField
    L: float
    z_a: np.ndarray
    z_b: np.ndarray
    m: float = 0.0
    tolerance: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if not self.L > 0:
            raise ProxError("L must be positive")
        if self.m < 0:
            raise ProxError("m must be nonnegative")
        if not self.tolerance > 0:
            raise ProxError("tolerance must be positive")
        self.z_a = as_point(self.z_a, self.field_f.dim)
        self.z_b = as_point(self.z_b, self.field_f.dim)


@dataclass
class ProxResult:
    """``converged`` compares ``residual_norm`` with the tolerance floored at
    the roundoff level ``ROUNDOFF * scale`` of the residual's terms."""

    z_prime: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    scale: float = 1.0

    @property
    def relative_residual(self):
        return self.residual_norm / self.scale


def prox_residual(field_f, field_h, L, m, z_a, z_b, z_prime):
    hp = field_h(z_prime)
    return field_f(z_b) + L * (hp - field_h(z_a)) + m * (hp - field_h(z_b))


ROUNDOFF = 64 * np.finfo(float).eps


def effective_tolerance(tol, scale):
    return max(tol, ROUNDOFF * scale)


def residual_scale(field_f, field_h, L, m, z_a, z_b):
    """Magnitude of the terms entering the prox residual."""
    return float(np.linalg.norm(field_f(z_b)) + L * np.linalg.norm(field_h(z_a))
                 + (L + m) * np.linalg.norm(field_h(z_b)))


def newton_zero(fn, jac, z0, tol, max_iter=50, max_halvings=30):
    """Damped Newton for ``fn(z) = 0`` with step halving on residual increase.

    When the Newton system is singular or halving fails, a short step along
    ``-J^T r`` (the residual-norm descent direction) is tried instead.
    Returns ``(z, residual_norm, iterations, converged)``.
    """
    z = np.array(z0, dtype=float)
    r = fn(z)
    rn = float(np.linalg.norm(r))
    it = 0
    while rn > tol and it < max_iter:
        it += 1
        J = jac(z)
        try:
            step = -np.linalg.solve(J, r)
            ok = np.all(np.isfinite(step))
        except np.linalg.LinAlgError:
            ok = False
        accepted = False
        if ok:
            t = 1.0
            for _ in range(max_halvings + 1):
                cand = z + t * step
                try:
                    rc = fn(cand)
                except FieldError:
                    rc = None
                if rc is not None:
                    rcn = float(np.linalg.norm(rc))
                    if rcn < rn:
                        z, r, rn, accepted = cand, rc, rcn, True
                        break
                t *= 0.5
        if not accepted:
            g = J.T @ r
            gn = float(g @ g)
            if gn == 0.0:
                break
            t = rn * rn / gn
            for _ in range(max_halvings + 1):
                cand = z - t * g
                try:
                    rc = fn(cand)
                except FieldError:
                    rc = None
                if rc is not None and float(np.linalg.norm(rc)) < rn:
                    z, r, rn, accepted = cand, rc, float(np.linalg.norm(rc)), True
                    break
                t *= 0.5
            if not accepted:
                break
    return z, rn, it, rn <= tol


def prox_generic(spec, z0=None):
    """Solve ``R(z') = 0`` by damped Newton with Jacobian ``(L + m) dH(z')``."""
    f, h, L, m = spec.field_f, spec.field_h, spec.L, spec.m
    const = f(spec.z_b) - L * h(spec.z_a) - m * h(spec.z_b)
    s = L + m

    def fn(z):
        return const + s * h(z)

    def jac(z):
        return s * jacobian(h, z)

    scale = residual_scale(f, h, L, m, spec.z_a, spec.z_b)
    start = spec.z_b if z0 is None else as_point(z0, f.dim)
    tol = effective_tolerance(spec.tolerance, scale)
    z, rn, it, _ = newton_zero(fn, jac, start, tol, spec.max_iter)
    # report the residual in its defining form
    rn = float(np.linalg.norm(prox_residual(f, h, L, m, spec.z_a, spec.z_b, z)))
    return ProxResult(z, rn, it, bool(rn <= tol), scale)


# ---------------------------------------------------------------------------
# scalar root-find for the shifted linear system


@dataclass
class LambdaSolve:
    lambda_star: float
    z_prime: np.ndarray
    newton_iters: int
    bracket: tuple
    fixed_point_residual: float = 0.0
    sign_pattern: tuple = field(default_factory=tuple)


class ShiftedResolvent:
    """``lam -> -(G + lam I)^{-1} u`` with the last factorization cached."""

    def __init__(self, G, u):
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.u = np.atleast_1d(np.asarray(u, dtype=float))
        self._lam = None
        self._lu = None

    def _factor(self, lam):
        if self._lam != lam:
            M = self.G + lam * np.eye(self.G.shape[0])
            self._lu = scipy.linalg.lu_factor(M, check_finite=True)
            if np.any(np.diag(self._lu[0]) == 0.0):
                raise np.linalg.LinAlgError("singular shifted matrix")
            self._lam = lam
        return self._lu

    def __call__(self, lam):
        return -scipy.linalg.lu_solve(self._factor(lam), self.u)

    def apply(self, lam, v):
        return scipy.linalg.lu_solve(self._factor(lam), v)


def lambda_rootfind(resolvent, c, tol=1e-12, max_iter=40, max_doublings=200):
    """Find ``lam >= 0`` with ``lam = c * ||resolvent(lam)||^2``.

    ``g(lam) = lam - c ||x(lam)||^2`` is increasing when the symmetric part of
    the shifted matrix is positive semidefinite.  The root is bracketed by
    doubling from [0, 1], then located by Newton steps on the equivalent
    ``r(lam) = lam / ||x(lam)||^2 - c`` (convex in the symmetric case, so the
    iterates decrease monotonically from the right end), with bisection when a
    step leaves the bracket.  ``resolvent.apply(lam, v)`` supplies the
    derivative; without it the secant slope of the bracket is used.
    """
    if not c > 0:
        raise ProxError("c must be positive")

    def evaluate(lam):
        try:
            x = resolvent(lam)
        except (np.linalg.LinAlgError, ValueError):
            return -np.inf, None
        return lam - c * float(x @ x), x

    g0, x0 = evaluate(0.0)
    if x0 is not None and float(x0 @ x0) == 0.0:
        return LambdaSolve(0.0, x0, 0, (0.0, 0.0), 0.0, ())
    if x0 is not None and abs(g0) <= tol:  # lam = 0, so absolute and relative agree
        return LambdaSolve(0.0, x0, 0, (0.0, 0.0), abs(g0), ())
    lo, hi = 0.0, 1.0
    ghi, x = evaluate(hi)
    doublings = 0
    while ghi <= 0:
        lo, hi = hi, 2.0 * hi
        ghi, x = evaluate(hi)
        doublings += 1
        if doublings > max_doublings:
            raise ProxError("could not bracket the shift parameter")

    has_apply = hasattr(resolvent, "apply")
    lam, gl = hi, ghi
    signs = []
    for it in range(1, max_iter + 1):
        signs.append(int(np.sign(gl)))
        if x is not None and abs(gl) <= tol * max(1.0, lam):
            break
        if gl > 0:
            hi = lam
        else:
            lo = lam
        cand = np.nan
        if x is not None:
            xx = float(x @ x)
            if has_apply:
                xw = float(x @ resolvent.apply(lam, x))
                slope = (1.0 + 2.0 * lam * xw / xx) / xx
            else:
                slope = 1.0 / (c * xx)
            if slope > 0 and np.isfinite(slope):
                cand = lam - (lam / xx - c) / slope
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        lam = cand
        gl, x = evaluate(lam)
    else:
        raise ProxError("shift root-find did not converge")
    # residual relative to the size of the shift, matching the stopping test
    return LambdaSolve(float(lam), x, it, (float(lo), float(hi)),
                       float(abs(gl)) / max(1.0, float(lam)), tuple(signs))


# ---------------------------------------------------------------------------
# third-order model


@dataclass
class ThirdOrderModel:
    """Regularized second-order Taylor model of a monotone operator ``phi``.

    In the offset variable ``h`` (so the point is ``z_a + h``):

        F(h) = phi(z_a) + J h + hess_coef * D^2 phi(z_a)[h, h] + reg_coef * ||h||^2 h
        H(h) = c1 G h + c2 ||h||^2 h,   c1 = (1 - 1/tau) / 2,  c2 = (M - tau L3) / 2

    where ``J`` is the Jacobian of ``phi`` at ``z_a`` and ``G`` is ``J`` for the
    standard mirror operator or its symmetric part for the conservative one
    (which also carries the constant ``phi(z_a)``).  ``reg_coef`` defaults to
    ``2 M``.
    """

    phi: VectorField
    z_a: np.ndarray
    M: float
    tau: float
    L3: float
    hess_coef: float = 0.5
    reg_coef: Optional[float] = None
    phi_at_za: np.ndarray = field(init=False, repr=False)
    jac_phi_at_za: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.tau > 1:
            raise ProxError("tau must exceed 1")
        if self.L3 < 0:
            raise ProxError("L3 must be nonnegative")
        if not self.M > self.tau * self.L3:
            raise ProxError("need M > tau * L3")
        self.z_a = as_point(self.z_a, self.phi.dim)
        if self.reg_coef is None:
            self.reg_coef = 2.0 * self.M
        self.phi_at_za = self.phi(self.z_a)
        self.jac_phi_at_za = jacobian(self.phi, self.z_a)

    @property
    def dim(self):
        return self.phi.dim

    @property
    def c1(self):
        return 0.5 * (1.0 - 1.0 / self.tau)

    @property
    def c2(self):
        return 0.5 * (self.M - self.tau * self.L3)

    @property
    def claimed_L(self):
        return (self.tau + 1.0) / (self.tau - 1.0)

    def second_dir_at_za(self, h):
        return second_directional(self.phi, self.z_a, h)

    def mirror_matrix(self, conservative=False):
        J = self.jac_phi_at_za
        return 0.5 * (J + J.T) if conservative else J

    def model_field(self):
        J, p0, hc, rc = self.jac_phi_at_za, self.phi_at_za, self.hess_coef, self.reg_coef
        z_a, phi = self.z_a, self.phi

        def fn(h):
            return p0 + J @ h + hc * second_directional(phi, z_a, h) + rc * (h @ h) * h

        def jac(h):
            # d/dh of D^2 phi(z_a)[h, h] is 2 D^2 phi(z_a)[h, .], obtained by polarization
            d = h.shape[0]
            T = np.empty((d, d))
            for j in range(d):
                e = np.zeros(d)
                e[j] = 1.0
                T[:, j] = 0.5 * (second_directional(phi, z_a, h + e)
                                 - second_directional(phi, z_a, h - e))
            return J + hc * T + rc * d4_hessian(h)

        def second(h, u):
            d2 = 2.0 * second_directional(phi, z_a, u)
            return hc * d2 + rc * (2.0 * (u @ u) * h + 4.0 * (h @ u) * u)

        return VectorField(self.dim, fn, jac=jac, second=second, name="third-order-model")

    def mirror_field(self, conservative=False):
        G = self.mirror_matrix(conservative)
        c1, c2 = self.c1, self.c2
        const = self.phi_at_za.copy() if conservative else np.zeros(self.dim)

        def fn(h):
            return const + c1 * (G @ h) + c2 * (h @ h) * h

        def jac(h):
            return c1 * G + c2 * d4_hessian(h)

        def second(h, u):
            return c2 * (2.0 * (u @ u) * h + 4.0 * (h @ u) * u)

        def batch(Hs):
            sq = np.einsum("ij,ij->i", Hs, Hs)
            return const + c1 * Hs @ G.T + c2 * sq[:, None] * Hs

        name = "conservative-mirror" if conservative else "third-order-mirror"
        return VectorField(self.dim, fn, jac=jac, second=second, batch=batch, name=name)

    def mirror_potential(self, h):
        """Potential of the conservative mirror operator, zero at ``h = 0``."""
        D = self.mirror_matrix(True)
        return (float(self.phi_at_za @ h) + 0.5 * self.c1 * float(h @ D @ h)
                + 0.25 * self.c2 * float(h @ h) ** 2)


def _model_prox(model, scale, rhs, tol, conservative, verify, res_scale):
    """Solve ``scale * (c1 G h + c2 ||h||^2 h) = -rhs`` by the shift root-find."""
    G = model.mirror_matrix(conservative)
    u = rhs / (scale * model.c1)
    lam_solve = lambda_rootfind(ShiftedResolvent(G, u), model.c2 / model.c1, tol=min(tol, 1e-12))
    z = lam_solve.z_prime
    r = verify(z)
    res = float(np.linalg.norm(r))
    target = effective_tolerance(tol, res_scale)
    # a large shift amplifies the root's roundoff in z; refine on the polynomial system
    for _ in range(3):
        if res <= target:
            break
        J = scale * (model.c1 * G + model.c2 * d4_hessian(z))
        cand = z - np.linalg.solve(J, r)
        rc = verify(cand)
        if not np.linalg.norm(rc) < res:
            break
        z, r, res = cand, rc, float(np.linalg.norm(rc))
    ok = res <= target
    return ProxResult(z, res, lam_solve.newton_iters, ok, res_scale), lam_solve


def third_order_prox(model, L, z_k, tol=1e-9, z_b=None, conservative=False):
    """Prox step with anchor ``z_k`` and query ``z_b`` (default ``z_k``) for the model pair."""
    z_k = as_point(z_k, model.dim)
    z_b = z_k if z_b is None else as_point(z_b, model.dim)
    F = model.model_field()
    H = model.mirror_field(conservative)
    const = H(np.zeros(model.dim))
    # rhs collects everything except L * (c1 G h' + c2 ||h'||^2 h')
    rhs = F(z_b) - L * (H(z_k) - const)

    def verify(z):
        return prox_residual(F, H, L, 0.0, z_k, z_b, z)

    res_scale = residual_scale(F, H, L, 0.0, z_k, z_b)
    return _model_prox(model, L, rhs, tol, conservative, verify, res_scale)


def third_order_prox_sm(model, L, m, z_k, z_half, tol=1e-9, conservative=False):
    """Strongly monotone prox step with anchor ``z_k`` and query ``z_half``."""
    if m < 0:
        raise ProxError("m must be nonnegative")
    z_k = as_point(z_k, model.dim)
    z_half = as_point(z_half, model.dim)
    F = model.model_field()
    H = model.mirror_field(conservative)
    const = H(np.zeros(model.dim))
    rhs = F(z_half) - L * (H(z_k) - const) - m * (H(z_half) - const)

    def verify(z):
        return prox_residual(F, H, L, m, z_k, z_half, z)

    res_scale = residual_scale(F, H, L, m, z_k, z_half)
    return _model_prox(model, L + m, rhs, tol, conservative, verify, res_scale)
