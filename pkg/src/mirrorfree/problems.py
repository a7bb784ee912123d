"""Problem library: certified (F, H, L, m) instances.

Instances
---------
smooth / smooth-separable
    Quartic saddle family ``f(x) - f(y) + x^T B y`` with the mirror operator
    ``(||x||^2 x + x, ||y||^2 y + y)``.
eg2-subproblem
    Third-order model of ``||x||^4 - ||y||^4 + x^T A y`` at a random center.
bilinear
    ``x^T B y`` with the identity mirror.
cgo
    Competitive-gradient operator pair.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .geometry import box_sampler, calibrate_constants, rel_smooth_certificate, \
    rel_strong_mono_certificate
from .operators import (
    MinMaxSplit,
    VectorField,
    bilinear_field,
    combine,
    cubic_block_field,
    identity_field,
    linear_field,
)
from .prox import ThirdOrderModel

log = logging.getLogger(__name__)

KINDS = ("smooth", "smooth-separable", "eg2-subproblem", "bilinear", "cgo", "identity")

# third-order constant of the quartic game: sup ||D^3 phi[h, h]|| over unit h
EG2_L3 = 24.0


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothExampleParams:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray
    b: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        n = np.atleast_2d(self.E).shape[0]
        for name in ("A", "B", "C", "E"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape != (n, n):
                raise ProblemError(f"{name} must be {n}x{n}")
            object.__setattr__(self, name, M)
        for name in ("b", "d"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.shape != (n,):
                raise ProblemError(f"{name} must have length {n}")
            object.__setattr__(self, name, v)
        if not all(np.all(np.isfinite(getattr(self, k))) for k in "ABCEbd"):
            raise ProblemError("parameters must be finite")

    @property
    def n(self):
        return self.E.shape[0]


@dataclass
class ProblemInstance:
    """An operator pair with relative constants.

    ``monitor`` optionally maps iterates to the operator whose norm is
    reported in traces in addition to ``field_f`` (for a sub-problem it is the
    original operator evaluated at ``offset + z``).
    """

    field_f: VectorField
    field_h: VectorField
    L: float
    m: float
    h_is_conservative: bool
    label: str
    z_star: Optional[np.ndarray] = None
    model: Optional[ThirdOrderModel] = None
    conservative_mirror: bool = False
    monitor: Optional[VectorField] = None
    offset: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def dim(self):
        return self.field_f.dim

    def monitor_norm(self, z):
        if self.monitor is None:
            return float(np.linalg.norm(self.field_f(z)))
        base = np.zeros(self.dim) if self.offset is None else self.offset
        return float(np.linalg.norm(self.monitor(base + z)))


# ---------------------------------------------------------------------------
# quartic saddle family


def quartic_f_parts(params):
    """Value, gradient and Hessian closures of the quartic ``f``."""
    E, A, b, C, d = params.E, params.A, params.b, params.C, params.d

    def value(x):
        Ex, r, c = E @ x, A @ x - b, C @ x - d
        return 0.25 * (Ex @ Ex) ** 2 + 0.25 * np.sum(r ** 4) + 0.5 * (c @ c)

    def grad(x):
        Ex, r = E @ x, A @ x - b
        return (Ex @ Ex) * (E.T @ Ex) + A.T @ r ** 3 + C.T @ (C @ x - d)

    def hess(x):
        Ex, r = E @ x, A @ x - b
        g = E.T @ Ex
        return ((Ex @ Ex) * (E.T @ E) + 2.0 * np.outer(g, g)
                + 3.0 * A.T @ (r[:, None] ** 2 * A) + C.T @ C)

    return value, grad, hess


def smooth_constants(params):
    """``(L, m)`` as stated for the quartic saddle family.

    Norms are spectral; ``sigma`` is the smallest eigenvalue of ``E^T E``
    (resp. ``C^T C``) itself, not its square root.
    """
    nE, nA, nC = (np.linalg.norm(M, 2) for M in (params.E, params.A, params.C))
    nb = np.linalg.norm(params.b)
    L = 3 * nE ** 4 + 3 * nA ** 4 + 6 * nA ** 3 * nb ** 2 + 3 * nA ** 2 * nb ** 2 + nC ** 2
    sE = np.linalg.eigvalsh(params.E.T @ params.E)[0]
    sC = np.linalg.eigvalsh(params.C.T @ params.C)[0]
    m = min(sE ** 4 / 3.0, sC ** 2)
    return float(L), float(max(m, 0.0))


def smooth_mirror(n):
    return cubic_block_field(MinMaxSplit(n, n), cubic=1.0, linear=1.0, name="quartic-mirror")


def build_example_smooth(params, label=None):
    n = params.n
    _, grad, hess = quartic_f_parts(params)
    E, A, b, C, d, B = params.E, params.A, params.b, params.C, params.d, params.B

    def fn(z):
        x, y = z[:n], z[n:]
        return np.concatenate([grad(x) + B @ y, grad(y) - B.T @ x])

    def jac(z):
        x, y = z[:n], z[n:]
        return np.block([[hess(x), B], [-B.T, hess(y)]])

    def batch(Z):
        return kernels.quartic_saddle(Z, E, A, b, C, d, B)

    F = VectorField(2 * n, fn, jac=jac, batch=batch, name="quartic-saddle")
    L, m = smooth_constants(params)
    separable = not np.any(params.B)
    if label is None:
        label = "smooth-separable" if separable else "smooth"
    return ProblemInstance(F, smooth_mirror(n), L, m, True, label,
                           params={"n": n, "separable": separable})


# ---------------------------------------------------------------------------
# quartic game and its third-order sub-problem


def build_example_eg2(A, scale=1.0):
    """``(4 s ||x||^2 x + A y, 4 s ||y||^2 y - A^T x)``, the min-max field of
    ``s ||x||^4 - s ||y||^4 + x^T A y``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ProblemError("A must be square")
    k = 4.0 * scale

    def fn(z):
        x, y = z[:n], z[n:]
        return np.concatenate([k * (x @ x) * x + A @ y, k * (y @ y) * y - A.T @ x])

    def jac(z):
        x, y = z[:n], z[n:]
        I = np.eye(n)
        return np.block([
            [k * (2 * np.outer(x, x) + (x @ x) * I), A],
            [-A.T, k * (2 * np.outer(y, y) + (y @ y) * I)],
        ])

    def second(z, h):
        x, y = z[:n], z[n:]
        hx, hy = h[:n], h[n:]
        return k * np.concatenate([
            2 * (hx @ hx) * x + 4 * (x @ hx) * hx,
            2 * (hy @ hy) * y + 4 * (y @ hy) * hy,
        ])

    if scale == 1.0:
        def batch(Z):
            return kernels.quartic_game(Z, A)
    else:
        def batch(Z):
            out = kernels.cubic_blocks(Z, n, k, 0.0)
            out[:, :n] += Z[:, n:] @ A.T
            out[:, n:] -= Z[:, :n] @ A
            return out

    return VectorField(2 * n, fn, jac=jac, second=second, batch=batch, name="quartic-game")


def kappa(z, n):
    return float(min(np.linalg.norm(z[:n]), np.linalg.norm(z[n:])))


def build_third_order_pair(model, which="standard"):
    """Model operator and mirror operator of the third-order sub-problem.

    The constants recorded are the claimed ones, ``L = (tau+1)/(tau-1)`` and
    ``m = 1``; :func:`certify_instance` checks them.
    """
    if which not in ("standard", "conservative"):
        raise ProblemError(f"unknown mirror variant {which!r}")
    cons = which == "conservative"
    return ProblemInstance(
        model.model_field(),
        model.mirror_field(cons),
        model.claimed_L,
        1.0,
        cons,
        f"third-order-{which}",
        model=model,
        conservative_mirror=cons,
        monitor=model.phi,
        offset=model.z_a.copy(),
        params={"M": model.M, "tau": model.tau, "L3": model.L3},
    )


@dataclass(frozen=True)
class ConvexBlockSpec:
    """``f(x, y) = alpha(x) - beta(y) + x^T A y`` with convex ``alpha``, ``beta``.

    ``alpha`` and ``beta`` are ``(grad, hess, third)`` triples where ``third(v, h)``
    is the second directional derivative of the gradient.
    """

    alpha: tuple
    beta: tuple
    A: np.ndarray

    @property
    def split(self):
        A = np.atleast_2d(self.A)
        return MinMaxSplit(A.shape[0], A.shape[1])

    def operator(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        sp = self.split
        (ga, ha, ta), (gb, hb, tb) = self.alpha, self.beta

        def fn(z):
            x, y = sp.split(z)
            return np.concatenate([ga(x) + A @ y, gb(y) - A.T @ x])

        def jac(z):
            x, y = sp.split(z)
            return np.block([[ha(x), A], [-A.T, hb(y)]])

        def second(z, h):
            x, y = sp.split(z)
            hx, hy = sp.split(h)
            return np.concatenate([ta(x, hx), tb(y, hy)])

        return VectorField(sp.dim, fn, jac=jac, second=second, name="convex-blocks")

    def block_hessian(self, z):
        x, y = self.split.split(z)
        ha, hb = self.alpha[1], self.beta[1]
        nx, ny = x.shape[0], y.shape[0]
        out = np.zeros((nx + ny, nx + ny))
        out[:nx, :nx] = ha(x)
        out[nx:, nx:] = hb(y)
        return out


def quartic_block(scale=1.0):
    """``scale * ||v||^4``."""
    k = 4.0 * scale
    return (
        lambda v: k * (v @ v) * v,
        lambda v: k * (2 * np.outer(v, v) + (v @ v) * np.eye(v.shape[0])),
        lambda v, h: k * (2 * (h @ h) * v + 4 * (v @ h) * h),
    )


def smoothed_quartic_block(eps=1.0):
    """``||v||^4 + eps ||v||^2 / 2``."""
    g, H, T = quartic_block()
    return (
        lambda v: g(v) + eps * v,
        lambda v: H(v) + eps * np.eye(v.shape[0]),
        T,
    )


def build_cgo_pair(hessian_xy, F_at_za, alpha, eta, split):
    """Competitive-gradient operators ``Phi_alpha`` and ``Phi_0`` in the step ``h``.

    ``hessian_xy`` is the mixed second derivative ``d^2 f / dx dy`` at ``z_a``
    (shape ``n_x x n_y``) and ``F_at_za`` the min-max operator value there.
    """
    if not eta > 0:
        raise ProblemError("eta must be positive")
    if not 0.0 <= alpha <= 1.0:
        raise ProblemError("alpha must lie in [0, 1]")
    Bxy = np.atleast_2d(np.asarray(hessian_xy, dtype=float))
    if Bxy.shape != (split.dim_x, split.dim_y):
        raise ProblemError("mixed Hessian does not match the split")
    F0 = np.asarray(F_at_za, dtype=float)
    d = split.dim
    base = linear_field(np.eye(d) / eta, F0, name="cgo-phi0")
    if alpha == 0.0:
        return base, base
    cross = bilinear_field(Bxy * (alpha / eta), name="cgo-cross")
    return combine([base, cross], [1.0, 1.0], name="cgo-phi-alpha"), base


# ---------------------------------------------------------------------------
# certification


def certify_instance(inst, n=200, tol=1e-9, seed=0, low=-2.0, high=2.0, recalibrate=True):
    """Check both Jacobian certificates; recalibrate failing constants.

    A failing ``L`` is raised (and a failing ``m`` lowered) to the sampled
    optimum from the generalized eigenvalue sweep, and the change is noted on
    the returned instance.  Returns ``(instance, smooth_report, mono_report)``.
    """
    sampler = box_sampler(inst.dim, low, high, seed)
    pts = sampler(n)
    extra = np.zeros((1, inst.dim))
    fixed = lambda k: np.vstack([extra, pts])[:k]  # noqa: E731
    rs = rel_smooth_certificate(inst.field_f, inst.field_h, inst.L, fixed, n + 1, tol)
    rm = rel_strong_mono_certificate(inst.field_f, inst.field_h, inst.m, fixed, n + 1, tol)
    if (rs.holds and rm.holds) or not recalibrate:
        return inst, rs, rm
    L_new, m_new = calibrate_constants(inst.field_f, inst.field_h, fixed, n + 1)
    notes = list(inst.notes)
    L, m = inst.L, inst.m
    if not rs.holds:
        notes.append(f"L={inst.L:.6g} failed (margin {rs.worst_margin:.3g}); using sampled L={L_new:.6g}")
        L = L_new
    if not rm.holds:
        notes.append(f"m={inst.m:.6g} failed (margin {rm.worst_margin:.3g}); using sampled m={m_new:.6g}")
        m = m_new
    for note in notes[len(inst.notes):]:
        log.warning("%s: %s", inst.label, note)
    inst = replace(inst, L=L, m=m, notes=notes)
    rs = rel_smooth_certificate(inst.field_f, inst.field_h, L, fixed, n + 1, tol)
    rm = rel_strong_mono_certificate(inst.field_f, inst.field_h, m, fixed, n + 1, tol)
    return inst, rs, rm


# ---------------------------------------------------------------------------
# seeded instances


def random_smooth_params(n, rng, separable=False):
    E, A, B, C = (rng.standard_normal((n, n)) for _ in range(4))
    b, d = rng.standard_normal(n), rng.standard_normal(n)
    if separable:
        B = np.zeros((n, n))
    return SmoothExampleParams(A=A, B=B, C=C, E=E, b=b, d=d)


def sample_center(n, rng, min_kappa=0.25, max_tries=1000):
    """Standard-normal ``z_a`` in R^{2n} resampled until ``kappa(z_a) >= min_kappa``."""
    for tries in range(1, max_tries + 1):
        z = rng.standard_normal(2 * n)
        if kappa(z, n) >= min_kappa:
            return z, tries
    raise ProblemError("could not sample a center with the requested kappa")


def random_instance(kind, n, seed, **options):
    """Seeded instance of ``kind``; identical arguments give identical instances.

    Options: ``min_kappa``, ``tau``, ``M`` (or ``M_factor``), ``mirror``
    (``standard``/``conservative``) for ``eg2-subproblem``; ``alpha``, ``eta``
    for ``cgo``.
    """
    if n < 1:
        raise ProblemError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if kind in ("smooth", "smooth-separable"):
        params = random_smooth_params(n, rng, separable=(kind == "smooth-separable"))
        inst = build_example_smooth(params, label=kind)
        inst.params.update(seed=seed, kind=kind)
        return inst
    if kind == "eg2-subproblem":
        A = rng.standard_normal((n, n))
        z_a, _ = sample_center(n, rng, options.get("min_kappa", 0.25))
        tau = float(options.get("tau", 3.0))
        L3 = float(options.get("L3", EG2_L3))
        M = float(options.get("M", options.get("M_factor", 2.0) * tau * L3))
        model = ThirdOrderModel(build_example_eg2(A), z_a, M, tau, L3,
                                hess_coef=float(options.get("hess_coef", 0.5)))
        inst = build_third_order_pair(model, options.get("mirror", "standard"))
        inst.label = kind
        inst.params.update(seed=seed, kind=kind, n=n, kappa=kappa(z_a, n))
        return inst
    if kind == "bilinear":
        B = rng.standard_normal((n, n)) if n > 1 else np.ones((1, 1))
        L = float(np.linalg.norm(B, 2))
        inst = ProblemInstance(bilinear_field(B), identity_field(2 * n), L, 0.0, True, kind,
                               z_star=np.zeros(2 * n), params={"seed": seed, "n": n})
        return inst
    if kind == "identity":
        return ProblemInstance(identity_field(n), identity_field(n), 1.0, 1.0, True, kind,
                               z_star=np.zeros(n), params={"seed": seed, "n": n})
    if kind == "cgo":
        Bxy = rng.standard_normal((n, n))
        Fa = rng.standard_normal(2 * n)
        alpha = float(options.get("alpha", 0.5))
        eta = float(options.get("eta", 1.0))
        phi_a, phi_0 = build_cgo_pair(Bxy, Fa, alpha, eta, MinMaxSplit(n, n))
        return ProblemInstance(phi_a, phi_0, 1.0, 1.0, False, kind,
                               params={"seed": seed, "n": n, "alpha": alpha, "eta": eta})
    raise ProblemError(f"unknown instance kind {kind!r}")


def bilinear_game(L=1.0):
    """``F(x, y) = (y, -x)`` scaled by ``L`` with the identity mirror, on R^2."""
    return ProblemInstance(bilinear_field([[L]]), identity_field(2), float(L), 0.0, True,
                           "bilinear", z_star=np.zeros(2))


def norelip_pair(B, E, scaling="game"):
    """Planar operator pair used by the relative-Lipschitz obstruction.

    ``scaling="game"`` gives ``F = (4 E^4 x^3 + B y, 4 E^4 y^3 - B x)`` (the
    min-max field of ``E^4 (x^4 - y^4) + B x y``); ``scaling="smooth"`` gives
    the scalar quartic saddle ``F = (E^4 x^3 + B y, E^4 y^3 - B x)``.  The
    mirror is ``(x^3, y^3)`` in both cases.
    """
    k = {"game": 4.0, "smooth": 1.0}.get(scaling)
    if k is None:
        raise ProblemError(f"unknown scaling {scaling!r}")
    cubic = cubic_block_field(MinMaxSplit(1, 1), cubic=k * E ** 4)
    F = combine([cubic, bilinear_field([[B]])], [1.0, 1.0], name=f"norelip-{scaling}")
    H = cubic_block_field(MinMaxSplit(1, 1), cubic=1.0, name="quartic-potential-gradient")
    return F, H


def norelip_closed_form(B, E, theta, scaling="game"):
    """Exact obstruction ratio on the triangle (theta,theta), 0, (0,theta)."""
    share = {"game": 1.0, "smooth": 0.25}[scaling]
    return (B * theta ** 2 - share * E ** 4 * theta ** 4) / (1.25 * theta ** 4)
