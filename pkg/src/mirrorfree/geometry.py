"""Line integrals, generalized Bregman divergences and sampled certificates.

All paths are straight segments.  Integrals along a segment use a fixed
Gauss-Legendre rule on [0, 1], which is exact (up to roundoff) for the
polynomial fields of the problem library.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .operators import FieldError, as_point, jacobian, symmetric_min_eig


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryContext:
    quadrature_nodes: int = 16
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.quadrature_nodes < 1:
            raise GeometryError("need at least one quadrature node")
        x, w = np.polynomial.legendre.leggauss(self.quadrature_nodes)
        object.__setattr__(self, "nodes", 0.5 * (x + 1.0))
        object.__setattr__(self, "weights", 0.5 * w)


DEFAULT_CONTEXT = GeometryContext()


@dataclass(frozen=True)
class TrianglePath:
    """The closed path a -> b -> c -> a."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a, b, c = (as_point(p) for p in (self.a, self.b, self.c))
        if not a.shape == b.shape == c.shape:
            raise GeometryError("triangle vertices have different dimensions")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    def segments(self):
        return [(self.a, self.b), (self.b, self.c), (self.c, self.a)]

    def signed_area_2d(self):
        (ax, ay), (bx, by), (cx, cy) = self.a, self.b, self.c
        return 0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))


@dataclass
class CertificateReport:
    holds: bool
    worst_margin: float
    worst_point: np.ndarray
    samples: int
    tolerance: float = 0.0
    label: str = ""

    def as_dict(self):
        return {
            "label": self.label,
            "holds": bool(self.holds),
            "worst_margin": float(self.worst_margin),
            "worst_point": [float(v) for v in self.worst_point],
            "samples": int(self.samples),
            "tolerance": float(self.tolerance),
        }


def segments_integral(ctx, field, starts, ends):
    """Vectorized ``line_integral`` over many segments at once."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    dz = ends - starts
    S, d = dz.shape
    if d != field.dim:
        raise FieldError(f"segments live in R^{d}, field in R^{field.dim}")
    pts = starts[:, None, :] + ctx.nodes[None, :, None] * dz[:, None, :]
    vals = field.many(pts.reshape(-1, d)).reshape(S, ctx.quadrature_nodes, d)
    return kernels.segment_sums(vals, dz, ctx.weights)


def line_integral(ctx, field, z_a, z_b):
    """``int_0^1 <field(z_a + t (z_b - z_a)), z_b - z_a> dt``."""
    z_a = as_point(z_a, field.dim)
    z_b = as_point(z_b, field.dim)
    return float(segments_integral(ctx, field, z_a[None], z_b[None])[0])


def gbd(ctx, field, to, frm):
    """Generalized Bregman divergence ``omega_field(to, frm)``."""
    to = as_point(to, field.dim)
    frm = as_point(frm, field.dim)
    return line_integral(ctx, field, frm, to) - float(field(frm) @ (to - frm))


def loop_integral(ctx, field, path):
    starts = np.stack([path.a, path.b, path.c])
    ends = np.stack([path.b, path.c, path.a])
    return float(segments_integral(ctx, field, starts, ends).sum())


def loop_integrals(ctx, field, A, B, C):
    """Loop integrals over the triangles with vertex rows ``A[i], B[i], C[i]``."""
    A, B, C = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, B, C))
    n = A.shape[0]
    vals = segments_integral(ctx, field, np.concatenate([A, B, C]), np.concatenate([B, C, A]))
    return vals[:n] + vals[n:2 * n] + vals[2 * n:]


def three_point_residual(ctx, field, z_a, z_b, z_c):
    """Absolute defect of the generalized three-point identity."""
    lhs = gbd(ctx, field, z_a, z_c) + gbd(ctx, field, z_c, z_b)
    rhs = (
        loop_integral(ctx, field, TrianglePath(z_a, z_b, z_c))
        + gbd(ctx, field, z_a, z_b)
        + float((field(z_b) - field(z_c)) @ (np.asarray(z_a, float) - np.asarray(z_c, float)))
    )
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# samplers


def box_sampler(dim, low=-2.0, high=2.0, seed=0):
    """Return ``sample(n) -> (n, dim)`` drawing uniformly from a box."""
    rng = np.random.default_rng(seed)

    def sample(n):
        return rng.uniform(low, high, size=(int(n), dim))

    return sample


def conservativeness_estimate(ctx, field, sampler, n_loops):
    """Largest |loop integral| over ``n_loops`` sampled triangles.

    This is a lower bound on the conservativeness constant, since only the
    sampled straight-segment triangles are inspected.
    """
    if n_loops < 1:
        raise GeometryError("n_loops must be >= 1")
    P = sampler(3 * n_loops)
    vals = loop_integrals(ctx, field, P[:n_loops], P[n_loops:2 * n_loops], P[2 * n_loops:])
    return float(np.max(np.abs(vals)))


def co_conservativeness_estimate(ctx, field_e, field_f, sampler, n_loops):
    """Same as :func:`conservativeness_estimate` for ``field_e - field_f``."""
    if field_e.dim != field_f.dim:
        raise FieldError("fields have different dimensions")
    if n_loops < 1:
        raise GeometryError("n_loops must be >= 1")
    P = sampler(3 * n_loops)
    A, B, C = P[:n_loops], P[n_loops:2 * n_loops], P[2 * n_loops:]
    vals = loop_integrals(ctx, field_e, A, B, C) - loop_integrals(ctx, field_f, A, B, C)
    return float(np.max(np.abs(vals)))


# ---------------------------------------------------------------------------
# Jacobian certificates


def _certificate(matrix_at, dim, sampler, n, tol, label, extra_points=None):
    pts = sampler(n)
    if extra_points is not None:
        pts = np.vstack([np.atleast_2d(extra_points), pts])
    worst, worst_z = np.inf, None
    for z in pts:
        margin = symmetric_min_eig(matrix_at(z))
        if margin < worst:
            worst, worst_z = margin, z
    return CertificateReport(bool(worst >= -tol), float(worst), np.array(worst_z),
                             len(pts), tol, label)


def rel_smooth_certificate(field_f, field_h, L, sampler, n=200, tol=1e-9, extra_points=None):
    """Worst smallest eigenvalue of ``sym(L dH - dF)`` over sampled points."""
    if L < 0:
        raise GeometryError("L must be nonnegative")
    return _certificate(lambda z: L * jacobian(field_h, z) - jacobian(field_f, z),
                        field_f.dim, sampler, n, tol, f"rel-smooth L={L:.6g}", extra_points)


def rel_strong_mono_certificate(field_f, field_h, m, sampler, n=200, tol=1e-9, extra_points=None):
    """Worst smallest eigenvalue of ``sym(dF - m dH)`` over sampled points."""
    if m < 0:
        raise GeometryError("m must be nonnegative")
    return _certificate(lambda z: jacobian(field_f, z) - m * jacobian(field_h, z),
                        field_f.dim, sampler, n, tol, f"rel-strong-mono m={m:.6g}", extra_points)


def monotone_certificate(field, sampler, n=200, tol=1e-9):
    return _certificate(lambda z: jacobian(field, z), field.dim, sampler, n, tol, "monotone")


def _generalized_ratios(field_f, field_h, points):
    """Per-point extreme values of ``u^T dF u / u^T dH u``."""
    from scipy.linalg import eigh

    lo, hi = [], []
    for z in points:
        Fs = jacobian(field_f, z)
        Hs = jacobian(field_h, z)
        Fs, Hs = 0.5 * (Fs + Fs.T), 0.5 * (Hs + Hs.T)
        try:
            w = eigh(Fs, Hs, eigvals_only=True)
        except np.linalg.LinAlgError:
            # dH singular along some direction: no finite ratio there
            w = np.array([-np.inf, np.inf])
        lo.append(w[0])
        hi.append(w[-1])
    return np.array(lo), np.array(hi)


def calibrate_constants(field_f, field_h, sampler, n=200, extra_points=None, safety=1e-6):
    """Smallest sampled L and largest sampled m for the Jacobian certificates.

    Uses the generalized symmetric eigenproblem at each sample point, then
    pads by a relative ``safety`` so that the certificates pass at the same
    points.  Returns ``(L, m)``; ``m`` is clipped at zero.
    """
    pts = sampler(n)
    if extra_points is not None:
        pts = np.vstack([np.atleast_2d(extra_points), pts])
    lo, hi = _generalized_ratios(field_f, field_h, pts)
    L = float(np.max(hi)) * (1.0 + safety)
    m = max(0.0, float(np.min(lo)) * (1.0 - safety))
    return L, m


# ---------------------------------------------------------------------------
# relative Lipschitzness obstruction


def anti_lipschitz_ratio(ctx, field_f, field_h, path, eps=1e-300):
    """Lower bound on ``L - m`` certified by the triangle ``path``."""
    num = loop_integral(ctx, field_f, path) - gbd(ctx, field_f, path.a, path.c)
    den = gbd(ctx, field_h, path.a, path.b) + gbd(ctx, field_h, path.b, path.c)
    if not abs(den) > eps:
        raise GeometryError("degenerate triangle: mirror divergences vanish")
    return num / den


def d_theta(B, E, theta):
    """Closed form ``(B theta^2 - E^4 theta^4) / (5 theta^4 / 4)``."""
    if theta == 0:
        raise GeometryError("theta must be nonzero")
    return (B * theta ** 2 - E ** 4 * theta ** 4) / (1.25 * theta ** 4)


def norelip_triangle(theta):
    """Vertices (theta, theta), (0, 0), (0, theta)."""
    return TrianglePath(np.array([theta, theta]), np.zeros(2), np.array([0.0, theta]))


def relopsmooth_slack(ctx, field_f, field_h, L, z_a, z_b, z_c):
    """``L(w_H(b,c) + w_H(a,b)) - loop_F(abc) - <F(c) - F(b), a - b>``."""
    z_a, z_b, z_c = (as_point(v, field_f.dim) for v in (z_a, z_b, z_c))
    lhs = L * (gbd(ctx, field_h, z_b, z_c) + gbd(ctx, field_h, z_a, z_b))
    loop = loop_integral(ctx, field_f, TrianglePath(z_a, z_b, z_c))
    return lhs - loop - float((field_f(z_c) - field_f(z_b)) @ (z_a - z_b))


def relative_lipschitz_slack(ctx, field_f, field_h, L, z_a, z_b, z_c):
    """``L(w_H(b,c) + w_H(a,b)) - <F(c) - F(b), a - b>``."""
    z_a, z_b, z_c = (as_point(v, field_f.dim) for v in (z_a, z_b, z_c))
    lhs = L * (gbd(ctx, field_h, z_b, z_c) + gbd(ctx, field_h, z_a, z_b))
    return lhs - float((field_f(z_c) - field_f(z_b)) @ (z_a - z_b))
