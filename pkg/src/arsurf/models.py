"""Frame models: charts, orthonormal-frame evaluators, and the singular metric.

A model holds, per chart, the two frame fields F1, F2 with derivatives up to
order 2 (analytic for built-ins and expression models, central finite
differences for callables).  The frame determinant, its sign, and the inverse
Gram matrix provide the metric data; the singular set is {det = 0}.

Built-in models:

    grushin             F1=(1,0), F2=(0,x)
    euclidean           F1=(1,0), F2=(0,1)
    round_sphere_chart  conformal chart of the unit round sphere, K = +1
    f2_normal(phi)      F1=(1,0), F2=(0, x*exp(phi))
    f3_normal(psi,xi)   F1=(1,0), F2=(0, (y-x^2*psi(x))*exp(xi)), psi(0) != 0
    tangency_basic      F1=(1,0), F2=(0, y-x^2)
    tangency_cubic      F1=(1,0), F2=(0, y-x^2-x^3)
    sphere2             X=(y,-x,0), Y=(0,z,-y) on S^2, two stereographic charts
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expr import Expr, parse, simplify

TOL_SING = 1e-12
H_FD = 1e-5


class ArsurfError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ArsurfError):
    """Point outside the domain of the requested chart."""


class ModelError(ArsurfError):
    """Invalid model description."""


@dataclass(frozen=True)
class Point2:
    """Chart point.  Coordinates must be finite; chart_id indexes the atlas."""
    x: float
    y: float
    chart_id: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("non-finite point coordinates")

    @property
    def xy(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Covector2:
    px: float
    py: float

    def __post_init__(self):
        if not (np.isfinite(self.px) and np.isfinite(self.py)):
            raise ValueError("non-finite covector")

    @property
    def arr(self):
        return np.array([self.px, self.py])


@dataclass(frozen=True)
class Chart:
    chart_id: int
    radius: Optional[float] = None  # None: all of R^2


@dataclass
class MetricEval:
    det_frame: float
    area_density: float
    area_sign: int
    g_matrix: Optional[np.ndarray]  # None on the singular set
    singular: bool


def as_xy(q):
    """Coerce Point2 / pair / array to a float array of shape (..., 2)."""
    if isinstance(q, Point2):
        return q.xy
    a = np.asarray(q, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("expected coordinates of shape (..., 2)")
    return a


def chart_of(q, default=0):
    return q.chart_id if isinstance(q, Point2) else default


# ---------------------------------------------------------------------------
# field packs: value / jacobian / hessian per chart
# ---------------------------------------------------------------------------

class _Fields:
    """Interface: val(x, y) -> (F1, F2) each (..., 2); jac -> (..., 2, 2);
    hess -> (..., 2, 2, 2) with H[i, j, k] = d2 F_i / dq_j dq_k."""


class HandFields(_Fields):
    def __init__(self, val, jac, hess, val_s=None, jac_s=None):
        self.val, self.jac, self.hess = val, jac, hess
        if val_s is not None:
            self.val_s = val_s
        if jac_s is not None:
            self.jac_s = jac_s


class ExprFields(_Fields):
    """Frame components given as four Expr objects (exact derivatives)."""

    def __init__(self, f1x, f1y, f2x, f2y):
        self.comps = [[Expr(f1x), Expr(f1y)], [Expr(f2x), Expr(f2y)]]
        from .expr import compile_ast_scalar, diff
        v = [[compile_ast_scalar(c.ast) for c in row] for row in self.comps]
        d = [[[compile_ast_scalar(diff(c.ast, "x")),
               compile_ast_scalar(diff(c.ast, "y"))] for c in row]
             for row in self.comps]

        def val_s(x, y, v=v):
            return ((v[0][0](x, y), v[0][1](x, y)),
                    (v[1][0](x, y), v[1][1](x, y)))

        def jac_s(x, y, d=d):
            return (((d[0][0][0](x, y), d[0][0][1](x, y)),
                     (d[0][1][0](x, y), d[0][1][1](x, y))),
                    ((d[1][0][0](x, y), d[1][0][1](x, y)),
                     (d[1][1][0](x, y), d[1][1][1](x, y))))

        self.val_s = val_s
        self.jac_s = jac_s

    def val(self, x, y):
        out = []
        for field in self.comps:
            out.append(np.stack([field[0](x, y), field[1](x, y)], axis=-1))
        return out[0], out[1]

    def jac(self, x, y):
        out = []
        for field in self.comps:
            rows = [np.stack([c.d("x")(x, y), c.d("y")(x, y)], axis=-1)
                    for c in field]
            out.append(np.stack(rows, axis=-2))
        return out[0], out[1]

    def hess(self, x, y):
        out = []
        for field in self.comps:
            comps = []
            for c in field:
                hxx, hxy, hyy = c.dd("x", "x")(x, y), c.dd("x", "y")(x, y), c.dd("y", "y")(x, y)
                comps.append(np.stack([np.stack([hxx, hxy], axis=-1),
                                       np.stack([hxy, hyy], axis=-1)], axis=-2))
            out.append(np.stack(comps, axis=-3))
        return out[0], out[1]


class FDFields(_Fields):
    """Derivatives by central differences for value-only user models."""

    def __init__(self, val, h=H_FD):
        self.val = val
        self.h = h

    def jac(self, x, y):
        h = self.h
        f1px, f2px = self.val(x + h, y)
        f1mx, f2mx = self.val(x - h, y)
        f1py, f2py = self.val(x, y + h)
        f1my, f2my = self.val(x, y - h)
        j1 = np.stack([(f1px - f1mx) / (2 * h), (f1py - f1my) / (2 * h)], axis=-1)
        j2 = np.stack([(f2px - f2mx) / (2 * h), (f2py - f2my) / (2 * h)], axis=-1)
        return j1, j2

    def hess(self, x, y):
        h = max(self.h, 1e-4)
        f10, f20 = self.val(x, y)

        def second(fpp, fmm, f0):
            return (fpp - 2 * f0 + fmm) / (h * h)

        f1px, f2px = self.val(x + h, y)
        f1mx, f2mx = self.val(x - h, y)
        f1py, f2py = self.val(x, y + h)
        f1my, f2my = self.val(x, y - h)
        f1pp, f2pp = self.val(x + h, y + h)
        f1pm, f2pm = self.val(x + h, y - h)
        f1mp, f2mp = self.val(x - h, y + h)
        f1mm, f2mm = self.val(x - h, y - h)
        out = []
        for (f0, fpx, fmx, fpy, fmy, fpp, fpm, fmp, fmm) in (
                (f10, f1px, f1mx, f1py, f1my, f1pp, f1pm, f1mp, f1mm),
                (f20, f2px, f2mx, f2py, f2my, f2pp, f2pm, f2mp, f2mm)):
            hxx = second(fpx, fmx, f0)
            hyy = second(fpy, fmy, f0)
            hxy = (fpp - fpm - fmp + fmm) / (4 * h * h)
            out.append(np.stack([np.stack([hxx, hxy], axis=-1),
                                 np.stack([hxy, hyy], axis=-1)], axis=-2))
        return out[0], out[1]


def _const_field(vec):
    vec = np.asarray(vec, dtype=float)

    def comp(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.broadcast_to(vec, shape + (2,)).copy()

    return comp


def _zeros22(x, y):
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))
    return np.zeros(shape + (2, 2))


def _zeros222(x, y):
    shape = np.broadcast_shapes(np.shape(x), np.shape(y))
    return np.zeros(shape + (2, 2, 2))


# ---------------------------------------------------------------------------
# the model class
# ---------------------------------------------------------------------------

class FrameModel:
    """Immutable atlas + frame evaluators.  Safe for concurrent use."""

    def __init__(self, name, charts, fields, orientation_sign=1,
                 transition=None, transition_jac=None, switch_radius=None,
                 params=None):
        self.name = name
        self.charts = charts
        self._fields = fields
        self.orientation_sign = int(orientation_sign)
        if self.orientation_sign not in (1, -1):
            raise ModelError("orientation_sign must be +1 or -1")
        self._transition = transition
        self._transition_jac = transition_jac
        self.switch_radius = switch_radius
        self.params = dict(params or {})

    @property
    def n_charts(self):
        return len(self.charts)

    def in_domain(self, q, chart=0):
        pts = as_xy(q)
        r = self.charts[chart].radius
        if r is None:
            return np.ones(pts.shape[:-1], dtype=bool) if pts.ndim > 1 else True
        return (pts[..., 0] ** 2 + pts[..., 1] ** 2) <= r * r

    def _check_domain(self, pts, chart):
        r = self.charts[chart].radius
        if r is not None:
            rho2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
            if np.any(rho2 > r * r):
                raise DomainError(f"point outside chart {chart} of {self.name}")

    def frame(self, q, chart=None):
        chart = chart_of(q) if chart is None else chart
        pts = as_xy(q)
        self._check_domain(pts, chart)
        return self._fields[chart].val(pts[..., 0], pts[..., 1])

    def frame_jac(self, q, chart=None):
        chart = chart_of(q) if chart is None else chart
        pts = as_xy(q)
        self._check_domain(pts, chart)
        return self._fields[chart].jac(pts[..., 0], pts[..., 1])

    def frame_hess(self, q, chart=None):
        chart = chart_of(q) if chart is None else chart
        pts = as_xy(q)
        self._check_domain(pts, chart)
        return self._fields[chart].hess(pts[..., 0], pts[..., 1])

    def det_frame(self, q, chart=None):
        f1, f2 = self.frame(q, chart)
        return f1[..., 0] * f2[..., 1] - f1[..., 1] * f2[..., 0]

    def det_grad(self, q, chart=None):
        """Gradient of det(F1, F2) from analytic/FD frame Jacobians."""
        f1, f2 = self.frame(q, chart)
        j1, j2 = self.frame_jac(q, chart)
        # d/dq_k [F1_0 F2_1 - F1_1 F2_0]
        return (j1[..., 0, :] * f2[..., 1, None] + f1[..., 0, None] * j2[..., 1, :]
                - j1[..., 1, :] * f2[..., 0, None] - f1[..., 1, None] * j2[..., 0, :])

    def area_sign(self, q, chart=None):
        return np.sign(self.det_frame(q, chart)) * self.orientation_sign

    def transition(self, pts, src, dst):
        if self._transition is None or src == dst:
            return np.array(pts, dtype=float, copy=True)
        return self._transition(as_xy(pts), src, dst)

    def transition_jac(self, pts, src, dst):
        if self._transition_jac is None or src == dst:
            shape = as_xy(pts).shape[:-1]
            return np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        return self._transition_jac(as_xy(pts), src, dst)

    def transport_covector(self, p, pts, src, dst):
        """Covector components in chart dst at the image of pts."""
        jac = self.transition_jac(pts, src, dst)
        jinv = np.linalg.inv(jac)
        return np.einsum("...ji,...j->...i", jinv, np.asarray(p, dtype=float))

    def __repr__(self):
        return f"FrameModel({self.name!r}, charts={self.n_charts})"


# ---------------------------------------------------------------------------
# spec operations on the core module
# ---------------------------------------------------------------------------

def eval_frame(model, q, chart=None):
    """Return (F1(q), F2(q)) in chart coordinates."""
    return model.frame(q, chart)


def lie_bracket(model, q, which=(1, 2), chart=None):
    """[F_i, F_j](q) = DF_j(q) F_i(q) - DF_i(q) F_j(q), 1-based field ids."""
    i, j = which
    if i == j:
        return np.zeros(as_xy(q).shape)
    fields = model.frame(q, chart)
    jacs = model.frame_jac(q, chart)
    fi, fj = fields[i - 1], fields[j - 1]
    ji, jj = jacs[i - 1], jacs[j - 1]
    out = (np.einsum("...ik,...k->...i", jj, fi)
           - np.einsum("...ik,...k->...i", ji, fj))
    return out


def lie_bracket_jac(model, q, chart=None):
    """Jacobian of [F1, F2] (needs second frame derivatives)."""
    f1, f2 = model.frame(q, chart)
    j1, j2 = model.frame_jac(q, chart)
    h1, h2 = model.frame_hess(q, chart)
    term = (np.einsum("...ijk,...j->...ik", h2, f1)
            + np.einsum("...ij,...jk->...ik", j2, j1)
            - np.einsum("...ijk,...j->...ik", h1, f2)
            - np.einsum("...ij,...jk->...ik", j1, j2))
    return term


def metric_eval(model, q, chart=None, tol_sing=TOL_SING):
    """Determinant, signed area density, and inverse-Gram metric at q."""
    f1, f2 = model.frame(q, chart)
    f1 = np.asarray(f1, dtype=float).reshape(2)
    f2 = np.asarray(f2, dtype=float).reshape(2)
    det = float(f1[0] * f2[1] - f1[1] * f2[0])
    singular = abs(det) < tol_sing
    g = None
    if not singular:
        a = np.column_stack([f1, f2])
        gram = a @ a.T
        g = np.linalg.inv(gram)
    density = np.inf if singular else 1.0 / abs(det)
    sign = int(np.sign(det)) * model.orientation_sign if not singular else 0
    return MetricEval(det_frame=det, area_density=density, area_sign=sign,
                      g_matrix=g, singular=singular)


def g_norm(model, q, v, chart=None):
    """Length of tangent vector(s) v under the singular metric at q."""
    f1, f2 = model.frame(q, chart)
    a = np.stack([np.asarray(f1, float), np.asarray(f2, float)], axis=-1)
    u = np.linalg.solve(a, np.asarray(v, dtype=float)[..., None])[..., 0]
    return np.linalg.norm(u, axis=-1)


def frame_components(model, q, v, chart=None, tol=1e-11):
    """Components u with v = u1 F1 + u2 F2 (least squares on the singular set)."""
    f1, f2 = model.frame(q, chart)
    a = np.stack([np.asarray(f1, float), np.asarray(f2, float)], axis=-1)
    v = np.asarray(v, dtype=float)
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    scale = np.max(np.abs(a), axis=(-2, -1)) + 1e-300
    singular = np.abs(det) < tol * scale * scale
    if np.ndim(det) == 0:
        if singular:
            u, *_ = np.linalg.lstsq(a, v, rcond=None)
            return u
        inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])
        return inv @ v / det
    inv = np.empty_like(a)
    inv[..., 0, 0] = a[..., 1, 1]
    inv[..., 0, 1] = -a[..., 0, 1]
    inv[..., 1, 0] = -a[..., 1, 0]
    inv[..., 1, 1] = a[..., 0, 0]
    safe_det = np.where(singular, 1.0, det)
    out = np.einsum("...ij,...j->...i", inv, v) / safe_det[..., None]
    if np.any(singular):
        idx = np.argwhere(singular)
        for ind in idx:
            key = tuple(ind)
            u, *_ = np.linalg.lstsq(a[key], v[key], rcond=None)
            out[key] = u
    return out


def check_hormander(model, pts, chart=0, tol=1e-10):
    """True if span{F1,F2,[F1,F2],[F1,[F1,F2]],[F2,[F1,F2]]} is 2-dim at pts."""
    pts = as_xy(pts)
    f1, f2 = model.frame(pts, chart)
    br = lie_bracket(model, pts, (1, 2), chart)
    bj = lie_bracket_jac(model, pts, chart)
    b11 = np.einsum("...ik,...k->...i", bj, f1) - np.einsum(
        "...ik,...k->...i", model.frame_jac(pts, chart)[0], br)
    b22 = np.einsum("...ik,...k->...i", bj, f2) - np.einsum(
        "...ik,...k->...i", model.frame_jac(pts, chart)[1], br)
    vecs = np.stack([f1, f2, br, b11, b22], axis=-2)  # (..., 5, 2)
    best = np.zeros(pts.shape[:-1])
    for i in range(5):
        for j in range(i + 1, 5):
            d = np.abs(vecs[..., i, 0] * vecs[..., j, 1]
                       - vecs[..., i, 1] * vecs[..., j, 0])
            best = np.maximum(best, d)
    return best > tol


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def _planar(name, fields, orientation_sign=1, params=None):
    return FrameModel(name, [Chart(0, None)], [fields],
                      orientation_sign=orientation_sign, params=params)


def grushin(orientation_sign=1):
    def val(x, y):
        f1 = _const_field([1.0, 0.0])(x, y)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        f2 = np.zeros(shape + (2,))
        f2[..., 1] = x
        return f1, f2

    def jac(x, y):
        j2 = _zeros22(x, y)
        j2[..., 1, 0] = 1.0
        return _zeros22(x, y), j2

    def val_s(x, y):
        return ((1.0, 0.0), (0.0, x))

    def jac_s(x, y):
        return (((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (1.0, 0.0)))

    return _planar("grushin",
                   HandFields(val, jac, _two(_zeros222), val_s, jac_s),
                   orientation_sign)


def euclidean(orientation_sign=1):
    def val(x, y):
        return _const_field([1.0, 0.0])(x, y), _const_field([0.0, 1.0])(x, y)

    def val_s(x, y):
        return ((1.0, 0.0), (0.0, 1.0))

    def jac_s(x, y):
        return (((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.0, 0.0)))

    return _planar("euclidean",
                   HandFields(val, _two(_zeros22), _two(_zeros222), val_s,
                              jac_s),
                   orientation_sign)


def round_sphere_chart(orientation_sign=1):
    """Unit round sphere in a conformal chart: F1 = lam d/dx, F2 = lam d/dy."""
    def lam(x, y):
        return 0.5 * (1.0 + x * x + y * y)

    def val(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        f1 = np.zeros(shape + (2,))
        f2 = np.zeros(shape + (2,))
        f1[..., 0] = lam(x, y)
        f2[..., 1] = lam(x, y)
        return f1, f2

    def jac(x, y):
        j1, j2 = _zeros22(x, y), _zeros22(x, y)
        xb = np.broadcast_to(x, np.broadcast_shapes(np.shape(x), np.shape(y)))
        yb = np.broadcast_to(y, np.broadcast_shapes(np.shape(x), np.shape(y)))
        j1[..., 0, 0] = xb
        j1[..., 0, 1] = yb
        j2[..., 1, 0] = xb
        j2[..., 1, 1] = yb
        return j1, j2

    def hess(x, y):
        h1, h2 = _zeros222(x, y), _zeros222(x, y)
        h1[..., 0, 0, 0] = 1.0
        h1[..., 0, 1, 1] = 1.0
        h2[..., 1, 0, 0] = 1.0
        h2[..., 1, 1, 1] = 1.0
        return h1, h2

    def val_s(x, y):
        lam = 0.5 * (1.0 + x * x + y * y)
        return ((lam, 0.0), (0.0, lam))

    def jac_s(x, y):
        return (((x, y), (0.0, 0.0)), ((0.0, 0.0), (x, y)))

    return _planar("round_sphere_chart",
                   HandFields(val, jac, hess, val_s, jac_s),
                   orientation_sign)


def tangency_basic(orientation_sign=1):
    return _tangency_poly("tangency_basic", cubic=False,
                          orientation_sign=orientation_sign)


def tangency_cubic(orientation_sign=1):
    return _tangency_poly("tangency_cubic", cubic=True,
                          orientation_sign=orientation_sign)


def _tangency_poly(name, cubic, orientation_sign):
    def val(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        f1 = np.zeros(shape + (2,))
        f1[..., 0] = 1.0
        f2 = np.zeros(shape + (2,))
        f2[..., 1] = y - x * x - (x ** 3 if cubic else 0.0)
        return f1, f2

    def jac(x, y):
        j2 = _zeros22(x, y)
        xb = np.broadcast_to(x, np.broadcast_shapes(np.shape(x), np.shape(y)))
        j2[..., 1, 0] = -2.0 * xb - (3.0 * xb * xb if cubic else 0.0)
        j2[..., 1, 1] = 1.0
        return _zeros22(x, y), j2

    def hess(x, y):
        h2 = _zeros222(x, y)
        xb = np.broadcast_to(x, np.broadcast_shapes(np.shape(x), np.shape(y)))
        h2[..., 1, 0, 0] = -2.0 - (6.0 * xb if cubic else 0.0)
        return _zeros222(x, y), h2

    if cubic:
        def val_s(x, y):
            return ((1.0, 0.0), (0.0, y - x * x - x * x * x))

        def jac_s(x, y):
            return (((0.0, 0.0), (0.0, 0.0)),
                    ((0.0, 0.0), (-2.0 * x - 3.0 * x * x, 1.0)))
    else:
        def val_s(x, y):
            return ((1.0, 0.0), (0.0, y - x * x))

        def jac_s(x, y):
            return (((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (-2.0 * x, 1.0)))

    return _planar(name, HandFields(val, jac, hess, val_s, jac_s),
                   orientation_sign)


def _two(maker):
    def both(x, y):
        return maker(x, y), maker(x, y)
    return both


def _expr_from_ast(ast):
    """Build an Expr directly from an already-parsed AST."""
    from . import expr as _expr
    obj = object.__new__(Expr)
    obj.ast = _expr.simplify(ast)
    obj.src = _expr.to_source(obj.ast)
    obj._fn = _expr.compile_ast(obj.ast)
    dx, dy = _expr.diff(obj.ast, "x"), _expr.diff(obj.ast, "y")
    obj._d = {"x": _expr.compile_ast(dx), "y": _expr.compile_ast(dy)}
    obj._dd = {
        ("x", "x"): _expr.compile_ast(_expr.diff(dx, "x")),
        ("x", "y"): _expr.compile_ast(_expr.diff(dx, "y")),
        ("y", "y"): _expr.compile_ast(_expr.diff(dy, "y")),
    }
    return obj


def f2_normal(phi="0", orientation_sign=1):
    """Grushin normal form F1=(1,0), F2=(0, x*exp(phi)); phi(0, y) = 0."""
    if callable(phi):
        def val(x, y):
            shape = np.broadcast_shapes(np.shape(x), np.shape(y))
            f1 = np.zeros(shape + (2,))
            f1[..., 0] = 1.0
            f2 = np.zeros(shape + (2,))
            f2[..., 1] = x * np.exp(phi(x, y))
            return f1, f2

        fields = FDFields(val)
    else:
        phi_ast = simplify(parse(str(phi)))
        fields = ExprFields("1", "0", "0", _expr_from_ast(
            ("mul", ("var", "x"), ("call", "exp", phi_ast))))
    ys = np.linspace(-2, 2, 9)
    f2 = fields.val(np.zeros_like(ys), ys)[1]
    if np.max(np.abs(f2)) > 1e-9:
        raise ModelError("f2_normal requires phi(0, y) = 0 (F2 must vanish on x=0)")
    return _planar("f2_normal", fields, orientation_sign, params={"phi": str(phi)})


def f3_normal(psi="1", xi="0", orientation_sign=1):
    """Tangency normal form F1=(1,0), F2=(0,(y - x^2 psi(x)) exp(xi)), psi(0)!=0."""
    if callable(psi) or callable(xi):
        psi_f = psi if callable(psi) else Expr(str(psi))
        xi_f = xi if callable(xi) else Expr(str(xi))

        def val(x, y):
            shape = np.broadcast_shapes(np.shape(x), np.shape(y))
            f1 = np.zeros(shape + (2,))
            f1[..., 0] = 1.0
            f2 = np.zeros(shape + (2,))
            yz = np.zeros_like(np.asarray(x, float))
            pv = psi_f(x, yz) if callable(psi) else psi_f(x, yz)
            f2[..., 1] = (y - x * x * pv) * np.exp(xi_f(x, y))
            return f1, f2

        fields = FDFields(val)
        psi0 = float(np.asarray(psi_f(0.0, 0.0)))
    else:
        psi_ast = simplify(parse(str(psi)))
        xi_ast = simplify(parse(str(xi)))
        comp = ("mul",
                ("sub", ("var", "y"),
                 ("mul", ("mul", ("var", "x"), ("var", "x")), psi_ast)),
                ("call", "exp", xi_ast))
        fields = ExprFields("1", "0", "0", _expr_from_ast(comp))
        psi0 = float(Expr(str(psi))(0.0, 0.0))
    if abs(psi0) < 1e-12:
        raise ModelError("f3_normal requires psi(0) != 0")
    return _planar("f3_normal", fields, orientation_sign,
                   params={"psi": str(psi), "xi": str(xi)})


def sphere2(orientation_sign=1, chart_radius=3.0, switch_radius=1.5):
    """Trivial-bundle structure on S^2 from X=(y,-x,0), Y=(0,z,-y).

    Two stereographic charts: chart 0 projects from the north pole
    ((x,y)/(1-z)), chart 1 from the south pole with the second coordinate
    flipped ((x,-y)/(1+z)) so both charts carry the same orientation.  The
    transition is the involution w -> conj(w)/|w|^2.
    """

    def val0(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        xb = np.broadcast_to(x, shape).astype(float)
        yb = np.broadcast_to(y, shape).astype(float)
        f1 = np.stack([yb, -xb], axis=-1)
        f2 = np.stack([-xb * yb, 0.5 * (xb * xb - yb * yb - 1.0)], axis=-1)
        return f1, f2

    def val1(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        xb = np.broadcast_to(x, shape).astype(float)
        yb = np.broadcast_to(y, shape).astype(float)
        f1 = np.stack([-yb, xb], axis=-1)
        f2 = np.stack([-xb * yb, 0.5 * (xb * xb - yb * yb - 1.0)], axis=-1)
        return f1, f2

    def jac_common(x, y, sign):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        xb = np.broadcast_to(x, shape).astype(float)
        yb = np.broadcast_to(y, shape).astype(float)
        j1 = np.zeros(shape + (2, 2))
        j1[..., 0, 1] = sign
        j1[..., 1, 0] = -sign
        j2 = np.zeros(shape + (2, 2))
        j2[..., 0, 0] = -yb
        j2[..., 0, 1] = -xb
        j2[..., 1, 0] = xb
        j2[..., 1, 1] = -yb
        return j1, j2

    def hess_common(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        h1 = np.zeros(shape + (2, 2, 2))
        h2 = np.zeros(shape + (2, 2, 2))
        h2[..., 0, 0, 1] = -1.0
        h2[..., 0, 1, 0] = -1.0
        h2[..., 1, 0, 0] = 1.0
        h2[..., 1, 1, 1] = -1.0
        return h1, h2

    def val0_s(x, y):
        return ((y, -x), (-x * y, 0.5 * (x * x - y * y - 1.0)))

    def val1_s(x, y):
        return ((-y, x), (-x * y, 0.5 * (x * x - y * y - 1.0)))

    def jac0_s(x, y):
        return (((0.0, 1.0), (-1.0, 0.0)), ((-y, -x), (x, -y)))

    def jac1_s(x, y):
        return (((0.0, -1.0), (1.0, 0.0)), ((-y, -x), (x, -y)))

    fields = [
        HandFields(val0, lambda x, y: jac_common(x, y, 1.0), hess_common,
                   val0_s, jac0_s),
        HandFields(val1, lambda x, y: jac_common(x, y, -1.0), hess_common,
                   val1_s, jac1_s),
    ]

    def transition(pts, src, dst):
        rho2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
        out = np.empty_like(pts)
        out[..., 0] = pts[..., 0] / rho2
        out[..., 1] = -pts[..., 1] / rho2
        return out

    def transition_jac(pts, src, dst):
        x, y = pts[..., 0], pts[..., 1]
        rho4 = (x * x + y * y) ** 2
        j = np.empty(pts.shape[:-1] + (2, 2))
        j[..., 0, 0] = (y * y - x * x) / rho4
        j[..., 0, 1] = -2 * x * y / rho4
        j[..., 1, 0] = 2 * x * y / rho4
        j[..., 1, 1] = (y * y - x * x) / rho4
        return j

    model = FrameModel("sphere2",
                       [Chart(0, chart_radius), Chart(1, chart_radius)],
                       fields, orientation_sign=orientation_sign,
                       transition=transition, transition_jac=transition_jac,
                       switch_radius=switch_radius)
    model.embed = _sphere2_embed
    model.project = _sphere2_project
    return model


def _sphere2_embed(pts, chart):
    """Chart coordinates -> points on S^2 in R^3."""
    pts = np.asarray(pts, dtype=float)
    u, v = pts[..., 0], pts[..., 1]
    rho2 = u * u + v * v
    if chart == 0:
        return np.stack([2 * u, 2 * v, rho2 - 1], axis=-1) / (1 + rho2)[..., None]
    return np.stack([2 * u, -2 * v, 1 - rho2], axis=-1) / (1 + rho2)[..., None]


def _sphere2_project(xyz, chart):
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    if chart == 0:
        return np.stack([x, y], axis=-1) / (1 - z)[..., None]
    return np.stack([x, -y], axis=-1) / (1 + z)[..., None]


_BUILTINS = {
    "grushin": grushin,
    "euclidean": euclidean,
    "round_sphere_chart": round_sphere_chart,
    "f2_normal": f2_normal,
    "f3_normal": f3_normal,
    "tangency_basic": tangency_basic,
    "tangency_cubic": tangency_cubic,
    "sphere2": sphere2,
}


def builtin(name, **params):
    if name not in _BUILTINS:
        raise ModelError(f"unknown model {name!r}; known: {sorted(_BUILTINS)}")
    return _BUILTINS[name](**params)


def from_json(src):
    """Load a model from a JSON description.

    {"model": "<builtin>", "params": {...}} or a custom single-chart model
    {"model": "custom", "charts": [{"F1": ["ex","ex"], "F2": ["ex","ex"]}],
     "orientation_sign": 1}.
    """
    if isinstance(src, (str, bytes)):
        with open(src) as fh:
            desc = json.load(fh)
    else:
        desc = src
    if not isinstance(desc, dict) or "model" not in desc:
        raise ModelError("model description must be an object with a 'model' key")
    name = desc["model"]
    params = desc.get("params", {})
    if name != "custom":
        if "orientation_sign" in desc:
            params = dict(params, orientation_sign=desc["orientation_sign"])
        return builtin(name, **params)
    charts = desc.get("charts")
    if not charts or len(charts) != 1:
        raise ModelError("custom models support exactly one chart")
    spec = charts[0]
    try:
        fields = ExprFields(spec["F1"][0], spec["F1"][1],
                            spec["F2"][0], spec["F2"][1])
    except KeyError as exc:
        raise ModelError(f"chart missing frame component {exc}") from exc
    return _planar("custom", fields, desc.get("orientation_sign", 1),
                   params={"charts": charts})


def rotated_frame(model, theta):
    """Same structure with frame (cos t F1 + sin t F2, -sin t F1 + cos t F2)."""
    ct, st = np.cos(theta), np.sin(theta)

    def make_fields(base):
        def val(x, y):
            f1, f2 = base.val(x, y)
            return ct * f1 + st * f2, -st * f1 + ct * f2

        def jac(x, y):
            j1, j2 = base.jac(x, y)
            return ct * j1 + st * j2, -st * j1 + ct * j2

        def hess(x, y):
            h1, h2 = base.hess(x, y)
            return ct * h1 + st * h2, -st * h1 + ct * h2

        return HandFields(val, jac, hess)

    return FrameModel(model.name + "_rot", model.charts,
                      [make_fields(f) for f in model._fields],
                      orientation_sign=model.orientation_sign,
                      transition=model._transition,
                      transition_jac=model._transition_jac,
                      switch_radius=model.switch_radius)
