"""Point classification, singular-set tracing, and normal coordinates.

Points are Riemannian (dim span = 2), Grushin (rank restored by one bracket),
or tangency points (rank restored by a length-2 bracket, distribution tangent
to the singular set).  Tangency points carry a contribution sign from the
rotation sense of the distribution against the oriented singular curve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .models import (ArsurfError, Point2, as_xy, chart_of, frame_components,
                     lie_bracket, lie_bracket_jac)
from .geodesics import (FlowError, ParamCurve, flow, hamiltonian,
                        launch_normal_to_curve)

TOL_TRANSV = 1e-3


class ClassifyError(ArsurfError):
    pass


class H0Violation(ClassifyError):
    """Structure not bracket-generating to step 3 at the point."""


class PointKind(Enum):
    RIEMANNIAN = "Riemannian"
    GRUSHIN = "Grushin"
    TANGENCY = "Tangency"


@dataclass(frozen=True)
class PointClass:
    kind: PointKind
    dims: tuple  # (dim Delta, dim Delta_2, dim Delta_3)


@dataclass
class SingularCurve:
    """Polyline on {det = 0}, oriented as the boundary of the area_sign > 0
    side; tangency_markers hold (vertex index, tau)."""
    polyline: np.ndarray
    closed: bool
    chart: int = 0
    tangency_markers: list = field(default_factory=list)

    def __len__(self):
        return len(self.polyline)

    def as_param_curve(self):
        return ParamCurve.from_polyline(self.polyline)


def _rank(vectors, tol):
    """Rank of the 2 x k matrix with the given columns, thresholded SVD."""
    m = np.stack(vectors, axis=1)
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol))


def classify_point(model, q, tol_class=None, chart=None):
    """Classify q by the growth of Delta, Delta_2, Delta_3."""
    chart = chart_of(q) if chart is None else chart
    f1, f2 = model.frame(q, chart)
    if tol_class is None:
        tol_class = 1e-7 * (1.0 + np.linalg.norm(f1) + np.linalg.norm(f2))
    br = lie_bracket(model, q, (1, 2), chart)
    bj = lie_bracket_jac(model, q, chart)
    j1, j2 = model.frame_jac(q, chart)
    b11 = bj @ f1 - j1 @ br   # [F1, [F1, F2]]
    b22 = bj @ f2 - j2 @ br   # [F2, [F1, F2]]
    d1 = _rank([f1, f2], tol_class)
    d2 = max(d1, _rank([f1, f2, br], tol_class))
    d3 = max(d2, _rank([f1, f2, br, b11, b22], tol_class))
    dims = (d1, d2, d3)
    if d3 < 2:
        raise H0Violation(f"dim Delta_3 = {d3} < 2 at {tuple(as_xy(q))}")
    if d1 == 2:
        return PointClass(PointKind.RIEMANNIAN, dims)
    if d2 == 2:
        return PointClass(PointKind.GRUSHIN, dims)
    return PointClass(PointKind.TANGENCY, dims)


# ---------------------------------------------------------------------------
# singular set tracing
# ---------------------------------------------------------------------------

def _newton_to_zero(model, q, chart, tol=1e-13, max_iter=12):
    """Project q onto {det = 0} along the det gradient."""
    q = np.array(q, dtype=float)
    for _ in range(max_iter):
        d = float(model.det_frame(q, chart))
        if abs(d) < tol:
            return q, True
        g = model.det_grad(q, chart)
        g2 = float(g @ g)
        if g2 < 1e-24:
            return q, False
        q = q - d * g / g2
    return q, abs(float(model.det_frame(q, chart))) < 1e-9


def _in_box(q, box):
    (x0, x1), (y0, y1) = box
    return x0 <= q[0] <= x1 and y0 <= q[1] <= y1


def trace_singular_set(model, seed_box, step=None, chart=0, n_scan=48,
                       max_steps=40000, max_refine=6, tol_trace=1e-10):
    """Predictor-corrector traces of {det = 0} inside seed_box.

    Curves are oriented so that the area_sign > 0 region lies on their left
    (boundary-of-M-plus convention); closed when the endpoints meet.
    """
    (x0, x1), (y0, y1) = seed_box
    diam = float(np.hypot(x1 - x0, y1 - y0))
    if step is None:
        step = 1e-2 * diam

    xs = np.linspace(x0, x1, n_scan)
    ys = np.linspace(y0, y1, n_scan)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    det = model.det_frame(np.stack([gx, gy], axis=-1), chart)

    seeds = []
    sx = np.where(np.diff(np.sign(det), axis=0) != 0)
    for i, j in zip(*sx):
        seeds.append(_bisect_edge(model, chart, (xs[i], ys[j]),
                                  (xs[i + 1], ys[j])))
    sy = np.where(np.diff(np.sign(det), axis=1) != 0)
    for i, j in zip(*sy):
        seeds.append(_bisect_edge(model, chart, (xs[i], ys[j]),
                                  (xs[i], ys[j + 1])))

    curves = []

    def covered(q):
        for c in curves:
            d = np.min(np.linalg.norm(c.polyline - q, axis=1))
            if d < 2.0 * step:
                return True
        return False

    for seed in seeds:
        q, ok = _newton_to_zero(model, seed, chart)
        if not ok or not _in_box(q, seed_box) or covered(q):
            continue
        poly, closed = _trace_from(model, chart, q, step, seed_box, max_steps,
                                   max_refine, tol_trace)
        if len(poly) < 3:
            continue
        poly = np.asarray(poly)
        poly = _orient_boundary_of_plus(model, chart, poly, step)
        curves.append(SingularCurve(polyline=poly, closed=closed, chart=chart))
    return curves


def _bisect_edge(model, chart, qa, qb, iters=60):
    qa, qb = np.array(qa, float), np.array(qb, float)
    fa = float(model.det_frame(qa, chart))
    for _ in range(iters):
        qm = 0.5 * (qa + qb)
        fm = float(model.det_frame(qm, chart))
        if fa * fm <= 0:
            qb = qm
        else:
            qa, fa = qm, fm
    return 0.5 * (qa + qb)


def _trace_from(model, chart, q_start, step, box, max_steps, max_refine,
                tol_trace):
    def tangent(q):
        g = model.det_grad(q, chart)
        ng = np.linalg.norm(g)
        if ng < 1e-12:
            return None
        return np.array([-g[1], g[0]]) / ng

    halves = []
    for direction in (1.0, -1.0):
        pts = []
        q = q_start.copy()
        t_prev = tangent(q)
        if t_prev is None:
            raise ClassifyError("degenerate det gradient at seed")
        t_prev = direction * t_prev
        h = step
        refines = 0
        for _ in range(max_steps):
            t = tangent(q)
            if t is None:
                refines += 1
                h *= 0.5
                if refines > max_refine:
                    raise ClassifyError(
                        "gradient-degenerate singular curve; refinement failed")
                continue
            if t @ t_prev < 0:
                t = -t
            q_pred = q + h * t
            q_new, ok = _newton_to_zero(model, q_pred, chart, tol=tol_trace)
            if not ok:
                refines += 1
                h *= 0.5
                if refines > max_refine:
                    raise ClassifyError("corrector failed on singular curve")
                continue
            if not _in_box(q_new, box):
                break
            pts.append(q_new)
            t_prev = t
            q = q_new
            if len(pts) > 3 and np.linalg.norm(q - q_start) < 0.8 * h:
                return [q_start] + pts, True
        halves.append(pts)
    back = halves[1][::-1]
    return back + [q_start] + halves[0], False


def _orient_boundary_of_plus(model, chart, poly, step):
    mid = len(poly) // 2
    tan = poly[mid + 1] - poly[mid - 1]
    tan = tan / np.linalg.norm(tan)
    left = np.array([-tan[1], tan[0]])
    probe = poly[mid] + 0.5 * step * left
    if float(model.area_sign(probe, chart)) < 0:
        return poly[::-1].copy()
    return poly


# ---------------------------------------------------------------------------
# tangency detection
# ---------------------------------------------------------------------------

def _delta_direction(model, q, chart):
    """Unit vector spanning Delta at a singular point (largest-sv column)."""
    f1, f2 = model.frame(q, chart)
    a = np.column_stack([f1, f2])
    u, s, _ = np.linalg.svd(a)
    return u[:, 0]


def find_tangency_points(curve, model, refine_tol=1e-12, stencil_h=None):
    """Zeros of (Delta . grad det) along a traced singular curve.

    Returns [(Point2, tau)] and records markers on the curve; tau is the sign
    of the rotation rate of Delta against the curve tangent (counterclockwise
    is +1), evaluated on a 5-point stencil.  A zero without sign change is
    skipped with a "degenerate tangency" warning.
    """
    poly = curve.polyline
    chart = curve.chart
    n = len(poly)
    g = np.empty(n)
    v_prev = None
    for i in range(n):
        v = _delta_direction(model, poly[i], chart)
        if v_prev is not None and v @ v_prev < 0:
            v = -v
        v_prev = v
        g[i] = v @ model.det_grad(poly[i], chart)

    out = []
    markers = []
    sign = np.sign(g)
    for i in range(n - 1):
        if sign[i] == 0 or sign[i] * sign[i + 1] < 0:
            qa, qb = poly[i], poly[i + 1]
            ga = g[i]
            for _ in range(80):
                qm, _ = _newton_to_zero(model, 0.5 * (qa + qb), chart)
                v = _delta_direction(model, qm, chart)
                gm = v @ model.det_grad(qm, chart)
                if abs(gm) < refine_tol:
                    break
                if ga * gm <= 0:
                    qb = qm
                else:
                    qa, ga = qm, gm
            qt = 0.5 * (qa + qb)
            qt, _ = _newton_to_zero(model, qt, chart)
            tau = _tau_at(model, curve, qt, i, stencil_h)
            out.append((Point2(qt[0], qt[1], chart), tau))
            markers.append((i, tau))
    # even-multiplicity suspects: local minima of |g| that refine to ~0
    # without a sign change
    gmax = np.max(np.abs(g)) + 1e-300
    for i in range(1, n - 1):
        if (abs(g[i]) <= abs(g[i - 1]) and abs(g[i]) <= abs(g[i + 1])
                and sign[i - 1] * sign[i + 1] > 0
                and abs(g[i]) < 0.1 * gmax):
            gmin = _refine_abs_min(model, curve, poly[i - 1], poly[i + 1])
            if gmin < 1e-9 * gmax:
                warnings.warn("degenerate tangency, H0(ii) suspect",
                              stacklevel=2)
    curve.tangency_markers = markers
    return out


def _refine_abs_min(model, curve, qa, qb, iters=50):
    """Golden-section minimum of |Delta . grad det| between two curve points."""
    chart = curve.chart
    phi = 0.5 * (np.sqrt(5.0) - 1.0)

    def val(t):
        q, _ = _newton_to_zero(model, qa + t * (qb - qa), chart)
        return abs(_delta_direction(model, q, chart) @ model.det_grad(q, chart))

    a, b = 0.0, 1.0
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = val(c), val(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = val(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = val(d)
    return min(fc, fd)


def _tau_at(model, curve, qt, seg_index, stencil_h=None):
    """Sign of d/ds [angle(Delta) - angle(curve tangent)] at the tangency."""
    poly = curve.polyline
    chart = curve.chart
    if stencil_h is None:
        stencil_h = np.linalg.norm(poly[min(seg_index + 1, len(poly) - 1)]
                                   - poly[seg_index])
    h = max(stencil_h, 1e-6)
    tan0 = poly[min(seg_index + 1, len(poly) - 1)] - poly[seg_index]
    tan0 = tan0 / np.linalg.norm(tan0)

    rel = []
    for k in (-2, -1, 0, 1, 2):
        # march along the curve from the tangency and re-project onto Z
        q, _ = _newton_to_zero(model, qt + k * h * tan0, chart)
        g = model.det_grad(q, chart)
        tan = np.array([-g[1], g[0]])
        tan = tan / np.linalg.norm(tan)
        if tan @ tan0 < 0:
            tan = -tan
        v = _delta_direction(model, q, chart)
        # line angles modulo pi: use doubled-angle embedding for continuity
        ang_v = 0.5 * np.arctan2(2 * v[0] * v[1], v[0] ** 2 - v[1] ** 2)
        ang_t = np.arctan2(tan[1], tan[0])
        rel.append((ang_v - ang_t, ang_v, ang_t))
    vals = np.unwrap([r[0] for r in rel], period=np.pi)
    # five-point first-derivative stencil
    d = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    return int(np.sign(d)) if d != 0 else 0


# ---------------------------------------------------------------------------
# normal coordinates from a transversal curve
# ---------------------------------------------------------------------------

@dataclass
class NormalChart:
    alphas: np.ndarray
    svals: np.ndarray
    grid: np.ndarray          # (ns, na, 2) chart points
    pushed_frame: np.ndarray  # (ns, na, 2, 2): [field, component]
    truncated: bool = False

    def map(self, i_s, i_a):
        return self.grid[i_s, i_a]


def build_normal_chart(model, curve, s_range, n_grid, alphas=None, chart=0,
                       tol_transv=TOL_TRANSV, rtol=1e-10):
    """Geodesic normal coordinates (signed distance, curve parameter).

    Shoots the geodesic normal to the curve on both sides of every sampled
    parameter; grid[i, j] is the point at signed distance svals[i] from
    curve(alphas[j]), with s > 0 on the left of the oriented curve (for a
    singular curve oriented as the boundary of the positive-area side this is
    the area_sign > 0 region).  The pushed frame is the model frame rotated so
    its first field is the unit normal, expressed in (s, alpha) coordinates;
    on the interior it must be ((1, 0), (0, f)).
    """
    if alphas is None:
        lo, hi = getattr(curve, "s_range", (-1.0, 1.0))
        alphas = np.linspace(lo, hi, n_grid)
    alphas = np.asarray(alphas, dtype=float)
    smax = float(s_range)
    ns = max(3, int(n_grid) | 1)
    svals = np.linspace(-smax, smax, ns)

    for a in alphas:
        q = curve(a)
        tan = curve.tangent(a)
        nvec = np.array([-tan[1], tan[0]])
        h = float(hamiltonian(model, q, nvec, chart))
        if h <= 0:
            raise ClassifyError(f"curve not transversal to Delta at alpha={a}")
        # angle between the curve tangent and Delta on the singular set
        if abs(float(model.det_frame(q, chart))) < 1e-9:
            v = _delta_direction(model, q, chart)
            t_unit = tan / np.linalg.norm(tan)
            ang = np.arccos(np.clip(abs(v @ t_unit), 0.0, 1.0))
            if ang < tol_transv:
                raise ClassifyError(
                    f"transversality below tolerance at alpha={a}")

    na = len(alphas)
    grid = np.full((ns, na, 2), np.nan)
    mid = ns // 2
    for side in (1, -1):
        launches = launch_normal_to_curve(model, curve, alphas, side=side,
                                          chart=chart)
        if len(launches) != na:
            raise ClassifyError("degenerate normal launch inside the grid")
        for j in range(na):
            fam = flow(model, launches.q0[j], launches.p0[j], smax, rtol=rtol,
                       chart=chart)
            if not fam.success:
                raise FlowError(f"normal geodesic failed: {fam.message}")
            tan = curve.tangent(alphas[j])
            left = np.array([-tan[1], tan[0]])
            _, q1, _ = fam.state(abs(svals[mid + 1]))
            going_left = (q1 - launches.q0[j]) @ left > 0
            # positive s is the left side of the oriented curve
            rows = range(mid + 1, ns) if going_left else range(mid - 1, -1, -1)
            for i in rows:
                _, q, _ = fam.state(abs(svals[i]))
                grid[i, j] = q
        del launches
    for j in range(na):
        grid[mid, j] = curve(alphas[j])
    if np.any(np.isnan(grid)):
        raise ClassifyError("normal launches covered one side twice; "
                            "check the curve orientation")

    # detect focal crossings: fold of the map along s
    truncated = False
    jac = _grid_jacobian(grid, svals, alphas)
    detj = np.linalg.det(jac)
    sign0 = np.sign(detj[mid])
    bad = np.where(np.sign(detj) * sign0[None, :] <= 0)
    if bad[0].size:
        smallest = np.min(np.abs(svals[bad[0]]))
        keep = np.abs(svals) < smallest
        if keep.sum() >= 3:
            warnings.warn("normal geodesics cross inside s_range; "
                          "chart truncated (focal point)", stacklevel=2)
            grid = grid[keep]
            svals = svals[keep]
            jac = jac[keep]
            truncated = True

    pushed = _push_frame(model, chart, grid, svals, alphas, jac)
    return NormalChart(alphas=alphas, svals=svals, grid=grid,
                       pushed_frame=pushed, truncated=truncated)


def _grid_jacobian(grid, svals, alphas):
    dqs = np.gradient(grid, svals, axis=0)
    dqa = np.gradient(grid, alphas, axis=1)
    return np.stack([dqs, dqa], axis=-1)  # (ns, na, 2(comp), 2(d/ds,d/da))


def _push_frame(model, chart, grid, svals, alphas, jac):
    ns, na = grid.shape[:2]
    pushed = np.empty((ns, na, 2, 2))
    f1, f2 = model.frame(grid.reshape(-1, 2), chart)
    f1 = f1.reshape(ns, na, 2)
    f2 = f2.reshape(ns, na, 2)
    # unit normal direction = d(map)/ds; rotate the frame onto it
    vel = jac[..., 0]
    u = frame_components(model, grid.reshape(-1, 2),
                         vel.reshape(-1, 2), chart).reshape(ns, na, 2)
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    norm[norm == 0] = 1.0
    u = u / norm
    ct, st = u[..., 0:1], u[..., 1:2]
    x_field = ct * f1 + st * f2
    y_field = -st * f1 + ct * f2
    jinv = np.linalg.inv(jac)
    pushed[..., 0, :] = np.einsum("...ij,...j->...i", jinv, x_field)
    pushed[..., 1, :] = np.einsum("...ij,...j->...i", jinv, y_field)
    return pushed
