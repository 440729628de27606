"""Gaussian curvature, geodesic curvature, regularized curvature integrals,
tangency boxes, and the three-scale Gauss-Bonnet evaluation.

Curvature comes from the structure coefficients of the orthonormal frame,
[F1, F2] = c1 F1 + c2 F2:

    K = F1(c2) - F2(c1) - c1^2 - c2^2,

which reproduces -2/x^2 on the Grushin plane and -2(3x^2+y)/(y-x^2)^2 on the
basic tangency model.

Sign bookkeeping for the signed measures: the orientation induced by the
signed area form differs from the frame orientation by the constant
orientation_sign (area_sign * sign(det) = orientation_sign identically), so
every boundary term "against d sigma_s" is computed in the frame convention
and multiplied by orientation_sign once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .models import ArsurfError, as_xy, chart_of, frame_components, \
    lie_bracket, lie_bracket_jac
from .geodesics import exp_map, flow, flow_family, \
    launch_normal_to_curve
from .loci import clip_polyline_loops, fit_loglog

TOL_SING = 1e-12


class CurvatureError(ArsurfError):
    pass


@dataclass(frozen=True)
class CurvatureEval:
    K: float
    valid: bool


def _structure_data(model, pts, chart):
    """c = (c1, c2) with [F1,F2] = c1 F1 + c2 F2, and its Jacobian Dc."""
    pts = np.asarray(pts, dtype=float)
    f1, f2 = model.frame(pts, chart)
    j1, j2 = model.frame_jac(pts, chart)
    a = np.stack([f1, f2], axis=-1)
    br = lie_bracket(model, pts, (1, 2), chart)
    brj = lie_bracket_jac(model, pts, chart)
    ainv = np.linalg.inv(a)
    c = np.einsum("...ij,...j->...i", ainv, br)
    # A c = b  =>  Dc = A^-1 (Db - (DA) c);  (DA)[i, m, k] = d A[i,m]/d q_k
    # equals Jm[i, k], so stacking the Jacobians on a new axis -2 is DA
    da = np.stack([j1, j2], axis=-2)
    dac = np.einsum("...imk,...m->...ik", da, c)
    dc = np.einsum("...ij,...jk->...ik", ainv, brj - dac)
    return f1, f2, c, dc


def gaussian_curvature(model, q, chart=None, tol_sing=TOL_SING):
    """K at a single point; valid=False on the singular set."""
    chart = chart_of(q) if chart is None else chart
    pts = as_xy(q)
    det = float(model.det_frame(pts, chart))
    if abs(det) < tol_sing:
        return CurvatureEval(K=float("nan"), valid=False)
    f1, f2, c, dc = _structure_data(model, pts, chart)
    k = float(dc[1] @ f1 - dc[0] @ f2 - c[0] ** 2 - c[1] ** 2)
    return CurvatureEval(K=k, valid=True)


def curvature_grid(model, pts, chart=0):
    """Vectorized K over an (..., 2) array of points (no singular guard)."""
    f1, f2, c, dc = _structure_data(model, pts, chart)
    return (np.einsum("...k,...k->...", dc[..., 1, :], f1)
            - np.einsum("...k,...k->...", dc[..., 0, :], f2)
            - c[..., 0] ** 2 - c[..., 1] ** 2)


def signed_density_K(model, pts, chart=0):
    """K * area_sign / |det|, the integrand of the signed curvature form."""
    f1, f2 = model.frame(pts, chart)
    det = f1[..., 0] * f2[..., 1] - f1[..., 1] * f2[..., 0]
    k = curvature_grid(model, pts, chart)
    return k * model.orientation_sign * np.sign(det) / np.abs(det)


# ---------------------------------------------------------------------------
# geodesic curvature (frame convention)
# ---------------------------------------------------------------------------

def geodesic_curvature(model, polyline, params=None, chart=0, tol_sing=1e-9):
    """(k_g, g-speed) along a curve polyline, frame orientation.

    With the unit tangent written cos(phi) F1 + sin(phi) F2,
    k_g = dphi/ds - c1 cos(phi) - c2 sin(phi), s the g-arclength.  Curves
    touching the singular set are rejected.
    """
    poly = np.asarray(polyline, dtype=float)
    if params is None:
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        params = np.concatenate([[0.0], np.cumsum(seg)])
    params = np.asarray(params, dtype=float)
    det = model.det_frame(poly, chart)
    if np.any(np.abs(det) < tol_sing):
        raise CurvatureError("curve touches the singular set; "
                             "k_g is undefined there")
    closed = np.linalg.norm(poly[0] - poly[-1]) < 1e-12 * (
        1 + np.abs(poly).max())
    bc = "periodic" if closed else "not-a-knot"
    spl = CubicSpline(params, poly, axis=0, bc_type=bc)
    dq = spl(params, 1)
    u = frame_components(model, poly, dq, chart)
    speed = np.linalg.norm(u, axis=1)
    phi = np.unwrap(np.arctan2(u[:, 1], u[:, 0]))
    if closed:
        # unwind accumulates 2*pi*winding over one loop; fit the derivative
        # on the periodic extension
        wind = phi[-1] - phi[0]
        lin = wind * (params - params[0]) / (params[-1] - params[0])
        per = phi - lin
        per[-1] = per[0]
        dphi = CubicSpline(params, per, bc_type="periodic")(params, 1) \
            + wind / (params[-1] - params[0])
    else:
        dphi = CubicSpline(params, phi)(params, 1)
    _f1, _f2, c, _dc = _structure_data(model, poly, chart)
    kg = dphi / speed - c[:, 0] * np.cos(phi) - c[:, 1] * np.sin(phi)
    return kg, speed


def kg_integral(model, polyline, params=None, chart=0, tol_sing=1e-9):
    """Integral of k_g dsigma along the polyline (frame convention)."""
    poly = np.asarray(polyline, dtype=float)
    if params is None:
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        params = np.concatenate([[0.0], np.cumsum(seg)])
    params = np.asarray(params, dtype=float)
    kg, speed = geodesic_curvature(model, poly, params, chart, tol_sing)
    return float(np.trapz(kg * speed, params))


def corner_turn(model, q, t_in, t_out, chart=0):
    """Signed g-angle from incoming to outgoing tangent, frame orientation."""
    u1 = frame_components(model, as_xy(q), np.asarray(t_in, float), chart)
    u2 = frame_components(model, as_xy(q), np.asarray(t_out, float), chart)
    cosv = float(u1 @ u2)
    sinv = float(u1[0] * u2[1] - u1[1] * u2[0])
    return float(np.arctan2(sinv, cosv))


# ---------------------------------------------------------------------------
# K dA_s over M_eps: grid quadrature
# ---------------------------------------------------------------------------

def integrate_K_Meps(model, box, eps, quad_n, dist_fn, chart=0,
                     domain_mask=None, subdivide=4):
    """Midpoint quadrature of K * area_sign/|det| over {dist > eps} in a box.

    dist_fn maps (n, 2) points to distances from the singular set;
    domain_mask optionally restricts the box (e.g. to a chart disk).  Cells
    near the eps level set or the domain edge are subdivided.
    """
    (x0, x1), (y0, y1) = box
    n = int(quad_n)
    hx = (x1 - x0) / n
    hy = (y1 - y0) / n
    cx = x0 + hx * (np.arange(n) + 0.5)
    cy = y0 + hy * (np.arange(n) + 0.5)
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    centers = np.stack([gx, gy], axis=-1).reshape(-1, 2)

    d = np.asarray(dist_fn(centers), dtype=float)
    inside_dom = np.ones(len(centers), dtype=bool) if domain_mask is None \
        else np.asarray(domain_mask(centers), dtype=bool)
    h_diag = float(np.hypot(hx, hy))
    band = np.abs(d - eps) < 2.0 * h_diag
    if domain_mask is not None:
        band |= _mask_boundary(inside_dom.reshape(n, n)).reshape(-1)
    full = inside_dom & (d > eps) & ~band
    total = float(np.sum(signed_density_K(model, centers[full], chart))
                  * hx * hy)

    idx = np.nonzero(inside_dom & band)[0] if domain_mask is not None \
        else np.nonzero(band)[0]
    if idx.size:
        m = int(subdivide)
        ox = (np.arange(m) + 0.5) / m - 0.5
        sub = np.stack(np.meshgrid(ox * hx, ox * hy, indexing="ij"),
                       axis=-1).reshape(-1, 2)
        pts = (centers[idx][:, None, :] + sub[None, :, :]).reshape(-1, 2)
        ds = np.asarray(dist_fn(pts), dtype=float)
        ok = ds > eps
        if domain_mask is not None:
            ok &= np.asarray(domain_mask(pts), dtype=bool)
        if np.any(ok):
            total += float(np.sum(signed_density_K(model, pts[ok], chart))
                           * hx * hy / (m * m))
    return total


def _mask_boundary(mask):
    out = np.zeros_like(mask)
    ring = (mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2]
            & mask[1:-1, 2:])
    out[1:-1, 1:-1] = mask[1:-1, 1:-1] & ~ring
    out[0, :] = mask[0, :]
    out[-1, :] = mask[-1, :]
    out[:, 0] = mask[:, 0]
    out[:, -1] = mask[:, -1]
    return out


# ---------------------------------------------------------------------------
# eps-boundaries from normal fronts; strip quadrature for graph-type Z
# ---------------------------------------------------------------------------

def eps_boundary_fronts(model, z_curve, eps, params, chart=0):
    """Clipped time-eps fronts of the family normal to the singular curve.

    Returns {det_sign_of_side: (points, corners)}.
    """
    out = {}
    for side in (1, -1):
        launch = launch_normal_to_curve(model, z_curve, params, side=side,
                                        chart=chart)
        fr = exp_map(model, launch, eps)
        pts, corners = clip_polyline_loops(fr.points)
        det_side = int(np.sign(np.median(model.det_frame(pts, chart))))
        out[det_side] = (pts, corners)
    if len(out) != 2:
        raise CurvatureError("normal fronts did not separate the two sides")
    return out


def _graph_interp(pts):
    order = np.argsort(pts[:, 0])
    x = pts[order, 0]
    y = pts[order, 1]
    x, idx = np.unique(x, return_index=True)
    y = y[idx]
    return lambda xs: np.interp(xs, x, y)


def integrate_K_strips(model, box, b_plus, b_minus, z_of_x, chart=0,
                       removed_boxes=(), n_panels=26, panel_ratio=1.45,
                       gauss_n=24, x_gauss=96):
    """Signed K integral over the box minus the eps-neighborhood of Z.

    Geometry must be graph-like: the singular set is y = z_of_x(x) and the
    eps-boundaries are graphs y = b_plus(x) (above Z) and y = b_minus(x)
    (below).  Each vertical column is integrated with Gauss panels graded
    geometrically away from the singular curve; x-integration is
    Gauss-Legendre on intervals split at removed-box edges.
    """
    (x0, x1), (y0, y1) = box
    nodes, wts = np.polynomial.legendre.leggauss(gauss_n)
    xnodes, xwts = np.polynomial.legendre.leggauss(x_gauss)

    def column(x):
        z = float(z_of_x(x))
        total = 0.0
        for side in (1, -1):
            if side > 0:
                lo = float(b_plus(x))
                hi = y1
                for (rx0, rx1, ry0, ry1) in removed_boxes:
                    if rx0 <= x <= rx1:
                        lo = max(lo, ry1)
                if hi <= lo:
                    continue
                gaps = np.abs(np.array([lo, hi]) - z)
            else:
                hi = float(b_minus(x))
                lo = y0
                for (rx0, rx1, ry0, ry1) in removed_boxes:
                    if rx0 <= x <= rx1:
                        hi = min(hi, ry0)
                if hi <= lo:
                    continue
            # panel edges graded from the side nearest to Z
            if side > 0:
                d0, d1 = lo - z, hi - z
                edges = z + np.geomspace(max(d0, 1e-14), d1,
                                         _n_edges(d0, d1, panel_ratio))
                edges[0], edges[-1] = lo, hi
            else:
                d0, d1 = z - hi, z - lo
                edges = z - np.geomspace(max(d0, 1e-14), d1,
                                         _n_edges(d0, d1, panel_ratio))
                edges[0], edges[-1] = hi, lo
            for a, b in zip(edges[:-1], edges[1:]):
                ym = 0.5 * (a + b) + 0.5 * (b - a) * nodes
                pts = np.stack([np.full_like(ym, x), ym], axis=-1)
                vals = signed_density_K(model, pts, chart)
                total += 0.5 * (b - a) * float(wts @ vals)
        return total

    # split the x-range at removed-box edges
    cuts = sorted({x0, x1} | {c for (rx0, rx1, _, _) in removed_boxes
                              for c in (rx0, rx1) if x0 < c < x1})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        xm = 0.5 * (a + b) + 0.5 * (b - a) * xnodes
        col = np.array([column(x) for x in xm])
        total += 0.5 * (b - a) * float(xwts @ col)
    return total


def _n_edges(d0, d1, ratio):
    if d0 <= 0:
        d0 = 1e-14
    return max(4, int(np.ceil(np.log(d1 / d0) / np.log(ratio))) + 1)


# ---------------------------------------------------------------------------
# boundary offset (eq. of the two-sided k_g cancellation)
# ---------------------------------------------------------------------------

def _orient_region_left(model, pts, chart, away_from_z=True):
    """Orient a front polyline so {d > eps} lies on its plane-left."""
    m = len(pts) // 2
    tan = pts[m + 1] - pts[m - 1]
    tan = tan / (np.linalg.norm(tan) + 1e-300)
    left = np.array([-tan[1], tan[0]])
    h = 1e-4 * (1.0 + np.linalg.norm(pts[m]))
    base = abs(float(model.det_frame(pts[m], chart)))
    probe = abs(float(model.det_frame(pts[m] + h * left, chart)))
    outward = probe > base
    if outward != away_from_z:
        return pts[::-1].copy()
    return pts


def boundary_offset(model, z_curve, eps, params=None, chart=0, window=None):
    """Difference of the two one-sided boundary k_g integrals at level eps.

    Each side's integral runs over the clipped eps-front (oriented with the
    far set on its plane-left) in the plane convention; the offset is
    (plus side) - (minus side).  Degenerate models without a minus side
    report offset 0 with single_sided=True.
    """
    if params is None:
        lo, hi = z_curve.s_range if hasattr(z_curve, "s_range") else (-1, 1)
        params = np.linspace(lo, hi, 600)
    sides = {}
    for side in (1, -1):
        try:
            launch = launch_normal_to_curve(model, z_curve, params, side=side,
                                            chart=chart)
        except ArsurfError:
            continue
        fr = exp_map(model, launch, eps)
        pts, corners = clip_polyline_loops(fr.points)
        if window is not None:
            (wx0, wx1), (wy0, wy1) = window
            keep = ((pts[:, 0] >= wx0) & (pts[:, 0] <= wx1)
                    & (pts[:, 1] >= wy0) & (pts[:, 1] <= wy1))
            pts = pts[keep]
        if len(pts) < 8:
            continue
        pts = _orient_region_left(model, pts, chart)
        det_side = int(np.sign(np.median(model.det_frame(pts, chart))))
        # plane-convention k_g integral = sign(det) * frame-convention one
        sides[det_side] = det_side * kg_integral(model, pts, chart=chart)
    if len(sides) < 2:
        return {"offset": 0.0, "plus": sides.get(1, 0.0),
                "minus": sides.get(-1, 0.0), "single_sided": True}
    return {"offset": sides[1] - sides[-1], "plus": sides[1],
            "minus": sides[-1], "single_sided": False}


# ---------------------------------------------------------------------------
# tangency box
# ---------------------------------------------------------------------------

@dataclass
class BoxRegion:
    tangency: np.ndarray
    delta1: float
    delta2: float
    sides: list          # four polylines: [gamma_{+d2}, end_{+d1}, gamma_{-d2}, end_{-d1}]
    side_is_geodesic: list
    corners: list        # corner points
    corner_turns: list   # frame-convention turning angles, complement traversal

    def bounding_rectangle(self):
        pts = np.vstack(self.sides)
        return (float(pts[:, 0].min()), float(pts[:, 0].max()),
                float(pts[:, 1].min()), float(pts[:, 1].max()))


def build_box(model, q_tangency, curve, delta1, delta2, chart=0, n_side=80):
    """Rectangle bounded by two normal geodesics and two transversal arcs.

    curve is a transversal parameterized curve with curve(0) = q_tangency;
    gamma_s is the unit-speed geodesic normal to it at parameter s.  The
    boundary consists of gamma_{+delta2}([-delta1, delta1]),
    gamma_{[-delta2,delta2]}(delta1), gamma_{-delta2}([-delta1, delta1]) and
    gamma_{[-delta2,delta2]}(-delta1), traversed as the boundary of the
    complement.  Corner turning angles are reported in the frame convention.
    """
    svals = np.linspace(-delta2, delta2, max(5, n_side | 1))
    tvals = np.linspace(-delta1, delta1, max(5, n_side | 1))
    grid = {}
    for side in (1, -1):
        launch = launch_normal_to_curve(model, curve, svals, side=side,
                                        chart=chart)
        if len(launch) != len(svals):
            raise CurvatureError("normal launches degenerate on the "
                                 "transversal curve; reduce delta2")
        for j, s in enumerate(svals):
            traj = flow(model, launch.q0[j], launch.p0[j], delta1,
                        rtol=1e-10, chart=chart)
            if not traj.success:
                raise CurvatureError("box geodesic failed; reduce delta1")
            for t in tvals:
                if (side > 0) == (t >= 0):
                    _, q, _ = traj.state(abs(t))
                    grid[(round(t, 12), j)] = q
    pts = np.empty((len(tvals), len(svals), 2))
    for i, t in enumerate(tvals):
        for j in range(len(svals)):
            pts[i, j] = grid[(round(t, 12), j)]

    gamma_plus = pts[:, -1, :]
    gamma_minus = pts[:, 0, :]
    end_plus = pts[-1, :, :]
    end_minus = pts[0, :, :]
    # closed loop: corners are the meeting points of consecutive sides
    ordered = [gamma_minus[::-1],          # (t=+d1, s=-d2) -> (t=-d1, s=-d2)
               end_minus,                  # (t=-d1, s=-d2) -> (t=-d1, s=+d2)
               gamma_plus,                 # (t=-d1, s=+d2) -> (t=+d1, s=+d2)
               end_plus[::-1]]             # (t=+d1, s=+d2) -> (t=+d1, s=-d2)
    is_geo = [True, False, True, False]

    corners = []
    turns = []
    for k in range(4):
        a = ordered[k]
        b = ordered[(k + 1) % 4]
        gap = np.linalg.norm(a[-1] - b[0])
        if gap > 1e-6 * (1 + delta1 + delta2):
            raise CurvatureError(f"box boundary does not close (gap {gap})")
        qc = 0.5 * (a[-1] + b[0])
        t_in = a[-1] - a[-2]
        t_out = b[1] - b[0]
        corners.append(qc)
        turns.append(corner_turn(model, qc, t_in, t_out, chart))
    box = BoxRegion(np.asarray(as_xy(q_tangency), dtype=float),
                    float(delta1), float(delta2), ordered, is_geo, corners,
                    turns)
    # orientation check: the loop should wind negatively around the box in
    # the plane (boundary of the complement); flip if needed
    area2 = 0.0
    for s_ in ordered:
        area2 += float(np.sum(s_[:-1, 0] * s_[1:, 1] - s_[1:, 0] * s_[:-1, 1]))
    if area2 > 0:
        box.sides = [s_[::-1].copy() for s_ in ordered[::-1]]
        box.side_is_geodesic = is_geo[::-1]
        box.corners = box.corners[::-1]
        box.corner_turns = [corner_turn(
            model, box.sides[k][-1],
            box.sides[k][-1] - box.sides[k][-2],
            box.sides[(k + 1) % 4][1] - box.sides[(k + 1) % 4][0], chart)
            for k in range(4)]
    return box


def box_kg_circulation(model, box, chart=0):
    """Circulation of k_g dsigma_s around the box boundary.

    Geodesic sides contribute zero; the transversal ends are integrated in
    the frame convention; corner turns are added; the total is multiplied by
    orientation_sign (frame-to-signed-measure conversion).
    """
    total = 0.0
    for pts, is_geo in zip(box.sides, box.side_is_geodesic):
        if is_geo:
            continue
        total += kg_integral(model, pts, chart=chart)
    total += float(np.sum(box.corner_turns))
    return model.orientation_sign * total


# ---------------------------------------------------------------------------
# extrapolation and the three-scale table
# ---------------------------------------------------------------------------

def power_law_extrapolate(eps, vals, alpha_spread_tol=0.2, plateau_atol=None):
    """Limit of v(eps) = v_inf + c eps^alpha from a geometric eps sequence.

    Returns (limit, info).  A plateau (spread below plateau_atol) returns the
    tail mean; an unstable alpha estimate (> alpha_spread_tol relative
    spread) is flagged and no extrapolation is applied.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    order = np.argsort(eps)[::-1]
    eps, vals = eps[order], vals[order]
    scale = float(np.max(np.abs(vals))) + 1e-300
    if plateau_atol is None:
        plateau_atol = 1e-9 + 1e-6 * scale
    tail = vals[-3:]
    if np.max(tail) - np.min(tail) < plateau_atol:
        return float(np.mean(vals[-2:])), {"mode": "plateau", "alpha": None,
                                           "converged": True}
    d = np.diff(vals)
    if np.any(d == 0) or len(vals) < 3:
        return float(vals[-1]), {"mode": "raw", "alpha": None,
                                 "converged": False}
    r = eps[1:] / eps[:-1]
    if np.max(np.abs(np.diff(np.log(r)))) > 1e-6:
        warnings.warn("eps sequence is not geometric; extrapolation skipped",
                      stacklevel=2)
        return float(vals[-1]), {"mode": "raw", "alpha": None,
                                 "converged": False}
    ratios = d[1:] / d[:-1]
    if np.any(ratios <= 0):
        return float(vals[-1]), {"mode": "raw", "alpha": None,
                                 "converged": False}
    alphas = np.log(ratios) / np.log(r[0])
    alpha = float(np.median(alphas))
    spread = float(np.max(np.abs(alphas - alpha)) / max(abs(alpha), 1e-12))
    if alpha <= 0 or spread > alpha_spread_tol:
        return float(vals[-1]), {"mode": "unstable", "alpha": alpha,
                                 "alpha_spread": spread, "converged": False}
    q = r[0] ** alpha
    limit = vals[-1] + d[-1] * q / (1.0 - q)
    return float(limit), {"mode": "power", "alpha": alpha,
                          "alpha_spread": spread, "converged": True}


@dataclass
class GBReport:
    eps_list: np.ndarray
    delta1_list: np.ndarray
    delta2_list: np.ndarray
    table: np.ndarray          # (n_d1, n_d2, n_eps) raw integrals
    eps_limits: np.ndarray     # (n_d1, n_d2)
    d2_limits: np.ndarray      # (n_d1,)
    value: float
    converged: bool
    info: dict = field(default_factory=dict)


def three_scale_gauss_bonnet(model, integrator, eps_list, delta1_list,
                             delta2_list, box_factory):
    """Iterated-limit table of the curvature integral (eps, then d2, then d1).

    integrator(eps, box_or_none) -> float evaluates the K dA_s integral over
    the eps-regularized domain minus the given tangency box; box_factory(d1,
    d2) -> removed-region description (or None when the model has no
    tangency points).  Extrapolation refuses to claim a number when the
    power-law fit is unstable.
    """
    eps_list = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    delta1_list = np.asarray(sorted(delta1_list, reverse=True), dtype=float)
    delta2_list = np.asarray(sorted(delta2_list, reverse=True), dtype=float)
    n1, n2, ne = len(delta1_list), len(delta2_list), len(eps_list)
    table = np.empty((n1, n2, ne))
    eps_limits = np.empty((n1, n2))
    ok = True
    info = {}
    for i, d1 in enumerate(delta1_list):
        for j, d2 in enumerate(delta2_list):
            removed = box_factory(d1, d2)
            for k, eps in enumerate(eps_list):
                table[i, j, k] = integrator(eps, removed)
            eps_limits[i, j], inf = power_law_extrapolate(eps_list,
                                                          table[i, j])
            ok = ok and (inf.get("converged", False)
                         or inf["mode"] == "plateau")
    d2_limits = np.empty(n1)
    for i in range(n1):
        d2_limits[i], inf = power_law_extrapolate(delta2_list, eps_limits[i])
        ok = ok and (inf.get("converged", False) or inf["mode"] == "plateau")
    value, inf = power_law_extrapolate(delta1_list, d2_limits)
    ok = ok and (inf.get("converged", False) or inf["mode"] == "plateau")
    info["final"] = inf
    return GBReport(eps_list, delta1_list, delta2_list, table, eps_limits,
                    d2_limits, float(value), bool(ok), info)


# ---------------------------------------------------------------------------
# curvature ridges (crests/valleys)
# ---------------------------------------------------------------------------

def _ridge_residual(model, pts, chart, kind="crest"):
    """Eberly height-ridge condition: grad K . v = 0 for the transverse
    eigenvector v of Hess K with the extremal eigenvalue."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    h = 1e-5
    k0 = curvature_grid(model, pts, chart)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    kxp = curvature_grid(model, pts + ex, chart)
    kxm = curvature_grid(model, pts - ex, chart)
    kyp = curvature_grid(model, pts + ey, chart)
    kym = curvature_grid(model, pts - ey, chart)
    kxyp = curvature_grid(model, pts + ex + ey, chart)
    kxym = curvature_grid(model, pts + ex - ey, chart)
    kxmy = curvature_grid(model, pts - ex + ey, chart)
    kxmym = curvature_grid(model, pts - ex - ey, chart)
    gx = (kxp - kxm) / (2 * h)
    gy = (kyp - kym) / (2 * h)
    hxx = (kxp - 2 * k0 + kxm) / (h * h)
    hyy = (kyp - 2 * k0 + kym) / (h * h)
    hxy = (kxyp - kxym - kxmy + kxmym) / (4 * h * h)
    res = np.empty(len(pts))
    lam = np.empty(len(pts))
    for i in range(len(pts)):
        hess = np.array([[hxx[i], hxy[i]], [hxy[i], hyy[i]]])
        w, v = np.linalg.eigh(hess)
        j = 0 if kind == "crest" else 1  # most negative / most positive
        res[i] = gx[i] * v[0, j] + gy[i] * v[1, j]
        lam[i] = w[j]
    return res, lam


def trace_curvature_ridge(model, seed, kind="crest", step=5e-3, chart=0,
                          max_steps=4000, z_gap=2e-2, res_tol=1e-7,
                          box=None):
    """Trace a crest/valley of K through the seed by the height-ridge
    condition; stops near the singular set (K blows up) or when the
    condition residual cannot be driven below tolerance.
    """
    def resid(q):
        return float(_ridge_residual(model, q[None, :], chart, kind)[0][0])

    def grad_resid(q):
        h = 1e-5
        rx = (resid(q + [h, 0]) - resid(q - [h, 0])) / (2 * h)
        ry = (resid(q + [0, h]) - resid(q - [0, h])) / (2 * h)
        return np.array([rx, ry])

    def project(q):
        for _ in range(20):
            r = resid(q)
            if abs(r) < res_tol:
                return q, True
            g = grad_resid(q)
            g2 = g @ g
            if g2 < 1e-20:
                return q, False
            q = q - r * g / g2
        return q, abs(resid(q)) < 100 * res_tol

    q0, ok = project(np.asarray(as_xy(seed), dtype=float).copy())
    if not ok:
        raise CurvatureError("seed does not converge to a ridge point")
    halves = []
    for direction in (1.0, -1.0):
        pts = [q0]
        q = q0.copy()
        t_prev = None
        for _ in range(max_steps):
            g = grad_resid(q)
            ng = np.linalg.norm(g)
            if ng < 1e-12:
                break
            tan = np.array([-g[1], g[0]]) / ng
            if t_prev is None:
                tan = direction * tan
            elif tan @ t_prev < 0:
                tan = -tan
            qn, ok = project(q + step * tan)
            if not ok:
                break
            if abs(float(model.det_frame(qn, chart))) < z_gap:
                pts.append(qn)
                break
            if box is not None:
                (bx0, bx1), (by0, by1) = box
                if not (bx0 <= qn[0] <= bx1 and by0 <= qn[1] <= by1):
                    break
            pts.append(qn)
            t_prev = tan
            q = qn
        halves.append(pts)
    return np.array(halves[1][::-1] + halves[0])


def ridge_through_tangency(model, q_tangency, kind="crest", step=5e-3,
                           chart=0, z_gap=2e-2, probe=0.12, box=None):
    """Ridge polyline continued across Z through a tangency point.

    Traces the ridge on both sides of the singular set from seeds offset
    along the candidate transversal direction and joins them through the
    tangency point.
    """
    qt = np.asarray(as_xy(q_tangency), dtype=float)
    g = model.det_grad(qt, chart)
    n = g / (np.linalg.norm(g) + 1e-300)
    pieces = []
    for sgn in (1.0, -1.0):
        seed = qt + sgn * probe * n
        try:
            piece = trace_curvature_ridge(model, seed, kind=kind, step=step,
                                          chart=chart, z_gap=z_gap, box=box)
        except CurvatureError:
            continue
        pieces.append(piece)
    if not pieces:
        raise CurvatureError("no ridge found near the tangency point")
    if len(pieces) == 1:
        return pieces[0]
    # join: orient each piece to end at the tangency point
    a, b = pieces
    if np.linalg.norm(a[0] - qt) < np.linalg.norm(a[-1] - qt):
        a = a[::-1]
    if np.linalg.norm(b[-1] - qt) < np.linalg.norm(b[0] - qt):
        b = b[::-1]
    return np.vstack([a, qt[None, :], b])


# ---------------------------------------------------------------------------
# Z-graph boundary machinery (folds, envelope arcs, foliation k_g)
# ---------------------------------------------------------------------------

def _split_at_folds(xv, min_run=6):
    """Index runs on which x is strictly monotone (front arcs between folds)."""
    dx = np.diff(xv)
    sgn = np.sign(dx)
    runs = []
    start = 0
    for i in range(1, len(dx)):
        if sgn[i] != 0 and sgn[i - 1] != 0 and sgn[i] != sgn[i - 1]:
            runs.append((start, i + 1))
            start = i
    runs.append((start, len(xv)))
    return [(a, b) for a, b in runs if b - a >= min_run]


def front_envelope_arcs(model, z_offset_fn, points, params, chart=0,
                        axis_fn=None):
    """Outer-envelope decomposition of a front along a graph-type Z.

    z_offset_fn(points) -> |offset from Z|.  The front splits at folds of
    x(alpha) into monotone arcs; at every station the boundary is the arc
    with the largest offset.  Scan stations are the union of the arcs' own
    x-samples (adaptive wherever the arcs are), and the switch abscissas
    (corners) are refined by bisection on the interpolated offset
    difference.  Returns kept pieces [(index_range, x_lo, x_hi)] and the
    corner abscissas.
    """
    xv = points[:, 0] if axis_fn is None else np.asarray(axis_fn(points),
                                                         dtype=float)
    off = np.asarray(z_offset_fn(points), dtype=float)
    arcs = _split_at_folds(xv)
    if not arcs:
        return [], []

    interps = []
    for (a, b) in arcs:
        xa, oa = xv[a:b], off[a:b]
        order = np.argsort(xa)
        xa, oa = xa[order], oa[order]
        xa, iu = np.unique(xa, return_index=True)
        interps.append((xa, oa[iu]))

    xs = np.unique(xv)
    vals = np.full((len(arcs), len(xs)), -np.inf)
    for k, (xa, oa) in enumerate(interps):
        if len(xa) < 2:
            continue
        inside = (xs >= xa[0]) & (xs <= xa[-1])
        vals[k, inside] = np.interp(xs[inside], xa, oa)
    winner = np.argmax(vals, axis=0)
    winner[~np.isfinite(vals.max(axis=0))] = -1

    def off_of(k, x):
        xa, oa = interps[k]
        return float(np.interp(x, xa, oa))

    # winner runs
    runs = []
    i, n = 0, len(xs)
    while i < n:
        k = winner[i]
        j = i
        while j + 1 < n and winner[j + 1] == k:
            j += 1
        if k >= 0:
            runs.append([int(k), xs[i], xs[j]])
        i = j + 1

    # refine the corner between consecutive runs and snap interval ends
    corners_x = []
    for r0, r1 in zip(runs[:-1], runs[1:]):
        k0, k1 = r0[0], r1[0]
        lo_x, hi_x = r0[2], r1[1]

        def f(x):
            return off_of(k0, x) - off_of(k1, x)

        flo, fhi = f(lo_x), f(hi_x)
        if flo * fhi < 0:
            for _ in range(60):
                mid = 0.5 * (lo_x + hi_x)
                fm = f(mid)
                if flo * fm <= 0:
                    hi_x = mid
                else:
                    lo_x, flo = mid, fm
        xc = 0.5 * (lo_x + hi_x)
        corners_x.append(xc)
        r0[2] = xc
        r1[1] = xc
    kept = [(arcs[k], x_lo, x_hi) for k, x_lo, x_hi in runs]
    return kept, corners_x
def foliation_side_integral(model, curve, params, side, eps, z_offset_fn,
                            chart=0, ds_frac=1e-3, x_window=None,
                            batch_decades=True, axis_fn=None):
    """Plane-convention integral of k_g over the valid eps-boundary, one side.

    Uses the level-curve identity k_g dsigma = -d/ds(w) dalpha on each kept
    front arc (w the g-norm of the alpha-velocity of the normal
    exponential); arcs and their exact x-intervals come from the
    outer-envelope decomposition.  Returns (integral, det_side, corners).
    """
    params = np.asarray(sorted(params), dtype=float)
    ds = ds_frac * eps
    if batch_decades:
        mags = np.abs(params)
        edges = np.geomspace(max(mags.min() * 0.99, 1e-15), mags.max() * 1.01,
                             8)
        groups = [np.sort(params[(mags >= lo) & (mags < hi)])
                  for lo, hi in zip(edges[:-1], edges[1:])]
        groups = [g for g in groups if len(g) >= 2]
    else:
        groups = [params]
    P0l, Pml, Ppl, prml = [], [], [], []
    for g in groups:
        launch = launch_normal_to_curve(model, curve, g, side=side,
                                        chart=chart)
        fam = flow_family(model, launch.q0, launch.p0, eps + 2 * ds,
                          rtol=1e-11, chart=chart)
        P0l.append(fam.positions(eps))
        Pml.append(fam.positions(eps - ds))
        Ppl.append(fam.positions(eps + ds))
        prml.append(launch.params)
    P0 = np.vstack(P0l)
    Pm = np.vstack(Pml)
    Pp = np.vstack(Ppl)
    prm = np.concatenate(prml)
    order = np.argsort(prm)
    P0, Pm, Pp, prm = P0[order], Pm[order], Pp[order], prm[order]

    det_far = 0.5 * (float(model.det_frame(P0[0], chart))
                     + float(model.det_frame(P0[-1], chart)))
    axis_all = P0[:, 0] if axis_fn is None else np.asarray(axis_fn(P0),
                                                           dtype=float)
    kept, corners_x = front_envelope_arcs(model, z_offset_fn, P0, prm,
                                          chart=chart, axis_fn=axis_fn)
    total = 0.0
    for (a, b), xlo, xhi in kept:
        if x_window is not None:
            xlo = max(xlo, x_window[0])
            xhi = min(xhi, x_window[1])
        if xhi <= xlo:
            continue
        idx = np.arange(a, b)
        if len(idx) < 4:
            continue
        pr = prm[idx]

        def w_of(P):
            dq = np.gradient(P[idx], pr, axis=0)
            u = frame_components(model, P[idx], dq, chart)
            return np.linalg.norm(u, axis=1)

        dws = (w_of(Pp) - w_of(Pm)) / (2 * ds)
        # integrate d_s w over the alpha-subinterval whose axis-image is
        # [xlo, xhi]; the arc is axis-monotone so the cut is by interpolation
        xa = axis_all[idx]
        inc = xa[-1] >= xa[0]
        x_sorted = xa if inc else xa[::-1]
        a_sorted = pr if inc else pr[::-1]
        d_sorted = dws if inc else dws[::-1]
        alpha_lo = np.interp(xlo, x_sorted, a_sorted)
        alpha_hi = np.interp(xhi, x_sorted, a_sorted)
        a0, a1 = min(alpha_lo, alpha_hi), max(alpha_lo, alpha_hi)
        inside = (pr > a0) & (pr < a1)
        if inside.sum() >= 2:
            piece = float(np.trapezoid(dws[inside], pr[inside]))
            # end corrections to the exact cut parameters
            i0 = int(np.argmax(inside))
            i1 = len(inside) - 1 - int(np.argmax(inside[::-1]))
            d0 = float(np.interp(a0, pr, dws))
            d1 = float(np.interp(a1, pr, dws))
            piece += 0.5 * (d0 + dws[i0]) * (pr[i0] - a0)
            piece += 0.5 * (d1 + dws[i1]) * (a1 - pr[i1])
        elif inside.sum() >= 0 and a1 > a0:
            d0 = float(np.interp(a0, pr, dws))
            d1 = float(np.interp(a1, pr, dws))
            piece = 0.5 * (d0 + d1) * (a1 - a0)
        else:
            continue
        total += piece
    return -total, int(np.sign(det_far)), corners_x


def boundary_offset_foliation(model, curve, eps, params, chart=0,
                              z_offset_fn=None, x_window=None, axis_fn=None):
    """Two-sided boundary k_g difference at level eps (the offset quantity).

    Computes each side's plane-convention k_g integral over the valid
    eps-boundary via the foliation identity with exact envelope arcs, and
    subtracts.  axis_fn defaults to the projection onto the curve's mean
    tangent direction (the along-Z coordinate).
    """
    lo_s, hi_s = getattr(curve, "s_range", (-1, 1))
    if z_offset_fn is None:
        poly = curve(np.linspace(lo_s, hi_s, 4000))

        def z_offset_fn(pts):
            from .loci import point_polyline_distance
            return point_polyline_distance(pts, poly)

    if axis_fn is None:
        span = curve(hi_s) - curve(lo_s)
        that = span / (np.linalg.norm(span) + 1e-300)

        def axis_fn(pts):
            return pts @ that

    sides = {}
    corners = {}
    for side in (1, -1):
        try:
            val, det_side, cx = foliation_side_integral(
                model, curve, params, side, eps, z_offset_fn, chart=chart,
                x_window=x_window, axis_fn=axis_fn)
        except ArsurfError:
            continue
        sides[det_side] = val
        corners[det_side] = cx
    if len(sides) < 2:
        return {"offset": 0.0, "plus": sides.get(1, 0.0),
                "minus": sides.get(-1, 0.0), "single_sided": True,
                "corners": corners}
    return {"offset": sides[1] - sides[-1], "plus": sides[1],
            "minus": sides[-1], "single_sided": False, "corners": corners}
