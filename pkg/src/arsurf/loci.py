"""Singular loci: fronts, cut loci (Maxwell points), conjugate loci,
distance fields, and the tangency-point asymptotics of the distance.

Maxwell points are equal-time double points of the exponential map, found by
sweeping fronts on a time grid, intersecting front segments, and refining
each crossing by a quasi-Newton solve on the two launch parameters at fixed
time.  Conjugate points are sign changes of the 2x2 Jacobian of the
exponential map (finite differences in the launch parameter, flow velocity in
time), refined by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .models import ArsurfError, Point2, as_xy, frame_components, g_norm
from .geodesics import (Front, LaunchSet, exp_map, flow, flow_family,
                        grushin_exact, hamiltonian, launch_circle,
                        launch_normal_to_curve, launch_singular)

TOL_MAXWELL = 1e-6
SEP_COVECTOR = 1e-2


class LociError(ArsurfError):
    pass


@dataclass(frozen=True)
class MaxwellPoint:
    location: Point2
    time: float
    generators: tuple   # ((branch, param), (branch, param))
    residual: float = 0.0


@dataclass(frozen=True)
class ConjugatePoint:
    location: Point2
    time: float
    param: float
    branch: int = 0


# ---------------------------------------------------------------------------
# polyline geometry
# ---------------------------------------------------------------------------

def segment_intersections(pa0, pa1, pb0, pb1, eps=1e-14):
    """Pairwise proper intersections of segment families A x B.

    All inputs (n, 2) / (m, 2).  Returns (ia, ib, u, v) with intersection at
    pa0 + u * (pa1 - pa0), u, v in (0, 1).
    """
    da = pa1 - pa0
    db = pb1 - pb0
    # solve pa0 + u da = pb0 + v db
    denom = da[:, None, 0] * db[None, :, 1] - da[:, None, 1] * db[None, :, 0]
    dp = pb0[None, :, :] - pa0[:, None, :]
    u_num = dp[..., 0] * db[None, :, 1] - dp[..., 1] * db[None, :, 0]
    v_num = dp[..., 0] * da[:, None, 1] - dp[..., 1] * da[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = u_num / denom
        v = v_num / denom
    ok = (np.abs(denom) > eps) & (u > 0) & (u < 1) & (v > 0) & (v < 1)
    ia, ib = np.nonzero(ok)
    return ia, ib, u[ia, ib], v[ia, ib]


def polyline_self_intersections(pts, min_gap=2):
    """Self-intersections of an open polyline; (i, j, u, v, point) records."""
    n = len(pts) - 1
    if n < 3:
        return []
    pa0, pa1 = pts[:-1], pts[1:]
    ia, ib, u, v = segment_intersections(pa0, pa1, pa0, pa1)
    out = []
    for k in range(len(ia)):
        i, j = int(ia[k]), int(ib[k])
        if j - i < min_gap:
            continue
        if i > j:
            continue
        p = pa0[i] + u[k] * (pa1[i] - pa0[i])
        out.append((i, j, float(u[k]), float(v[k]), p))
    return out


def clip_polyline_loops(pts, min_gap=2):
    """Remove swallowtail loops; returns (clipped points, corner points)."""
    pts = np.asarray(pts, dtype=float)
    corners = []
    guard = 0
    while guard < 16:
        guard += 1
        inter = polyline_self_intersections(pts, min_gap=min_gap)
        if not inter:
            break
        # remove the innermost loop first (smallest j - i)
        i, j, u, v, p = min(inter, key=lambda r: r[1] - r[0])
        pts = np.vstack([pts[:i + 1], p[None, :], pts[j + 1:]])
        corners.append(p)
    return pts, corners


def point_polyline_distance(points, poly):
    """Euclidean distance from each point to a polyline (vectorized)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = poly[:-1], poly[1:]
    ab = b - a
    denom = np.sum(ab * ab, axis=1)
    denom[denom == 0] = 1.0
    out = np.empty(len(points))
    chunk = max(1, int(2e6 / max(len(a), 1)))
    for lo in range(0, len(points), chunk):
        pts = points[lo:lo + chunk]
        ap = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pki,ki->pk", ap, ab) / denom[None, :], 0.0, 1.0)
        proj = a[None, :, :] + t[..., None] * ab[None, :, :]
        d = np.linalg.norm(pts[:, None, :] - proj, axis=2)
        out[lo:lo + chunk] = d.min(axis=1)
    return out


# ---------------------------------------------------------------------------
# spheres / fronts
# ---------------------------------------------------------------------------

def sphere(model, q0, r, n_samples=256, a_max=None, chart=None):
    """Raw front at distance r with self-intersections marked as corners.

    For a Riemannian center the launch set is the covector circle; for a
    singular center the two covector lines (sign = +-1) are sampled with
    |a| <= a_max and merged.
    """
    if r <= 0:
        raise LociError("sphere radius must be positive")
    det = float(model.det_frame(q0, chart))
    if abs(det) > 1e-10:
        launch = launch_circle(model, q0, n=n_samples, chart=chart)
        fr = exp_map(model, launch, r)
        pts = np.vstack([fr.points, fr.points[:1]])
        _, corners = clip_polyline_loops(pts)
        fr.corners = list(corners)
        return fr
    if a_max is None:
        a_max = 4.0 * np.pi / r
    a_vals = np.linspace(-a_max, a_max, n_samples // 2)
    fronts = []
    for sign in (1, -1):
        launch = launch_singular(model, q0, a_vals, sign=sign, chart=chart)
        fronts.append(exp_map(model, launch, r))
    pts = np.vstack([fronts[0].points, fronts[1].points[::-1]])
    params = np.concatenate([fronts[0].params, fronts[1].params[::-1]])
    cov = np.vstack([fronts[0].covectors, fronts[1].covectors[::-1]])
    charts = np.concatenate([fronts[0].charts, fronts[1].charts[::-1]])
    front = Front(float(r), params, pts, cov, charts, closed=True)
    loop_pts = np.vstack([pts, pts[:1]])
    _, corners = clip_polyline_loops(loop_pts)
    front.corners = list(corners)
    return front


# ---------------------------------------------------------------------------
# Maxwell points (cut locus detection)
# ---------------------------------------------------------------------------

class _GeodesicCache:
    """Flow-on-demand evaluation gamma(s, t) for one launch branch."""

    def __init__(self, model, launch, t_max, rtol=1e-10, refine_rtol=1e-9):
        self.model = model
        self.launch = launch
        self.rtol = rtol
        self.refine_rtol = refine_rtol
        self.t_max = t_max
        self._cache = {}
        if model.n_charts == 1:
            fam = flow_family(model, launch.q0, launch.p0, t_max, rtol=rtol,
                              chart=launch.chart)
            if not fam.success:
                raise LociError(f"family flow failed: {fam.message}")
            self.family = fam
        else:
            self.family = None
            self._trajs = [flow(model, launch.q0[i], launch.p0[i], t_max,
                                rtol=rtol, chart=launch.chart)
                           for i in range(len(launch))]

    def front_points(self, t):
        if self.family is not None:
            return self.family.positions(t)
        return np.array([tr.state(t)[1] for tr in self._trajs])

    def at(self, s, t):
        key = round(float(s), 14)
        traj = self._cache.get(key)
        if traj is None:
            q0, p0 = self.launch.at(s)
            traj = flow(self.model, q0, p0, self.t_max, rtol=self.refine_rtol,
                        chart=self.launch.chart)
            self._cache[key] = traj
        return traj.state(min(t, traj.t_end))[1]


def _refine_crossing(caches, b1, s1, b2, s2, t, ds1, ds2, tol=TOL_MAXWELL,
                     max_iter=16):
    """Quasi-Newton solve of gamma_{b1}(s1, t) = gamma_{b2}(s2, t)."""
    c1, c2 = caches[b1], caches[b2]

    def resid(s1_, s2_):
        return c1.at(s1_, t) - c2.at(s2_, t)

    try:
        r = resid(s1, s2)
        d1 = (c1.at(s1 + ds1, t) - c1.at(s1 - ds1, t)) / (2 * ds1)
        d2 = (c2.at(s2 + ds2, t) - c2.at(s2 - ds2, t)) / (2 * ds2)
    except ArsurfError:
        return None
    jac = np.column_stack([d1, -d2])
    stalls = 0
    for _ in range(max_iter):
        rnorm = np.linalg.norm(r)
        if rnorm < tol * 1e-2:
            break
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        lim = 4.0 * max(ds1, ds2)
        step = np.clip(step, -lim, lim)
        s1n, s2n = s1 + step[0], s2 + step[1]
        try:
            rn = resid(s1n, s2n)
        except ArsurfError:
            return None
        if np.linalg.norm(rn) > 0.9 * rnorm:
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
        denom = float(step @ step)
        if denom > 0:  # Broyden update
            jac = jac + np.outer(rn - r - jac @ step, step) / denom
        s1, s2, r = s1n, s2n, rn
    if np.linalg.norm(r) > tol:
        return None
    pt = 0.5 * (c1.at(s1, t) + c2.at(s2, t))
    return s1, s2, pt, float(np.linalg.norm(r))


def _covector_separation(l1, s1, l2, s2):
    q1, p1 = l1.at(s1)
    q2, p2 = l2.at(s2)
    if np.linalg.norm(q1 - q2) > 1e-9:
        return np.inf  # different base points: always distinct geodesics
    n1, n2 = np.linalg.norm(p1), np.linalg.norm(p2)
    cosang = float(np.dot(p1, p2) / (n1 * n2))
    return float(np.hypot(np.arccos(np.clip(cosang, -1, 1)),
                          abs(n1 - n2) / max(n1, n2)))


def _raw_crossings(caches, launches, t, sep_covector):
    """Segment crossings of all front pairs at time t, clustered per pair."""
    fronts = [c.front_points(t) for c in caches]
    raw = []
    for b1 in range(len(caches)):
        for b2 in range(b1, len(caches)):
            p1, p2 = fronts[b1], fronts[b2]
            prm1, prm2 = launches[b1].params, launches[b2].params
            ia, ib, u, v = segment_intersections(p1[:-1], p1[1:],
                                                 p2[:-1], p2[1:])
            n_seg = len(p1) - 1
            closed = launches[b1].meta.get("closed", False)
            for k in range(len(ia)):
                i, j = int(ia[k]), int(ib[k])
                if b1 == b2:
                    if j <= i + 1:
                        continue
                    if closed and i == 0 and j == n_seg - 1:
                        continue
                s1 = prm1[i] + u[k] * (prm1[i + 1] - prm1[i])
                s2 = prm2[j] + v[k] * (prm2[j + 1] - prm2[j])
                if _covector_separation(launches[b1], s1,
                                        launches[b2], s2) < sep_covector:
                    continue
                pt = p1[i] + u[k] * (p1[i + 1] - p1[i])
                raw.append((b1, float(s1), b2, float(s2), pt))
    # cluster crossings that refer to the same double point
    scale = [8.0 * (np.median(np.abs(np.diff(l.params))) + 1e-12)
             for l in launches]
    clustered = []
    for rec in sorted(raw, key=lambda r: (r[0], r[2], r[1], r[3])):
        b1, s1, b2, s2, pt = rec
        for cl in clustered:
            if cl[0] == b1 and cl[2] == b2 and \
               abs(cl[1] - s1) < scale[b1] and abs(cl[3] - s2) < scale[b2]:
                break
        else:
            clustered.append(rec)
    return clustered


def maxwell_points(model, launches, t_max, n_t=48, t_min=None,
                   sep_covector=SEP_COVECTOR, dense=False, rtol=1e-10,
                   refine_rtol=1e-9, refine_first=True, tol=TOL_MAXWELL):
    """Equal-time double points of the exponential map over launch branches.

    launches: list of LaunchSet (branches).  Sweeps fronts on a time grid,
    intersects front segments, clusters the crossings, and reports either the
    first Maxwell point of every crossing track (default) or every refined
    crossing (dense=True).
    """
    caches = [_GeodesicCache(model, l, t_max, rtol=rtol,
                             refine_rtol=refine_rtol) for l in launches]
    if t_min is None:
        t_min = t_max / n_t
    t_grid = np.linspace(t_min, t_max, n_t)
    spacing = [np.median(np.abs(np.diff(l.params))) + 1e-12 for l in launches]

    def refine(rec, t):
        b1, s1, b2, s2, _pt = rec
        ds1 = 0.25 * spacing[b1]
        ds2 = 0.25 * spacing[b2]
        ref = _refine_crossing(caches, b1, s1, b2, s2, t, ds1, ds2, tol=tol)
        if ref is None:
            return None
        s1r, s2r, pt, res = ref
        if _covector_separation(launches[b1], s1r,
                                launches[b2], s2r) < sep_covector:
            return None
        return (b1, s1r, b2, s2r, pt, res)

    if dense:
        out = []
        for t in t_grid:
            for rec in _raw_crossings(caches, launches, t, sep_covector):
                ref = refine(rec, t)
                if ref is not None:
                    out.append(MaxwellPoint(
                        Point2(ref[4][0], ref[4][1]), float(t),
                        ((ref[0], ref[1]), (ref[2], ref[3])), ref[5]))
        out.sort(key=lambda m: (m.time, m.generators))
        return out

    # track raw clusters through time; keep the first record per track
    tracks = []
    for ti, t in enumerate(t_grid):
        for rec in _raw_crossings(caches, launches, t, sep_covector):
            b1, s1, b2, s2, pt = rec
            placed = False
            for tr in tracks:
                if tr["b1"] == b1 and tr["b2"] == b2 and \
                   abs(tr["s1"] - s1) < 10 * spacing[b1] and \
                   abs(tr["s2"] - s2) < 10 * spacing[b2]:
                    tr.update(s1=s1, s2=s2)
                    placed = True
                    break
            if not placed:
                tracks.append(dict(b1=b1, b2=b2, s1=s1, s2=s2,
                                   first=(t, rec), ti=ti))

    out = []
    dt = t_grid[1] - t_grid[0] if len(t_grid) > 1 else t_max
    for tr in tracks:
        t_hit, rec = tr["first"]
        ref = refine(rec, t_hit)
        if ref is None:
            continue
        b1, s1, b2, s2, pt, res = ref
        t_first = t_hit
        if refine_first:
            t_first, s1, s2, pt, res = _bisect_first_time(
                caches, launches, b1, s1, b2, s2, t_hit, dt, sep_covector,
                spacing, tol)
        out.append(MaxwellPoint(Point2(pt[0], pt[1]), float(t_first),
                                ((b1, float(s1)), (b2, float(s2))), res))
    out.sort(key=lambda m: m.time)
    return out


def _bisect_first_time(caches, launches, b1, s1, b2, s2, t_hit, dt, sep,
                       spacing, tol, n_bisect=12):
    """Bisection on crossing existence between t_hit - dt and t_hit."""
    ds1 = 0.25 * spacing[b1]
    ds2 = 0.25 * spacing[b2]
    lo, hi = max(t_hit - dt, 1e-9), t_hit
    best = (t_hit, (s1, s2, caches[b1].at(s1, t_hit), 0.0))
    cur = (s1, s2)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        ref = _refine_crossing(caches, b1, cur[0], b2, cur[1], mid, ds1, ds2,
                               tol=tol)
        ok = ref is not None and _covector_separation(
            launches[b1], ref[0], launches[b2], ref[1]) >= sep
        if ok:
            hi = mid
            cur = (ref[0], ref[1])
            best = (mid, ref)
        else:
            lo = mid
    t, (s1r, s2r, pt, res) = best
    return t, s1r, s2r, pt, res


def first_meet_time(model, q1, p1, q2, p2, t_max, chart=0, n_scan=400,
                    tol=TOL_MAXWELL, rtol=1e-11):
    """First time two specific geodesics pass through the same point.

    Scans |gamma_1(t) - gamma_2(t)|^2 on a fine grid and polishes local
    minima with Brent; returns (t, point) or None.
    """
    fam = flow_family(model, np.array([as_xy(q1), as_xy(q2)]),
                      np.array([np.asarray(p1, float), np.asarray(p2, float)]),
                      t_max, rtol=rtol, chart=chart)
    ts = np.linspace(t_max / n_scan, t_max, n_scan)
    d2 = np.array([np.sum((fam.positions(t)[0] - fam.positions(t)[1]) ** 2)
                   for t in ts])

    def f(t):
        p = fam.positions(t)
        return float(np.sum((p[0] - p[1]) ** 2))

    from scipy.optimize import minimize_scalar
    for i in range(1, len(ts) - 1):
        if d2[i] <= d2[i - 1] and d2[i] <= d2[i + 1]:
            res = minimize_scalar(f, bracket=None,
                                  bounds=(ts[i - 1], ts[i + 1]),
                                  method="bounded",
                                  options={"xatol": 1e-14})
            if res.fun < tol * tol:
                t_star = float(res.x)
                return t_star, fam.positions(t_star).mean(axis=0)
    return None


def cut_locus_from_point(model, q0, t_max, n_samples=160, a_range=None,
                         angles=None, chart=None, dense=False, n_t=48,
                         **kw):
    """Maxwell points of the geodesic family from a point.

    Singular base points use the two-line covector parameterization with
    a in a_range; Riemannian base points use the covector circle.
    """
    det = float(model.det_frame(q0, chart))
    if abs(det) < 1e-10:
        if a_range is None:
            a_range = (0.2, 40.0)
        lo, hi = a_range
        vals = np.geomspace(lo, hi, n_samples // 2)
        a_vals = np.unique(np.concatenate([-vals[::-1], vals]))
        branches = [launch_singular(model, q0, a_vals, sign=s, chart=chart)
                    for s in (1, -1)]
    else:
        branches = [launch_circle(model, q0, n=n_samples, angles=angles,
                                  chart=chart)]
    return maxwell_points(model, branches, t_max, dense=dense, n_t=n_t, **kw)


def cut_locus_from_curve(model, curve, params, side, t_max, chart=0,
                         dense=False, n_t=48, **kw):
    """Maxwell points of the normal family from a curve, one side of Z."""
    launch = launch_normal_to_curve(model, curve, params, side=side,
                                    chart=chart)
    return maxwell_points(model, [launch], t_max, dense=dense, n_t=n_t, **kw)


# ---------------------------------------------------------------------------
# conjugate points
# ---------------------------------------------------------------------------

def conjugate_locus_from_point(model, q0, t_max, params=None, n_samples=32,
                               sign=1, chart=None, delta=None, n_t=160,
                               tol_t=1e-9, noise_floor=1e-12):
    """First conjugate points: sign changes of det(d exp/d(param), velocity).

    The parameter derivative is a central difference with step delta; the
    time derivative is the Hamiltonian velocity.  Samples whose Jacobian
    stays below the noise floor are skipped.
    """
    det = float(model.det_frame(q0, chart))
    singular = abs(det) < 1e-10
    if params is None:
        params = (np.geomspace(0.5, 4.0, n_samples) if singular
                  else np.linspace(0.1, np.pi - 0.1, n_samples))
    params = np.asarray(params, dtype=float)
    if delta is None:
        delta = max(1e-4, 1e-3 * float(np.min(np.abs(np.diff(params)))
                                       if len(params) > 1 else 1e-1))

    if singular:
        launch = launch_singular(model, q0, params, sign=sign, chart=chart)
    else:
        launch = launch_circle(model, q0, angles=params, chart=chart)

    q0s, p0s = [], []
    for s in params:
        for ss in (s - delta, s, s + delta):
            qq, pp = launch.at(ss)
            q0s.append(qq)
            p0s.append(pp)
    if model.n_charts != 1:
        raise LociError("conjugate detection implemented for planar models")
    fam = flow_family(model, np.array(q0s), np.array(p0s), t_max,
                      rtol=1e-11, chart=launch.chart)
    if not fam.success:
        raise LociError(f"family flow failed: {fam.message}")

    def exp_jacobian(t):
        st = fam.states(t)
        qm = st[0::3, 0:2]
        qc = st[1::3, 0:2]
        pc = st[1::3, 2:4]
        qp = st[2::3, 0:2]
        dq_ds = (qp - qm) / (2 * delta)
        f1, f2 = model.frame(qc, launch.chart)
        h1 = np.sum(pc * f1, axis=1)
        h2 = np.sum(pc * f2, axis=1)
        vel = h1[:, None] * f1 + h2[:, None] * f2
        return dq_ds[:, 0] * vel[:, 1] - dq_ds[:, 1] * vel[:, 0]

    ts = np.linspace(t_max / n_t, t_max, n_t)
    jt = np.empty((len(ts), len(params)))
    for i, t in enumerate(ts):
        jt[i] = exp_jacobian(t)

    out = []
    for k in range(len(params)):
        col = jt[:, k]
        if np.max(np.abs(col)) < noise_floor:
            continue
        idx = np.nonzero(np.sign(col[:-1]) * np.sign(col[1:]) < 0)[0]
        if idx.size == 0:
            continue
        i = int(idx[0])

        def jk(t, k=k):
            return float(exp_jacobian(t)[k])

        t_conj = brentq(jk, ts[i], ts[i + 1], xtol=tol_t)
        st = fam.states(t_conj)
        qc = st[3 * k + 1, 0:2]
        out.append(ConjugatePoint(Point2(qc[0], qc[1]), float(t_conj),
                                  float(params[k])))
    return out


# ---------------------------------------------------------------------------
# distance fields by front propagation
# ---------------------------------------------------------------------------

@dataclass
class DistanceField:
    """First-arrival times of arclength fronts on a grid (= distances)."""
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (nx, ny), inf where unreached
    chart: int = 0

    def interp(self, pts):
        from scipy.interpolate import RegularGridInterpolator
        f = RegularGridInterpolator((self.xs, self.ys), self.values,
                                    bounds_error=False, fill_value=np.inf)
        return f(np.atleast_2d(np.asarray(pts, dtype=float)))

    @property
    def cell(self):
        return float(self.xs[1] - self.xs[0])


def _rasterize_arrivals(model, chart, samples_q, samples_t, xs, ys, values):
    """Scatter min over (arrival time + local g-correction) onto the grid."""
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    ix = np.round((samples_q[:, 0] - xs[0]) / hx).astype(int)
    iy = np.round((samples_q[:, 1] - ys[0]) / hy).astype(int)
    ok = (ix >= 0) & (ix < len(xs)) & (iy >= 0) & (iy < len(ys))
    ix, iy = ix[ok], iy[ok]
    if ix.size == 0:
        return
    q = samples_q[ok]
    t = samples_t[ok]
    node = np.stack([xs[ix], ys[iy]], axis=1)
    dvec = node - q
    # local metric correction: g-length of the straight hop to the node
    corr = np.zeros(len(q))
    nz = np.linalg.norm(dvec, axis=1) > 0
    if np.any(nz):
        u = frame_components(model, q[nz], dvec[nz], chart)
        corr[nz] = np.linalg.norm(u, axis=1)
    cand = t + corr
    np.minimum.at(values, (ix, iy), cand)


def distance_field(model, source, box, grid_n, t_max, n_launch=600,
                   chart=0, rtol=1e-9, dt_factor=0.5, sides=(1, -1)):
    """Distance from a point or curve source by front propagation.

    source: Point2 / (x, y) for point sources, a SingularCurve, or a tuple
    (ParamCurve, (lo, hi)).
    """
    (x0, x1), (y0, y1) = box
    xs = np.linspace(x0, x1, grid_n)
    ys = np.linspace(y0, y1, grid_n)
    values = np.full((grid_n, grid_n), np.inf)

    launches = []
    from .classify import SingularCurve
    if isinstance(source, SingularCurve):
        curve = source.as_param_curve()
        lo, hi = curve.s_range
        prm = np.linspace(lo, hi, n_launch)
        for side in sides:
            launches.append(launch_normal_to_curve(model, curve, prm,
                                                   side=side, chart=chart))
    elif isinstance(source, tuple) and len(source) == 2 and \
            not np.isscalar(source[0]):
        curve, (lo, hi) = source
        prm = np.linspace(lo, hi, n_launch)
        for side in sides:
            launches.append(launch_normal_to_curve(model, curve, prm,
                                                   side=side, chart=chart))
    else:
        q0 = as_xy(source)
        det = float(model.det_frame(q0, chart))
        if abs(det) < 1e-10:
            amax = 16 * np.pi / max(t_max, 1e-6)
            vals = np.linspace(-amax, amax, n_launch // 2)
            for sign in (1, -1):
                launches.append(launch_singular(model, q0, vals, sign=sign,
                                                chart=chart))
        else:
            launches.append(launch_circle(model, q0, n=n_launch, chart=chart))
        ixc = int(round((q0[0] - xs[0]) / (xs[1] - xs[0])))
        iyc = int(round((q0[1] - ys[0]) / (ys[1] - ys[0])))
        if 0 <= ixc < grid_n and 0 <= iyc < grid_n:
            values[ixc, iyc] = 0.0

    # euclidean speed bound on the box fixes the time substep
    gx, gy = np.meshgrid(np.linspace(x0, x1, 24), np.linspace(y0, y1, 24),
                         indexing="ij")
    f1, f2 = model.frame(np.stack([gx, gy], axis=-1), chart)
    vmax = float(np.sqrt(np.sum(f1 * f1, -1) + np.sum(f2 * f2, -1)).max())
    cell = min(xs[1] - xs[0], ys[1] - ys[0])
    dt = dt_factor * cell / max(vmax, 1e-9)
    ts = np.arange(dt, t_max + dt, dt)

    for launch in launches:
        if model.n_charts == 1:
            fam = flow_family(model, launch.q0, launch.p0, t_max, rtol=rtol,
                              chart=launch.chart)
            for t in ts:
                q = fam.positions(min(t, fam.t_end))
                _rasterize_arrivals(model, chart, q, np.full(len(q), t),
                                    xs, ys, values)
        else:
            for i in range(len(launch)):
                traj = flow(model, launch.q0[i], launch.p0[i], t_max,
                            rtol=rtol, chart=launch.chart)
                tcs = ts[ts <= traj.t_end + 1e-12]
                charts_i, qs, _ = traj.sample(tcs)
                keep = charts_i == chart
                _rasterize_arrivals(model, chart, qs[keep], tcs[keep],
                                    xs, ys, values)
    return DistanceField(xs, ys, values, chart)


# ---------------------------------------------------------------------------
# tangency asymptotics
# ---------------------------------------------------------------------------

def fit_loglog(x, y):
    """Least-squares slope of log y against log x; returns (slope, r2)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    a = np.vstack([lx, np.ones_like(lx)]).T
    coef, _res, *_ = np.linalg.lstsq(a, ly, rcond=None)
    pred = a @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2)) + 1e-300
    return float(coef[0]), 1.0 - ss_res / ss_tot


def eps_front_from_curve(model, curve, params, side, eps, chart=0,
                         rtol=1e-10):
    """Clipped time-eps front of the normal family from a curve."""
    launch = launch_normal_to_curve(model, curve, params, side=side,
                                    chart=chart)
    fr = exp_map(model, launch, eps, rtol=rtol)
    pts, corners = clip_polyline_loops(fr.points)
    return pts, corners, fr


def _mutual_clip(arc_a, arc_b):
    """Clip two arcs at their earliest mutual crossing (walked from the
    start of each); returns (kept_a, kept_b, corner or None)."""
    ia, ib, u, v = segment_intersections(arc_a[:-1], arc_a[1:],
                                         arc_b[:-1], arc_b[1:])
    if len(ia) == 0:
        return arc_a, arc_b, None
    score = np.maximum(ia, ib)
    k = int(np.argmin(score))
    i, j = int(ia[k]), int(ib[k])
    corner = arc_a[i] + u[k] * (arc_a[i + 1] - arc_a[i])
    kept_a = np.vstack([arc_a[:i + 1], corner[None, :]])
    kept_b = np.vstack([arc_b[:j + 1], corner[None, :]])
    return kept_a, kept_b, corner


def curve_front_boundary(model, curve, s_split, eps, side, params, chart=0,
                         rtol=1e-10):
    """The valid part of the time-eps normal front from a curve with a
    tangency point at parameter s_split.

    The front is split at the tangency into two arcs, each walked from its
    far end toward the tangency; post-cut oscillating pieces (launches too
    close to the tangency lose optimality before eps) are removed by
    clipping both arcs at their earliest mutual crossing, which is the
    corner of the eps-neighborhood boundary.  The side's determinant sign is
    taken at the far ends, where the front is clean.
    """
    params = np.asarray(sorted(params), dtype=float)
    launch = launch_normal_to_curve(model, curve, params, side=side,
                                    chart=chart)
    fr = exp_map(model, launch, eps, rtol=rtol)
    prm = fr.params
    pts = fr.points
    mask_l = prm < s_split
    arc_l = pts[mask_l]            # far-left -> tangency
    arc_r = pts[~mask_l][::-1]     # far-right -> tangency
    if len(arc_l) < 2 or len(arc_r) < 2:
        det_far = float(model.det_frame(pts[0], chart))
        return {"points": pts, "corner": None,
                "det_side": int(np.sign(det_far))}
    det_far = 0.5 * (float(model.det_frame(arc_l[0], chart))
                     + float(model.det_frame(arc_r[0], chart)))
    kept_l, kept_r, corner = _mutual_clip(arc_l, arc_r)
    boundary = np.vstack([kept_l, kept_r[::-1][1:] if corner is not None
                          else kept_r[::-1]])
    return {"points": boundary, "corner": corner,
            "det_side": int(np.sign(det_far)),
            "arc_left": kept_l, "arc_right": kept_r}


class CurveDistance:
    """First-arrival distance d(q, curve) over the normal family, one side.

    A coarse sweep over stored snapshots picks candidate trajectories; each
    candidate's closest approach is polished on the dense output, and a
    local sub-family around the best launch parameter tightens the miss
    distance.  Misses are converted to arrival bounds with the local metric.
    """

    def __init__(self, model, curve, params, side, t_max, chart=0,
                 rtol=1e-10, n_snap=240):
        self.model = model
        self.curve = curve
        self.side = side
        self.chart = chart
        self.rtol = rtol
        self.t_max = t_max
        self.launch = launch_normal_to_curve(model, curve, params, side=side,
                                             chart=chart)
        self.fam = flow_family(model, self.launch.q0, self.launch.p0, t_max,
                               rtol=rtol, chart=chart)
        if not self.fam.success:
            raise LociError(f"family flow failed: {self.fam.message}")
        self.ts = np.linspace(t_max / n_snap, t_max, n_snap)
        self.snaps = np.stack([self.fam.positions(t) for t in self.ts])

    def _bound_min(self, fam, k, q, n_fine=1200):
        """min over t of [t + g-corrected miss] for one trajectory."""
        from scipy.optimize import minimize_scalar
        ts = np.linspace(self.t_max / n_fine, self.t_max, n_fine)
        states = fam.sol(ts).reshape(-1, 4, len(ts))[k] if False else None
        # dense evaluation through the OdeSolution (vectorized in t)
        vals = fam.sol(ts)  # (4N, nt)
        qx = vals[4 * k, :]
        qy = vals[4 * k + 1, :]
        pts = np.stack([qx, qy], axis=1)
        miss = q[None, :] - pts
        u = frame_components(self.model, pts, miss, self.chart)
        bound = ts + np.linalg.norm(u, axis=1)
        i = int(np.argmin(bound))

        def f(t):
            s = fam.sol(float(t))
            p = np.array([s[4 * k], s[4 * k + 1]])
            uu = frame_components(self.model, p, q - p, self.chart)
            return float(t + np.linalg.norm(uu))

        lo = ts[max(i - 1, 0)]
        hi = ts[min(i + 1, len(ts) - 1)]
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return min(float(res.fun), float(bound[i]))

    def dist(self, q, n_candidates=8, n_local=36):
        q = np.asarray(q, dtype=float)
        d2 = np.sum((self.snaps - q[None, None, :]) ** 2, axis=2)
        # snapshot-level arrival bound: time + metric-corrected miss
        nt, nb = d2.shape
        flat = self.snaps.reshape(-1, 2)
        miss = q[None, :] - flat
        u = frame_components(self.model, flat, miss, self.chart)
        gmiss = np.linalg.norm(u, axis=1).reshape(nt, nb)
        score = (self.ts[:, None] + gmiss).min(axis=0)
        cand = np.argsort(score)[:n_candidates]
        best = np.inf
        best_beta = None
        for k in cand:
            val = self._bound_min(self.fam, int(k), q)
            if val < best:
                best = val
                best_beta = int(k)
        if best_beta is not None and n_local:
            fam, nsub = self._local_family(best_beta, n_local)
            if fam is not None:
                for kk in range(nsub):
                    best = min(best, self._bound_min(fam, kk, q, n_fine=400))
        # exact passage: Newton on gamma_alpha(t) = q removes the miss term
        exact = self._newton_hits(q, cand, best)
        return float(min(best, exact)) if exact is not None else float(best)

    def _local_family(self, k, n_local):
        cache = getattr(self, "_local_cache", None)
        if cache is None:
            cache = self._local_cache = {}
        if k in cache:
            return cache[k]
        prm = self.launch.params
        lo = prm[max(k - 1, 0)]
        hi = prm[min(k + 1, len(prm) - 1)]
        if hi <= lo:
            cache[k] = (None, 0)
            return cache[k]
        sub = np.linspace(lo, hi, n_local)
        launch = launch_normal_to_curve(self.model, self.curve, sub,
                                        side=self.side, chart=self.chart)
        fam = flow_family(self.model, launch.q0, launch.p0, self.t_max,
                          rtol=1e-9, chart=self.chart)
        cache[k] = (fam, len(sub))
        return cache[k]

    def _traj_at(self, alpha):
        key = round(float(alpha), 14)
        traj = getattr(self, "_newton_cache", None)
        if traj is None:
            self._newton_cache = {}
        traj = self._newton_cache.get(key)
        if traj is None:
            q0, p0 = self.launch.at(alpha)
            traj = flow(self.model, q0, p0, self.t_max, rtol=1e-9,
                        chart=self.chart)
            self._newton_cache[key] = traj
        return traj

    def _newton_hits(self, q, cand, bound_hint, max_iter=14):
        prm = self.launch.params
        lo_b, hi_b = self.launch.param_bounds
        results = []
        pad = 1e-6 * (hi_b - lo_b)
        for k in cand[:4]:
            alpha = float(prm[int(k)])
            d2k = np.sum((self.snaps[:, int(k), :] - q[None, :]) ** 2, axis=1)
            t = float(self.ts[int(np.argmin(d2k))])
            converged = False
            try:
                for _ in range(max_iter):
                    da = min(max(1e-3 * abs(alpha), 1e-7),
                             0.5 * min(alpha - lo_b, hi_b - alpha) + 1e-12)
                    traj = self._traj_at(alpha)
                    _, p, _ = traj.state(t)
                    r = p - q
                    if np.linalg.norm(r) < 1e-10:
                        converged = True
                        break
                    _, pp, _ = self._traj_at(
                        min(alpha + da, hi_b)).state(t)
                    _, pm, _ = self._traj_at(
                        max(alpha - da, lo_b)).state(t)
                    dga = (pp - pm) / (2 * da)
                    _, p2, _ = traj.state(min(t + 1e-6, self.t_max))
                    dgt = (p2 - p) / 1e-6
                    try:
                        step = np.linalg.solve(np.column_stack([dga, dgt]),
                                               -r)
                    except np.linalg.LinAlgError:
                        break
                    alpha = float(np.clip(alpha + step[0], lo_b + pad,
                                          hi_b - pad))
                    t = float(np.clip(t + step[1], 1e-9, self.t_max))
            except ArsurfError:
                continue
            if converged and t > 0:
                results.append(t)
        return min(results) if results else None

def gap_at_level(cd, base_fn, normal_fn, eps, cols, h_hint,
                 rel_tol=4e-3, max_iter=18):
    """min over columns of the offset h where d(base + h n, curve) = eps.

    Secant iteration on log h against the first-arrival evaluator cd; d(h)
    is smooth and monotone in the offset.
    """
    best = np.inf
    for s in cols:
        base = np.asarray(base_fn(s), dtype=float)
        nv = np.asarray(normal_fn(s), dtype=float)

        def d_of(h):
            return cd.dist(base + h * nv)

        h0 = h_hint
        d0 = d_of(h0)
        h1 = h0 * (1.6 if d0 < eps else 1 / 1.6)
        d1 = d_of(h1)
        for _ in range(max_iter):
            if abs(d1 - eps) < rel_tol * eps:
                break
            l0, l1 = np.log(h0), np.log(h1)
            if d1 == d0:
                break
            l2 = l1 + (np.log(eps) - np.log(d1)) * (l1 - l0) / (
                np.log(d1) - np.log(d0))
            l2 = np.clip(l2, l1 - 2.0, l1 + 2.0)
            h0, d0 = h1, d1
            h1 = float(np.exp(l2))
            d1 = d_of(h1)
        best = min(best, h1)
    return float(best)


def tangency_asymptotics(model, q_tangency, eps_list, z_curve=None,
                         window=0.8, n_alpha=440, chart=0, n_cols=3):
    """Log-log slopes of the euclidean gap between M_eps^> / M_eps^< and Z.

    The gap on each side is found by solving d(base + h n, Z) = eps along a
    few transversal columns near the tangency point, with the distance
    evaluated by first arrival over the normal-geodesic family (launch
    parameters reach below the realizer scale ~ eps^2).  Side labels follow
    the frame-determinant sign of the region entered ('above' is det > 0).
    """
    eps_list = np.asarray(eps_list, dtype=float)
    if len(eps_list) < 4:
        raise LociError("need at least 4 epsilon values for a slope fit")
    qt = as_xy(q_tangency)
    if z_curve is None:
        from .classify import trace_singular_set
        curves = trace_singular_set(
            model, ((qt[0] - window, qt[0] + window),
                    (qt[1] - window, qt[1] + window)), chart=chart)
        if not curves:
            raise LociError("no singular curve near the tangency point")
        z_curve = curves[0]
    curve = z_curve.as_param_curve() if hasattr(z_curve, "as_param_curve") \
        else z_curve
    lo, hi = curve.s_range
    s_dense = np.linspace(lo, hi, 4000)
    pts_dense = curve(s_dense)
    s_t = s_dense[np.argmin(np.linalg.norm(pts_dense - qt, axis=1))]
    span = min(s_t - lo, hi - s_t)

    eps_max = float(np.max(eps_list))
    a_min = min(2e-2 * float(np.min(eps_list)) ** 2, 1e-4 * span)
    offs = np.geomspace(a_min, 0.95 * span, n_alpha // 2)
    params = np.unique(np.concatenate([s_t - offs, s_t + offs]))

    def base_fn(s):
        return curve(s)

    def normal_fn_side(side_sign):
        def normal_fn(s):
            tan = curve.tangent(s)
            n = np.array([-tan[1], tan[0]])
            n = n / np.linalg.norm(n)
            probe = curve(s) + 1e-5 * n
            d = float(model.det_frame(probe, chart))
            return n if np.sign(d) == side_sign else -n
        return normal_fn

    gaps = {1: [], -1: []}
    for side in (1, -1):
        cd = CurveDistance(model, curve, params, side=side,
                           t_max=1.25 * eps_max, chart=chart)
        pts_far = cd.fam.positions(0.5 * eps_max)
        d_ends = model.det_frame(pts_far[[0, -1]], chart)
        det_side = int(np.sign(d_ends[0] + d_ends[-1]))
        cols = s_t + np.linspace(-0.4, 0.4, n_cols) * eps_max \
            if n_cols > 1 else np.array([s_t])
        nfn = normal_fn_side(det_side)
        for eps in eps_list:
            h_hint = eps ** 2 if det_side > 0 else (eps / 2.3) ** 3
            gaps[det_side].append(gap_at_level(cd, base_fn, nfn, float(eps),
                                               cols, h_hint))
    slope_above, r2_above = fit_loglog(eps_list, gaps[1])
    slope_below, r2_below = fit_loglog(eps_list, gaps[-1])
    return {"slope_above": slope_above, "slope_below": slope_below,
            "r2_above": r2_above, "r2_below": r2_below,
            "gap_above": gaps[1], "gap_below": gaps[-1]}
