"""Hamiltonian geodesic flow and exponential maps.

Geodesics are projections of the flow of H(q,p) = ((p.F1)^2 + (p.F2)^2)/2 on
the level set H = 1/2 (arclength parameterization).  Integration uses an
embedded adaptive Runge-Kutta 5(4) pair with dense output; energy drift is
monitored, not structurally eliminated.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .models import (ArsurfError, Covector2, FrameModel, Point2, as_xy,
                     chart_of)

RTOL = 1e-10
ATOL = 1e-12
TOL_ENERGY = 1e-9


class FlowError(ArsurfError):
    pass


def n_workers():
    """Worker cap from ARSURF_THREADS (defaults to 1)."""
    try:
        return max(1, int(os.environ.get("ARSURF_THREADS", "1")))
    except ValueError:
        return 1


def hamiltonian(model, q, p, chart=None):
    """H(q, p) = ((p.F1)^2 + (p.F2)^2) / 2; frame-rotation invariant."""
    f1, f2 = model.frame(q, chart)
    p = np.asarray(p if not isinstance(p, Covector2) else p.arr, dtype=float)
    h1 = np.sum(p * f1, axis=-1)
    h2 = np.sum(p * f2, axis=-1)
    return 0.5 * (h1 * h1 + h2 * h2)


def _rhs_single(model, chart):
    fields = model._fields[chart]
    if hasattr(fields, "val_s") and hasattr(fields, "jac_s"):
        val_s, jac_s = fields.val_s, fields.jac_s

        def rhs(t, s):
            x, y, px, py = s
            (f11, f12), (f21, f22) = val_s(x, y)
            ((a11, a12), (a21, a22)), ((b11, b12), (b21, b22)) = jac_s(x, y)
            h1 = px * f11 + py * f12
            h2 = px * f21 + py * f22
            return (h1 * f11 + h2 * f21,
                    h1 * f12 + h2 * f22,
                    -(h1 * (a11 * px + a21 * py) + h2 * (b11 * px + b21 * py)),
                    -(h1 * (a12 * px + a22 * py) + h2 * (b12 * px + b22 * py)))

        return rhs

    def rhs(t, s):
        x, y = s[0], s[1]
        p = s[2:4]
        f1, f2 = model._fields[chart].val(x, y)
        j1, j2 = model._fields[chart].jac(x, y)
        h1 = p[0] * f1[0] + p[1] * f1[1]
        h2 = p[0] * f2[0] + p[1] * f2[1]
        qdot = h1 * f1 + h2 * f2
        pdot = -(h1 * (j1[0] * p[0] + j1[1] * p[1])
                 + h2 * (j2[0] * p[0] + j2[1] * p[1]))
        return (qdot[0], qdot[1], pdot[0], pdot[1])

    return rhs


def _rhs_family(model, chart, n):
    def rhs(t, s):
        st = s.reshape(n, 4)
        q, p = st[:, 0:2], st[:, 2:4]
        f1, f2 = model._fields[chart].val(q[:, 0], q[:, 1])
        j1, j2 = model._fields[chart].jac(q[:, 0], q[:, 1])
        h1 = np.sum(p * f1, axis=1)
        h2 = np.sum(p * f2, axis=1)
        qdot = h1[:, None] * f1 + h2[:, None] * f2
        pdot = -(h1[:, None] * np.einsum("nik,ni->nk", j1, p)
                 + h2[:, None] * np.einsum("nik,ni->nk", j2, p))
        return np.concatenate([qdot, pdot], axis=1).ravel()

    return rhs


@dataclass(frozen=True)
class GeodesicState:
    q: Point2
    p: Covector2
    t: float
    H: float


@dataclass
class Segment:
    t0: float
    t1: float
    chart: int
    sol: object  # scipy OdeSolution


@dataclass
class Trajectory:
    """Piecewise (per-chart) dense solution of the Hamiltonian flow."""
    model: FrameModel
    segments: list
    success: bool = True
    message: str = ""

    @property
    def t_end(self):
        return self.segments[-1].t1 if self.segments else 0.0

    def state(self, t):
        """Return (chart, q(2,), p(2,)) at time t."""
        t = float(t)
        for seg in self.segments:
            if t <= seg.t1 or seg is self.segments[-1]:
                s = seg.sol(min(max(t, seg.t0), seg.t1))
                return seg.chart, s[0:2], s[2:4]
        raise FlowError("empty trajectory")

    def positions(self, ts):
        """Positions at times ts; single-chart trajectories only."""
        if len({seg.chart for seg in self.segments}) != 1:
            raise FlowError("positions() requires a single-chart trajectory")
        out = np.empty((len(ts), 2))
        for i, t in enumerate(ts):
            _, q, _ = self.state(t)
            out[i] = q
        return out

    def sample(self, ts):
        """(charts, q(n,2), p(n,2)) at times ts, chart switches respected.

        Vector-evaluates each dense segment over its time bucket.
        """
        ts = np.asarray(ts, dtype=float)
        charts = np.empty(len(ts), dtype=int)
        qs = np.empty((len(ts), 2))
        ps = np.empty((len(ts), 2))
        bounds = np.array([seg.t1 for seg in self.segments])
        idx = np.minimum(np.searchsorted(bounds, ts, side="left"),
                         len(self.segments) - 1)
        for k, seg in enumerate(self.segments):
            sel = idx == k
            if not np.any(sel):
                continue
            tt = np.clip(ts[sel], seg.t0, seg.t1)
            vals = seg.sol(tt)
            charts[sel] = seg.chart
            qs[sel] = vals[0:2].T
            ps[sel] = vals[2:4].T
        return charts, qs, ps

    def endpoint(self):
        chart, q, p = self.state(self.t_end)
        h = float(hamiltonian(self.model, q, p, chart))
        return GeodesicState(q=Point2(q[0], q[1], chart),
                             p=Covector2(p[0], p[1]), t=self.t_end, H=h)

    def energy_drift(self, n=50):
        ts = np.linspace(0.0, self.t_end, n)
        h = []
        for t in ts:
            chart, q, p = self.state(t)
            h.append(float(hamiltonian(self.model, q, p, chart)))
        h = np.array(h)
        return float(np.max(np.abs(h - h[0])))


def flow(model, q0, p0, T, rtol=RTOL, atol=ATOL, chart=None, max_segments=64):
    """Integrate the Hamiltonian flow for time T (dense output).

    Multi-chart models switch charts when |q| crosses model.switch_radius.
    On integrator failure the trajectory is truncated, success=False.
    """
    chart = chart_of(q0) if chart is None else chart
    q = as_xy(q0).astype(float).copy()
    p = np.asarray(p0.arr if isinstance(p0, Covector2) else p0, dtype=float).copy()
    if float(hamiltonian(model, q, p, chart)) <= 0.0:
        raise FlowError("flow requires H(state0) > 0")
    t0 = 0.0
    segments = []
    events = None
    multi = model.n_charts > 1 and model.switch_radius is not None
    if multi:
        rsw2 = model.switch_radius ** 2

        def exit_event(t, s):
            return s[0] * s[0] + s[1] * s[1] - rsw2

        exit_event.terminal = True
        exit_event.direction = 1.0
        events = [exit_event]

    for _ in range(max_segments):
        sol = solve_ivp(_rhs_single(model, chart), (t0, T),
                        np.concatenate([q, p]), method="RK45",
                        rtol=rtol, atol=atol, dense_output=True, events=events)
        if sol.t[-1] > t0:
            segments.append(Segment(t0, float(sol.t[-1]), chart, sol.sol))
        if sol.status == 1 and multi:  # chart exit
            t0 = float(sol.t[-1])
            s_end = sol.sol(t0)
            q_old, p_old = s_end[0:2], s_end[2:4]
            new_chart = 1 - chart
            q = model.transition(q_old, chart, new_chart)
            p = model.transport_covector(p_old, q_old, chart, new_chart)
            chart = new_chart
            continue
        if sol.status < 0:
            return Trajectory(model, segments, success=False,
                              message=f"integrator stopped: {sol.message}")
        return Trajectory(model, segments)
    return Trajectory(model, segments, success=False,
                      message="chart switch limit exceeded")


@dataclass
class FamilyFlow:
    """Dense solution for a whole family of geodesics (single chart)."""
    model: FrameModel
    chart: int
    n: int
    sol: object
    t_end: float
    success: bool = True
    message: str = ""

    def positions(self, t):
        return self.sol(t).reshape(self.n, 4)[:, 0:2]

    def covectors(self, t):
        return self.sol(t).reshape(self.n, 4)[:, 2:4]

    def states(self, t):
        return self.sol(t).reshape(self.n, 4)


def flow_family(model, q0s, p0s, T, rtol=RTOL, atol=ATOL, chart=0):
    """Batched flow of N geodesics on one chart (planar models)."""
    if model.n_charts > 1:
        raise FlowError("flow_family supports single-chart models; "
                        "use flow() per sample for atlas models")
    q0s = np.atleast_2d(np.asarray(q0s, dtype=float))
    p0s = np.atleast_2d(np.asarray(p0s, dtype=float))
    n = q0s.shape[0]
    s0 = np.concatenate([q0s, p0s], axis=1).ravel()
    sol = solve_ivp(_rhs_family(model, chart, n), (0.0, T), s0, method="RK45",
                    rtol=rtol, atol=atol, dense_output=True)
    ok = sol.status == 0
    return FamilyFlow(model, chart, n, sol.sol, float(sol.t[-1]), ok,
                      "" if ok else str(sol.message))


# ---------------------------------------------------------------------------
# closed-form Grushin geodesics (oracle)
# ---------------------------------------------------------------------------

def grushin_exact(t, a, sign=1):
    """Geodesic of the Grushin plane from the origin, covector (sign, a).

    x(t) = sign*sin(at)/a, y(t) = t/(2a) - sin(2at)/(4a^2) for a != 0;
    the a = 0 branch is the horizontal line (sign*t, 0).
    """
    t = np.asarray(t, dtype=float)
    if a == 0.0:
        x = sign * t
        y = np.zeros_like(t)
        px = np.full_like(t, float(sign))
        py = np.zeros_like(t)
    else:
        x = sign * np.sin(a * t) / a
        y = t / (2 * a) - np.sin(2 * a * t) / (4 * a * a)
        px = sign * np.cos(a * t)
        py = np.full_like(t, float(a))
    return np.stack([x, y], axis=-1), np.stack([px, py], axis=-1)


def grushin_exact_from(q0, px0, a, t):
    """Grushin geodesic from a general start (harmonic-oscillator solution).

    For a != 0:
        x(t)  = x0 cos(at) + (px0/a) sin(at)
        px(t) = -a x0 sin(at) + px0 cos(at)
        y(t)  = y0 + x0 px0/(2a) + (a^2 x0^2 + px0^2) t/(2a)
                + (a^2 x0^2 - px0^2) sin(2at)/(4a^2) - x0 px0 cos(2at)/(2a)
    obtained by integrating ydot = a x(t)^2; the constant-px straight line
    for a = 0.
    """
    x0, y0 = float(q0[0]), float(q0[1])
    t = np.asarray(t, dtype=float)
    if a == 0.0:
        x = x0 + px0 * t
        y = np.full_like(t, y0)
        px = np.full_like(t, px0)
        py = np.zeros_like(t)
    else:
        x = x0 * np.cos(a * t) + px0 / a * np.sin(a * t)
        px = -a * x0 * np.sin(a * t) + px0 * np.cos(a * t)
        y = (y0 + x0 * px0 / (2 * a)
             + (a * a * x0 * x0 + px0 * px0) / (2 * a) * t
             + (a * a * x0 * x0 - px0 * px0) / (4 * a * a) * np.sin(2 * a * t)
             - x0 * px0 / (2 * a) * np.cos(2 * a * t))
        py = np.full_like(t, float(a))
    return np.stack([x, y], axis=-1), np.stack([px, py], axis=-1)


# ---------------------------------------------------------------------------
# launch sets
# ---------------------------------------------------------------------------

@dataclass
class LaunchSet:
    """Initial covectors on {H = 1/2}, continuously parameterized.

    kind 'circle':   params are covector angles at a Riemannian point;
    kind 'singular': params are the free covector component a at a singular
                     point, p = sign * w/kappa + a * rot90(w);
    kind 'curve':    params are curve parameters, p normal to the curve.
    """
    model: FrameModel
    kind: str
    params: np.ndarray
    q0: np.ndarray  # (N, 2)
    p0: np.ndarray  # (N, 2)
    chart: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.params)

    @property
    def param_bounds(self):
        if "param_bounds" in self.meta:
            return self.meta["param_bounds"]
        lo, hi = float(np.min(self.params)), float(np.max(self.params))
        pad = 2.0 * float(np.max(np.abs(np.diff(np.sort(self.params))))) \
            if len(self.params) > 1 else 0.0
        self.meta["param_bounds"] = (lo - pad, hi + pad)
        return self.meta["param_bounds"]

    def at(self, s):
        """(q0, p0) for an arbitrary real parameter s (for refinement)."""
        lo, hi = self.param_bounds
        if not (lo <= s <= hi):
            raise FlowError(f"launch parameter {s} outside [{lo}, {hi}]")
        return self._builder(float(s))


def launch_circle(model, q0, n=64, angles=None, chart=None):
    """Unit-covector circle at a Riemannian point: A^T p = (cos b, sin b)."""
    chart = chart_of(q0) if chart is None else chart
    q = as_xy(q0).astype(float)
    f1, f2 = model.frame(q, chart)
    a = np.column_stack([f1, f2])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) < 1e-12:
        raise FlowError("launch_circle requires a Riemannian point; "
                        "use launch_singular on the singular set")
    ainvT = np.linalg.inv(a).T
    if angles is None:
        angles = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    angles = np.asarray(angles, dtype=float)

    def build(theta):
        p = ainvT @ np.array([np.cos(theta), np.sin(theta)])
        return q.copy(), p

    p0 = np.array([build(th)[1] for th in angles])
    ls = LaunchSet(model, "circle", angles, np.tile(q, (len(angles), 1)), p0,
                   chart, meta={"closed": True})
    ls._builder = build
    return ls


def launch_singular(model, q0, a_values, sign=1, chart=None):
    """Covectors (sign/kappa) w + a * rot90(w) at a singular point.

    w spans Delta (unit); kappa^2 = |F1|^2 + |F2|^2 restricted to w.  For the
    Grushin origin this is the textbook p = (sign, a) family.
    """
    chart = chart_of(q0) if chart is None else chart
    q = as_xy(q0).astype(float)
    f1, f2 = model.frame(q, chart)
    w = f1 if np.linalg.norm(f1) >= np.linalg.norm(f2) else f2
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        raise FlowError("frame vanishes entirely at the launch point")
    w = w / nw
    c1, c2 = float(np.dot(f1, w)), float(np.dot(f2, w))
    kappa = np.hypot(c1, c2)
    normal = np.array([-w[1], w[0]])
    a_values = np.asarray(a_values, dtype=float)

    def build(a):
        p = sign * w / kappa + a * normal
        return q.copy(), p

    p0 = np.array([build(a)[1] for a in a_values])
    ls = LaunchSet(model, "singular", a_values, np.tile(q, (len(a_values), 1)),
                   p0, chart, meta={"sign": sign, "closed": False})
    ls._builder = build
    return ls


class ParamCurve:
    """Parameterized plane curve with tangent; from callables or a polyline."""

    def __init__(self, fun, dfun=None, h=1e-6):
        self.fun = fun
        if dfun is None:
            def dfun(s, _f=fun, _h=h):
                return (np.asarray(_f(s + _h), float)
                        - np.asarray(_f(s - _h), float)) / (2 * _h)
        self.dfun = dfun

    def __call__(self, s):
        return np.asarray(self.fun(s), dtype=float)

    def tangent(self, s):
        return np.asarray(self.dfun(s), dtype=float)

    @classmethod
    def from_polyline(cls, pts):
        from scipy.interpolate import CubicSpline
        pts = np.asarray(pts, dtype=float)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        spl = CubicSpline(s, pts, axis=0)
        curve = cls(lambda t: spl(t), lambda t: spl(t, 1))
        curve.s_range = (float(s[0]), float(s[-1]))
        return curve


def launch_normal_to_curve(model, curve, params, side=1, chart=0,
                           min_h=1e-14):
    """Transversality launches: p(0) annihilates the curve tangent, H = 1/2.

    Samples where the annihilator is H-degenerate (tangency points of the
    curve) are dropped.
    """
    params = np.asarray(params, dtype=float)

    def build(s):
        q = curve(s)
        tan = curve.tangent(s)
        n = np.array([-tan[1], tan[0]])
        h = float(hamiltonian(model, q, n, chart))
        if h <= min_h:
            return None
        lam = side / np.sqrt(2.0 * h)
        return q, lam * n

    qs, ps, good = [], [], []
    for s in params:
        out = build(s)
        if out is None:
            continue
        qs.append(out[0])
        ps.append(out[1])
        good.append(s)
    if not qs:
        raise FlowError("no admissible normal launches on the curve")
    ls = LaunchSet(model, "curve", np.array(good), np.array(qs), np.array(ps),
                   chart, meta={"side": side, "closed": False, "curve": curve})

    def build_or_raise(s):
        out = build(s)
        if out is None:
            raise FlowError(f"normal launch degenerate at parameter {s}")
        return out

    ls._builder = build_or_raise
    return ls


# ---------------------------------------------------------------------------
# exponential map
# ---------------------------------------------------------------------------

@dataclass
class Front:
    """Time slice of the exponential map over a launch set."""
    t: float
    params: np.ndarray
    points: np.ndarray      # (N, 2)
    covectors: np.ndarray   # (N, 2)
    charts: np.ndarray      # (N,)
    closed: bool = False
    corners: list = field(default_factory=list)  # marked self-intersections

    def __len__(self):
        return len(self.params)


def exp_map(model, launch, t, rtol=RTOL, atol=ATOL, workers=None):
    """Flow every launch sample to time t; samples ordered by launch id."""
    if t < 0:
        raise FlowError("exp_map requires t >= 0")
    n = len(launch)
    if t == 0.0:
        return Front(0.0, launch.params.copy(), launch.q0.copy(),
                     launch.p0.copy(), np.full(n, launch.chart),
                     closed=bool(launch.meta.get("closed", False)))
    if model.n_charts == 1:
        workers = n_workers() if workers is None else workers
        chunks = np.array_split(np.arange(n), max(1, min(workers, n)))

        def run(idx):
            fam = flow_family(model, launch.q0[idx], launch.p0[idx], t,
                              rtol=rtol, atol=atol, chart=launch.chart)
            if not fam.success:
                raise FlowError(f"family flow failed: {fam.message}")
            return fam.positions(t), fam.covectors(t)

        if len(chunks) == 1:
            results = [run(chunks[0])]
        else:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(run, chunks))
        pts = np.concatenate([r[0] for r in results], axis=0)
        cov = np.concatenate([r[1] for r in results], axis=0)
        charts = np.full(n, launch.chart)
    else:
        pts = np.empty((n, 2))
        cov = np.empty((n, 2))
        charts = np.empty(n, dtype=int)
        for i in range(n):
            traj = flow(model, launch.q0[i], launch.p0[i], t, rtol=rtol,
                        atol=atol, chart=launch.chart)
            ch, q, p = traj.state(t)
            if not traj.success and traj.t_end < t:
                raise FlowError(f"sample {i}: {traj.message}")
            pts[i], cov[i], charts[i] = q, p, ch
    return Front(float(t), launch.params.copy(), pts, cov, charts,
                 closed=bool(launch.meta.get("closed", False)))


# ---------------------------------------------------------------------------
# two-term expansion at a tangency point (nilpotent + first correction)
# ---------------------------------------------------------------------------

def ar0_model(gamma=1.0, eps_prime=0.0):
    """Order-zero tangency frame X=(1,0), Y=(0, gamma*(y - x^2 - eps*x^3))."""
    from .models import ExprFields, _planar
    g, e = repr(float(gamma)), repr(float(eps_prime))
    comp = f"{g}*(y - x*x - {e}*x*x*x)"
    return _planar("ar0", ExprFields("1", "0", "0", comp),
                   params={"gamma": gamma, "eps_prime": eps_prime})


def prop31_system(gamma, eps_prime, sign, a, tau_end, rtol=1e-11, atol=1e-13):
    """Nilpotent extremal and its first-order correction, in the slow time.

    Returns a dense solution over tau in [0, tau_end] of the coupled system
    for (x0, y0, px0, py0, x1, y1, px1, py1): the nilpotent Hamiltonian
    (px^2 + gamma^2 x^4 py^2)/2 launched from (0, 0, sign, sgn(a)), and the
    linear correction system with zero initial condition.
    """
    sa = 1.0 if a > 0 else -1.0
    g2 = gamma * gamma

    def rhs(t, s):
        x0, y0, px0, py0, x1, y1, px1, py1 = s
        dx0 = px0
        dy0 = g2 * x0 ** 4 * py0
        dpx0 = -2.0 * g2 * x0 ** 3 * py0 ** 2
        dpy0 = 0.0
        dx1 = px1
        dy1 = g2 * (py1 * x0 ** 4 + 4.0 * py0 * x0 ** 3 * x1
                    - 2.0 * py0 * (x0 ** 2 * y0 - eps_prime * x0 ** 5))
        dpx1 = -g2 * (4.0 * py0 * py1 * x0 ** 3 + 6.0 * py0 ** 2 * x0 ** 2 * x1
                      - py0 ** 2 * (2.0 * x0 * y0 - 5.0 * eps_prime * x0 ** 4))
        dpy1 = g2 * py0 ** 2 * x0 ** 2
        return (dx0, dy0, dpx0, dpy0, dx1, dy1, dpx1, dpy1)

    s0 = np.array([0.0, 0.0, float(sign), sa, 0.0, 0.0, 0.0, 0.0])
    sol = solve_ivp(rhs, (0.0, tau_end), s0, method="RK45", rtol=rtol,
                    atol=atol, dense_output=True)
    if sol.status != 0:
        raise FlowError(f"prop31 integration failed: {sol.message}")
    return sol.sol


def prop31_expansion(gamma, eps_prime, sign, a, tau, order=2):
    """Two-term prediction (x, y) at physical time t = eta*tau, eta=|a|^-1/2."""
    eta = 1.0 / np.sqrt(abs(a))
    sol = prop31_system(gamma, eps_prime, sign, a, float(np.max(tau)) + 1e-12)
    s = sol(np.asarray(tau, dtype=float))
    x = eta * s[0]
    y = eta ** 3 * s[1]
    if order >= 2:
        x = x + eta ** 2 * s[4]
        y = y + eta ** 4 * s[5]
    return x, y
