"""Global pipelines for the two-chart sphere model: distance from the
singular circle by front propagation with chart switching, and the
eps-regularized curvature integral over the two hemisphere disks."""

from __future__ import annotations

import numpy as np

from . import models as M
from .geodesics import ParamCurve, flow, launch_normal_to_curve
from .loci import DistanceField, _rasterize_arrivals
from .curvature import integrate_K_Meps


def sphere2_distance_fields(model, grid_n=400, t_max=2.6, n_launch=520,
                            rtol=1e-8, dt_factor=0.45, u_span=1.25):
    """Distance from Z = {y = 0} on both chart disks by front propagation.

    Launches the normal family from the singular curve as seen in each chart
    (the u-axis, |u| <= u_span so the two charts overlap), integrates with
    chart switching, and rasterizes first arrivals onto cell grids over
    [-1, 1]^2 in both charts.
    """
    xs = np.linspace(-1.0, 1.0, grid_n)
    values = [np.full((grid_n, grid_n), np.inf) for _ in range(2)]
    cell = xs[1] - xs[0]
    dt = dt_factor * cell / 1.8  # euclidean speed bound on the disks
    ts = np.arange(dt, t_max + dt, dt)

    for src_chart in (0, 1):
        curve = ParamCurve(lambda s: np.array([s, 0.0]),
                           lambda s: np.array([1.0, 0.0]))
        params = np.linspace(-u_span, u_span, n_launch)
        for side in (1, -1):
            launch = launch_normal_to_curve(model, curve, params, side=side,
                                            chart=src_chart)
            for i in range(len(launch)):
                traj = flow(model, launch.q0[i], launch.p0[i], t_max,
                            rtol=rtol, chart=src_chart)
                tcs = ts[ts <= traj.t_end + 1e-12]
                charts_i, qs, _ = traj.sample(tcs)
                for ch in (0, 1):
                    keep = charts_i == ch
                    if np.any(keep):
                        _rasterize_arrivals(model, ch, qs[keep], tcs[keep],
                                            xs, xs, values[ch])
    return [DistanceField(xs, xs, values[ch], ch) for ch in (0, 1)]


def sphere2_eps_integrals(model, eps_list, grid_n=400, quad_n=None,
                          t_max=2.6, n_launch=520):
    """K dA_s over {d(., Z) > eps} for each eps, summed over both disks.

    The two closed unit disks are the two hemispheres; their overlap is the
    equator circle (measure zero).
    """
    dfs = sphere2_distance_fields(model, grid_n=grid_n, t_max=t_max,
                                  n_launch=n_launch)
    quad_n = quad_n or grid_n
    vals = []
    for eps in eps_list:
        total = 0.0
        for ch in (0, 1):
            df = dfs[ch]
            total += integrate_K_Meps(
                model, ((-1.0, 1.0), (-1.0, 1.0)), eps, quad_n,
                lambda pts, df=df: df.interp(pts),
                chart=ch,
                domain_mask=lambda pts: (pts[:, 0] ** 2 + pts[:, 1] ** 2)
                <= 1.0)
        vals.append(total)
    return vals, dfs
