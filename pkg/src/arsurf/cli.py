"""Command-line front end.

Subcommands: classify, geodesic, front, sphere, cut, conjugate, distfield,
curvature, gauss-bonnet, graph, reproduce.  All numeric output is printed
with 17 significant digits so identical configurations produce byte-identical
files; errors are reported as machine-readable JSON on stderr with a nonzero
exit code (2 for configuration problems, 1 for runtime failures).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import models as M
from . import classify as CL
from . import geodesics as G
from . import loci as L
from . import curvature as CV
from . import graphs as GR
from .svgplot import SvgPlot

FIGURES = ("fronte", "frontmenuno", "conjbella", "astang", "figurone",
           "krestaccia")


def fmt(x):
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _jsonify(x):
    if isinstance(x, (np.floating, float)):
        return float(fmt(x))
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonify(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonify(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonify(v) for k, v in x.items()}
    return x


def load_model(args):
    name = args.model
    params = json.loads(args.params) if args.params else {}
    if name is None:
        raise M.ModelError("--model is required")
    if name.endswith(".json") or os.path.exists(name):
        return M.from_json(name)
    return M.builtin(name, **params)


def parse_pair(text, label="point"):
    try:
        x, y = (float(v) for v in text.split(","))
    except Exception as exc:
        raise M.ModelError(f"cannot parse {label} {text!r}; "
                           "expected 'x,y'") from exc
    return np.array([x, y])


def parse_box(text):
    try:
        vals = [float(v) for v in text.split(",")]
        x0, x1, y0, y1 = vals
    except Exception as exc:
        raise M.ModelError(f"cannot parse box {text!r}; expected "
                           "'x0,x1,y0,y1'") from exc
    return ((x0, x1), (y0, y1))


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_classify(args):
    model = load_model(args)
    if args.point:
        q = parse_pair(args.point)
        pc = CL.classify_point(model, q, chart=args.chart)
        write_json(args.out, {"kind": pc.kind.value, "dims": list(pc.dims)})
        return 0
    if not args.box:
        raise M.ModelError("classify needs --point or --box")
    box = parse_box(args.box)
    curves = CL.trace_singular_set(model, box, chart=args.chart)
    rows = []
    for ci, curve in enumerate(curves):
        tps = CL.find_tangency_points(curve, model)
        marked = {i for i, _t in curve.tangency_markers}
        taus = dict(curve.tangency_markers)
        for i, p in enumerate(curve.polyline):
            rows.append((ci, p[0], p[1], int(i in marked), taus.get(i, 0)))
    write_csv(args.out, ["curve", "x", "y", "is_tangency", "tau"], rows)
    return 0


def cmd_geodesic(args):
    model = load_model(args)
    q0 = parse_pair(args.start, "start")
    p0 = parse_pair(args.covector, "covector")
    traj = G.flow(model, q0, p0, args.T, rtol=args.tol, chart=args.chart)
    ts = np.linspace(0.0, traj.t_end, args.n)
    rows = []
    for t in ts:
        ch, q, p = traj.state(t)
        rows.append((t, q[0], q[1], p[0], p[1], ch))
    if args.format == "svg":
        pts = np.array([(r[1], r[2]) for r in rows])
        plot = _auto_plot(pts, title="geodesic")
        plot.polyline(pts)
        _write_svg(args.out, plot)
    else:
        write_csv(args.out, ["t", "x", "y", "px", "py", "chart"], rows)
    return 0


def _launch_for(model, center, args):
    det = float(model.det_frame(center, args.chart))
    if abs(det) < 1e-10:
        amax = args.a_max
        vals = np.linspace(-amax, amax, max(4, args.n_samples // 2))
        return [G.launch_singular(model, center, vals, sign=s,
                                  chart=args.chart) for s in (1, -1)]
    return [G.launch_circle(model, center, n=args.n_samples,
                            chart=args.chart)]


def cmd_front(args):
    model = load_model(args)
    center = parse_pair(args.center, "center")
    rows = []
    for li, launch in enumerate(_launch_for(model, center, args)):
        fr = G.exp_map(model, launch, args.t)
        for k in range(len(fr)):
            rows.append((li, fr.params[k], fr.points[k][0], fr.points[k][1],
                         fr.covectors[k][0], fr.covectors[k][1]))
    if args.format == "svg":
        pts = np.array([(r[2], r[3]) for r in rows])
        plot = _auto_plot(pts, title=f"front t={args.t}")
        _plot_branches(plot, rows)
        _write_svg(args.out, plot)
    else:
        write_csv(args.out, ["branch", "param", "x", "y", "px", "py"], rows)
    return 0


def cmd_sphere(args):
    model = load_model(args)
    center = parse_pair(args.center, "center")
    fr = L.sphere(model, center, args.r, n_samples=args.n_samples,
                  chart=args.chart)
    rows = [(fr.params[k], fr.points[k][0], fr.points[k][1])
            for k in range(len(fr))]
    if args.format == "svg":
        pts = fr.points
        plot = _auto_plot(pts, title=f"sphere r={args.r}")
        plot.polyline(np.vstack([pts, pts[:1]]) if fr.closed else pts)
        if fr.corners:
            plot.points(np.array(fr.corners))
        _write_svg(args.out, plot)
    else:
        write_csv(args.out, ["param", "x", "y"], rows)
    return 0


def cmd_cut(args):
    model = load_model(args)
    center = parse_pair(args.center, "center")
    pts = L.cut_locus_from_point(model, center, t_max=args.t_max,
                                 n_samples=args.n_samples,
                                 a_range=(args.a_min, args.a_max),
                                 chart=args.chart, dense=args.dense,
                                 n_t=args.n_t)
    report = [{"x": m.location.x, "y": m.location.y, "t": m.time,
               "generators": [list(gk) for gk in m.generators],
               "residual": m.residual} for m in pts]
    if args.format == "csv":
        rows = [(m.location.x, m.location.y, m.time) for m in pts]
        write_csv(args.out, ["x", "y", "t"], rows)
    else:
        write_json(args.out, {"maxwell_points": _jsonify(report)})
    return 0


def cmd_conjugate(args):
    model = load_model(args)
    center = parse_pair(args.center, "center")
    params = np.geomspace(args.a_min, args.a_max, args.n_samples)
    out = []
    for sign in (1, -1):
        try:
            cps = L.conjugate_locus_from_point(model, center, args.t_max,
                                               params=params, sign=sign,
                                               chart=args.chart)
        except L.LociError:
            cps = L.conjugate_locus_from_point(model, center, args.t_max,
                                               chart=args.chart)
        out += [{"x": c.location.x, "y": c.location.y, "t": c.time,
                 "param": c.param, "sign": sign} for c in cps]
        if abs(float(model.det_frame(center, args.chart))) > 1e-10:
            break
    if args.format == "csv":
        write_csv(args.out, ["x", "y", "t", "param"],
                  [(c["x"], c["y"], c["t"], c["param"]) for c in out])
    else:
        write_json(args.out, {"conjugate_points": _jsonify(out)})
    return 0


def cmd_distfield(args):
    model = load_model(args)
    box = parse_box(args.box)
    if args.source == "zset":
        curves = CL.trace_singular_set(model, box, chart=args.chart)
        if not curves:
            raise CL.ClassifyError("no singular curve in the box")
        source = curves[0]
    else:
        source = parse_pair(args.source, "source")
    df = L.distance_field(model, source, box, args.grid, t_max=args.t_max,
                          chart=args.chart)
    if args.format == "svg":
        plot = SvgPlot((df.xs[0], df.xs[-1]), (df.ys[0], df.ys[-1]),
                       title="distance field")
        vals = np.where(np.isfinite(df.values), df.values, np.nan)
        plot.heatmap(df.xs, df.ys, vals)
        _write_svg(args.out, plot)
    else:
        rows = [(df.xs[i], df.ys[j], df.values[i, j])
                for i in range(len(df.xs)) for j in range(len(df.ys))]
        write_csv(args.out, ["x", "y", "d"], rows)
    return 0


def cmd_curvature(args):
    model = load_model(args)
    if args.point:
        q = parse_pair(args.point)
        ev = CV.gaussian_curvature(model, q, chart=args.chart)
        write_json(args.out, {"K": ev.K if ev.valid else None,
                              "valid": ev.valid})
        return 0
    box = parse_box(args.box)
    xs = np.linspace(box[0][0], box[0][1], args.grid)
    ys = np.linspace(box[1][0], box[1][1], args.grid)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx, gy], axis=-1)
    K = CV.curvature_grid(model, pts, chart=args.chart)
    det = model.det_frame(pts, args.chart)
    K = np.where(np.abs(det) < 1e-8, np.nan, K)
    if args.format == "svg":
        plot = SvgPlot((xs[0], xs[-1]), (ys[0], ys[-1]), title="K")
        clip = args.clip
        plot.heatmap(xs, ys, np.clip(K, -clip, clip))
        _write_svg(args.out, plot)
    else:
        rows = [(xs[i], ys[j], K[i, j]) for i in range(len(xs))
                for j in range(len(ys))]
        write_csv(args.out, ["x", "y", "K"], rows)
    return 0


def cmd_gauss_bonnet(args):
    model = load_model(args)
    eps_list = [float(v) for v in args.eps_list.split(",")]
    if model.name == "sphere2":
        from .sphere_tools import sphere2_eps_integrals
        vals, dfs = sphere2_eps_integrals(model, eps_list, grid_n=args.grid)
        limit, info = CV.power_law_extrapolate(np.array(eps_list),
                                               np.array(vals))
        write_json(args.out, {"eps": eps_list, "integrals": _jsonify(vals),
                              "limit": float(fmt(limit)),
                              "mode": info["mode"]})
        return 0
    raise M.ModelError("gauss-bonnet: built-in pipeline covers sphere2; "
                       "use the library API for planar three-scale tables")


def cmd_graph(args):
    action = args.action
    if action == "build":
        if args.model == "sphere2":
            disc = GR.sphere2_mesh(M.sphere2(), n_rings=args.grid // 4 or 6,
                                   n_theta=args.grid or 24)
            g = GR.build_graph(disc)
        else:
            raise M.ModelError("graph build supports --model sphere2 or "
                               "--graph-json input")
        write_json(args.out, g.to_json())
        return 0
    if args.graph_json:
        with open(args.graph_json) as fh:
            g = GR.LabelledGraph.from_json(fh.read())
    elif args.model == "sphere2":
        g = GR.build_graph(GR.sphere2_mesh(M.sphere2(), 6, 24))
    else:
        raise M.ModelError("graph: provide --graph-json or --model sphere2")
    if action == "euler":
        sys.stdout.write(f"{GR.euler_number(g)}\n")
        return 0
    if action == "equiv":
        if not args.other:
            raise M.ModelError("graph equiv needs --other graph JSON")
        with open(args.other) as fh:
            g2 = GR.LabelledGraph.from_json(fh.read())
        eq, wit = GR.graphs_equivalent(g, g2)
        write_json(args.out, {"equivalent": bool(eq),
                              "witness": _jsonify(wit)})
        return 0
    raise M.ModelError(f"unknown graph action {action!r}")


# ---------------------------------------------------------------------------
# figure reproduction
# ---------------------------------------------------------------------------

def _auto_plot(pts, title=""):
    pts = np.asarray(pts, dtype=float)
    x0, x1 = float(pts[:, 0].min()), float(pts[:, 0].max())
    y0, y1 = float(pts[:, 1].min()), float(pts[:, 1].max())
    padx = 0.05 * (x1 - x0 + 1e-9)
    pady = 0.05 * (y1 - y0 + 1e-9)
    return SvgPlot((x0 - padx, x1 + padx), (y0 - pady, y1 + pady),
                   title=title)


def _write_svg(path, plot):
    if path is None or path == "-":
        sys.stdout.write(plot.render())
    else:
        plot.write(path)


def _plot_branches(plot, rows):
    branches = sorted({r[0] for r in rows})
    colors = ["#1f4e8c", "#c23b22", "#2e7d32", "#6a1b9a"]
    for b in branches:
        pts = np.array([(r[2], r[3]) for r in rows if r[0] == b])
        plot.polyline(pts, stroke=colors[b % len(colors)])


def cmd_reproduce(args):
    fig = args.figure
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    if fig not in FIGURES:
        raise M.ModelError(f"unknown figure {fig!r}; known: {FIGURES}")
    getattr(sys.modules[__name__], f"_fig_{fig}")(outdir)
    return 0


def _fig_fronte(outdir):
    model = M.grushin()
    plot = SvgPlot((-1.3, 1.3), (-1.3, 1.3), title="geodesics and t=1 front")
    rows = []
    for a in (1.0, 2.0, 3.0, -1.0, -2.0, -3.0):
        for sign in (1, -1):
            ts = np.linspace(0, 1.0, 120)
            q, _p = G.grushin_exact(ts, a, sign)
            plot.polyline(q, stroke="#888888", width=0.8)
            for t, pt in zip(ts, q):
                rows.append((a, sign, t, pt[0], pt[1]))
    fr = L.sphere(model, (0.0, 0.0), 1.0, n_samples=720)
    plot.polyline(np.vstack([fr.points, fr.points[:1]]), stroke="#c23b22",
                  width=1.6)
    plot.write(os.path.join(outdir, "fronte.svg"))
    write_csv(os.path.join(outdir, "fronte.csv"),
              ["a", "sign", "t", "x", "y"], rows)


def _fig_frontmenuno(outdir):
    model = M.grushin()
    plot = SvgPlot((-12, 12), (-14, 14), title="spheres from (-1,0), r=1,10")
    rows = []
    for r in (1.0, 10.0):
        fr = L.sphere(model, (-1.0, 0.0), r, n_samples=900)
        plot.polyline(np.vstack([fr.points, fr.points[:1]]),
                      stroke="#1f4e8c" if r < 5 else "#c23b22")
        for k in range(len(fr)):
            rows.append((r, fr.params[k], fr.points[k][0], fr.points[k][1]))
    plot.write(os.path.join(outdir, "frontmenuno.svg"))
    write_csv(os.path.join(outdir, "frontmenuno.csv"),
              ["r", "param", "x", "y"], rows)


def _fig_conjbella(outdir):
    model = M.grushin()
    rows = []
    plot = SvgPlot((-1.5, 1.5), (0, 3.5), title="conjugate locus from (0,0)")
    for a in np.geomspace(0.7, 4.0, 10):
        ts = np.linspace(0, 1.2 * 4.493409457909064 / a, 200)
        q, _ = G.grushin_exact(ts, a, 1)
        plot.polyline(q, stroke="#999999", width=0.7)
    cps = L.conjugate_locus_from_point(model, (0.0, 0.0), t_max=8.0,
                                       params=np.geomspace(0.7, 4.0, 18),
                                       sign=1)
    locus = np.array([[c.location.x, c.location.y] for c in cps])
    for sx in (1, -1):
        branch = locus.copy()
        branch[:, 0] *= sx
        plot.polyline(branch[np.argsort(branch[:, 0])], stroke="#c23b22",
                      width=1.6)
    for c in cps:
        rows.append((c.param, c.time, c.location.x, c.location.y))
    plot.write(os.path.join(outdir, "conjbella.svg"))
    write_csv(os.path.join(outdir, "conjbella.csv"),
              ["a", "t_conj", "x", "y"], rows)


def _fig_astang(outdir):
    model = M.tangency_basic()
    eps = 0.07
    curve = G.ParamCurve(lambda s: np.array([s, s * s]),
                         lambda s: np.array([1.0, 2.0 * s]))
    curve.s_range = (-1.2, 1.2)
    offs = np.geomspace(1e-4, 1.1, 260)
    params = np.unique(np.concatenate([-offs, offs]))
    plot = SvgPlot((-1.1, 1.1), (-0.6, 1.4),
                   title="boundary of M_eps, eps=0.07")
    zs = np.linspace(-1.1, 1.1, 200)
    plot.polyline(np.stack([zs, zs * zs], axis=-1), stroke="#000000",
                  width=1.8)
    rows = []
    for side in (1, -1):
        pts, corners, _fr = L.eps_front_from_curve(model, curve, params,
                                                   side, eps)
        plot.polyline(pts, stroke="#c23b22", width=1.2)
        for p in pts:
            rows.append((side, p[0], p[1]))
    plot.write(os.path.join(outdir, "astang.svg"))
    write_csv(os.path.join(outdir, "astang.csv"), ["side", "x", "y"], rows)


def _fig_figurone(outdir):
    model = M.tangency_cubic()
    plot = SvgPlot((-0.9, 0.9), (-0.7, 0.9),
                   title="loci near the tangency point")
    zs = np.linspace(-0.9, 0.9, 300)
    plot.polyline(np.stack([zs, zs * zs + zs ** 3], axis=-1),
                  stroke="#000000", width=1.2, dash="3,3")
    rows = []
    mps = L.cut_locus_from_point(model, (0.0, 0.0), t_max=1.1,
                                 n_samples=140, a_range=(2.0, 60.0),
                                 n_t=24, dense=True, refine_first=False)
    for m in mps:
        rows.append(("cut_from_point", m.location.x, m.location.y, m.time))
    if mps:
        plot.points(np.array([[m.location.x, m.location.y] for m in mps]),
                    r=1.5, fill="#c23b22")
    curve = G.ParamCurve(lambda s: np.array([s, s * s + s ** 3]),
                         lambda s: np.array([1.0, 2.0 * s + 3.0 * s * s]))
    curve.s_range = (-0.9, 0.9)
    for side in (1, -1):
        try:
            zps = L.cut_locus_from_curve(model, curve,
                                         np.linspace(-0.85, 0.85, 160), side,
                                         t_max=0.8, n_t=20, dense=True,
                                         refine_first=False)
        except Exception:
            zps = []
        for m in zps:
            rows.append((f"cut_from_Z_{side}", m.location.x, m.location.y,
                         m.time))
        if zps:
            plot.points(np.array([[m.location.x, m.location.y]
                                  for m in zps]), r=1.5, fill="#2e7d32")
    plot.write(os.path.join(outdir, "figurone.svg"))
    write_csv(os.path.join(outdir, "figurone.csv"),
              ["locus", "x", "y", "t"], rows)


def _fig_krestaccia(outdir):
    model = M.tangency_basic()
    box = ((-0.8, 0.8), (-0.6, 1.0))
    xs = np.linspace(*box[0], 160)
    ys = np.linspace(*box[1], 160)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    K = CV.curvature_grid(model, np.stack([gx, gy], axis=-1))
    det = gy - gx * gx
    K = np.where(np.abs(det) < 2e-2, np.nan, K)
    plot = SvgPlot(box[0], box[1], title="K with its crest through (0,0)")
    plot.heatmap(xs, ys, np.clip(K, -60, 60))
    ridge = CV.ridge_through_tangency(model, (0.0, 0.0), box=box)
    plot.polyline(ridge, stroke="#000000", width=1.8)
    plot.write(os.path.join(outdir, "krestaccia.svg"))
    rows = [(p[0], p[1]) for p in ridge]
    write_csv(os.path.join(outdir, "krestaccia.csv"), ["x", "y"], rows)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="arsurf",
                                description="almost-Riemannian surface "
                                            "numerics")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", help="builtin name or JSON path")
            sp.add_argument("--params", help="JSON dict of model parameters")
        sp.add_argument("--chart", type=int, default=0)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json", "svg"),
                        default=None)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--dry-run", action="store_true")

    sp = sub.add_parser("classify")
    common(sp)
    sp.add_argument("--point")
    sp.add_argument("--box")
    sp.set_defaults(fn=cmd_classify, format="json")

    sp = sub.add_parser("geodesic")
    common(sp)
    sp.add_argument("--start", required=True)
    sp.add_argument("--covector", required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--n", type=int, default=200)
    sp.set_defaults(fn=cmd_geodesic, format="csv")

    sp = sub.add_parser("front")
    common(sp)
    sp.add_argument("--center", required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--n-samples", type=int, default=256)
    sp.add_argument("--a-max", type=float, default=12.0)
    sp.set_defaults(fn=cmd_front, format="csv")

    sp = sub.add_parser("sphere")
    common(sp)
    sp.add_argument("--center", required=True)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--n-samples", type=int, default=512)
    sp.set_defaults(fn=cmd_sphere, format="csv")

    sp = sub.add_parser("cut")
    common(sp)
    sp.add_argument("--center", required=True)
    sp.add_argument("--t-max", type=float, default=3.0)
    sp.add_argument("--n-samples", type=int, default=120)
    sp.add_argument("--n-t", type=int, default=36)
    sp.add_argument("--a-min", type=float, default=0.8)
    sp.add_argument("--a-max", type=float, default=30.0)
    sp.add_argument("--dense", action="store_true")
    sp.set_defaults(fn=cmd_cut, format="json")

    sp = sub.add_parser("conjugate")
    common(sp)
    sp.add_argument("--center", required=True)
    sp.add_argument("--t-max", type=float, default=8.0)
    sp.add_argument("--n-samples", type=int, default=24)
    sp.add_argument("--a-min", type=float, default=0.6)
    sp.add_argument("--a-max", type=float, default=4.0)
    sp.set_defaults(fn=cmd_conjugate, format="json")

    sp = sub.add_parser("distfield")
    common(sp)
    sp.add_argument("--source", required=True,
                    help="'x,y' for a point or 'zset'")
    sp.add_argument("--box", required=True)
    sp.add_argument("--grid", type=int, default=120)
    sp.add_argument("--t-max", type=float, default=2.5)
    sp.set_defaults(fn=cmd_distfield, format="csv")

    sp = sub.add_parser("curvature")
    common(sp)
    sp.add_argument("--point")
    sp.add_argument("--box")
    sp.add_argument("--grid", type=int, default=120)
    sp.add_argument("--clip", type=float, default=50.0)
    sp.set_defaults(fn=cmd_curvature, format="json")

    sp = sub.add_parser("gauss-bonnet")
    common(sp)
    sp.add_argument("--eps-list", default="0.5,0.4,0.32,0.256")
    sp.add_argument("--grid", type=int, default=200)
    sp.set_defaults(fn=cmd_gauss_bonnet, format="json")

    sp = sub.add_parser("graph")
    common(sp)
    sp.add_argument("action", choices=("build", "euler", "equiv"))
    sp.add_argument("--graph-json")
    sp.add_argument("--other")
    sp.add_argument("--grid", type=int, default=24)
    sp.set_defaults(fn=cmd_graph, format="json")

    sp = sub.add_parser("reproduce")
    common(sp, model=False)
    sp.add_argument("figure", choices=FIGURES)
    sp.set_defaults(fn=cmd_reproduce, format=None)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if os.environ.get("ARSURF_THREADS"):
        pass  # G.n_workers reads the environment on demand
    try:
        if getattr(args, "dry_run", False):
            if getattr(args, "model", None) and args.command != "reproduce":
                load_model(args)
            sys.stdout.write(json.dumps({"dry_run": True, "ok": True,
                                         "command": args.command}) + "\n")
            return 0
        return args.fn(args)
    except (M.ModelError, M.DomainError) as exc:
        sys.stderr.write(json.dumps({"error": {"type": type(exc).__name__,
                                               "message": str(exc)}}) + "\n")
        return 2
    except M.ArsurfError as exc:
        sys.stderr.write(json.dumps({"error": {"type": type(exc).__name__,
                                               "message": str(exc)}}) + "\n")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
