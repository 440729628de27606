import warnings

import numpy as np
import pytest

from arsurf import models as M
from arsurf import classify as C
from arsurf import geodesics as G


def test_classify_builtin_points():
    g = M.grushin()
    assert C.classify_point(g, (1.0, 0.0)).kind is C.PointKind.RIEMANNIAN
    pc = C.classify_point(g, (0.0, 5.0))
    assert pc.kind is C.PointKind.GRUSHIN and pc.dims == (1, 2, 2)
    tb = M.tangency_basic()
    pc = C.classify_point(tb, (0.0, 0.0))
    assert pc.kind is C.PointKind.TANGENCY and pc.dims == (1, 1, 2)


def test_classify_h0_violation():
    # F2 = (0, y - x^3): at the origin Delta_3 is still one-dimensional
    cust = M.from_json({"model": "custom",
                        "charts": [{"F1": ["1", "0"], "F2": ["0", "y - x*x*x"]}]})
    with pytest.raises(C.H0Violation):
        C.classify_point(cust, (0.0, 0.0))


def test_classify_rotation_invariance():
    rng = np.random.default_rng(0)
    for name in ("grushin", "tangency_basic", "tangency_cubic"):
        base = M.builtin(name)
        for _ in range(34):  # ~100 (theta, q) pairs over the three models
            theta = rng.uniform(0, 2 * np.pi)
            q = rng.uniform(-1.5, 1.5, 2)
            rot = M.rotated_frame(base, theta)
            try:
                k1 = C.classify_point(base, q).kind
                k2 = C.classify_point(rot, q).kind
            except C.H0Violation:
                continue
            assert k1 is k2


def test_trace_singular_set_grushin():
    g = M.grushin()
    curves = C.trace_singular_set(g, ((-2, 2), (-2, 2)))
    assert len(curves) == 1
    assert np.max(np.abs(curves[0].polyline[:, 0])) < 1e-8


def test_trace_singular_set_parabola():
    tb = M.tangency_basic()
    curves = C.trace_singular_set(tb, ((-1, 1), (-1, 1)))
    assert len(curves) == 1
    poly = curves[0].polyline
    assert np.max(np.abs(poly[:, 1] - poly[:, 0] ** 2)) < 1e-8


def test_trace_singular_set_f2_trivial():
    m = M.f2_normal("0")
    curves = C.trace_singular_set(m, ((-1, 1), (-1, 1)))
    assert len(curves) == 1
    assert np.max(np.abs(curves[0].polyline[:, 0])) < 1e-8


def test_singular_curve_separates():
    tb = M.tangency_basic()
    curve = C.trace_singular_set(tb, ((-1, 1), (-1, 1)))[0]
    poly = curve.polyline
    step = np.linalg.norm(np.diff(poly, axis=0), axis=1).mean()
    for i in range(5, len(poly) - 5, max(1, len(poly) // 40)):
        tan = poly[i + 1] - poly[i - 1]
        tan /= np.linalg.norm(tan)
        left = np.array([-tan[1], tan[0]])
        q = poly[i]
        if np.hypot(*q) < 0.05:  # skip the tangency point itself
            continue
        s_left = tb.area_sign(q + 0.5 * step * left)
        s_right = tb.area_sign(q - 0.5 * step * left)
        assert s_left == 1 and s_right == -1


def test_tangency_points_and_contributions():
    g = M.grushin()
    zg = C.trace_singular_set(g, ((-2, 2), (-2, 2)))[0]
    assert C.find_tangency_points(zg, g) == []

    tb = M.tangency_basic()
    ztb = C.trace_singular_set(tb, ((-1, 1), (-1, 1)))[0]
    tps = C.find_tangency_points(ztb, tb)
    assert len(tps) == 1
    (p, tau), = tps
    assert abs(p.x) < 1e-6 and abs(p.y) < 1e-6
    assert tau == -1  # with M+ = {det > 0} above the parabola

    # orientation flip reverses the contribution
    tbm = M.tangency_basic(orientation_sign=-1)
    ztbm = C.trace_singular_set(tbm, ((-1, 1), (-1, 1)))[0]
    (p2, tau2), = C.find_tangency_points(ztbm, tbm)
    assert tau2 == 1


def test_sphere2_no_tangency():
    s2 = M.sphere2()
    z = C.trace_singular_set(s2, ((-1.4, 1.4), (-1.4, 1.4)), chart=0)[0]
    assert C.find_tangency_points(z, s2) == []


def test_degenerate_tangency_warns():
    cust = M.from_json({"model": "custom",
                        "charts": [{"F1": ["1", "0"], "F2": ["0", "y - x*x*x"]}]})
    cv = C.trace_singular_set(cust, ((-0.5, 0.5), (-0.2, 0.2)))[0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = C.find_tangency_points(cv, cust)
    assert out == []
    assert any("degenerate tangency" in str(w.message) for w in caught)


def test_tau_reparameterization_invariance():
    tb = M.tangency_basic()
    fine = C.trace_singular_set(tb, ((-1, 1), (-1, 1)), step=0.01)[0]
    coarse = C.trace_singular_set(tb, ((-1, 1), (-1, 1)), step=0.035)[0]
    t1 = C.find_tangency_points(fine, tb)
    t2 = C.find_tangency_points(coarse, tb)
    assert len(t1) == len(t2) == 1
    assert t1[0][1] == t2[0][1]


def _boundary_of_plus_curve(model, box):
    """y-axis-type curve oriented as the boundary of the area_sign>0 side."""
    curve = C.trace_singular_set(model, box)[0]
    return curve.as_param_curve()


def test_normal_chart_grushin_identity():
    g = M.grushin()
    curve = G.ParamCurve(lambda s: np.array([0.0, -s]),
                         lambda s: np.array([0.0, -1.0]))
    nc = C.build_normal_chart(g, curve, s_range=0.8, n_grid=9,
                              alphas=np.linspace(-1, 1, 9))
    # map(s, a) = (s, -a): straight normal geodesics, s > 0 on M+
    assert np.max(np.abs(nc.grid[..., 0] - nc.svals[:, None])) < 1e-9
    assert np.max(np.abs(nc.grid[..., 1] + nc.alphas[None, :])) < 1e-9
    assert np.max(np.abs(nc.grid[len(nc.svals) // 2] -
                         np.stack([np.zeros(9), -nc.alphas], axis=-1))) < 1e-12


def test_normal_chart_pushed_frame_form():
    tb = M.tangency_basic()
    curve = G.ParamCurve(lambda s: np.array([0.0, -s]),
                         lambda s: np.array([0.0, -1.0]))
    nc = C.build_normal_chart(tb, curve, s_range=0.3, n_grid=9,
                              alphas=np.linspace(-0.8, -0.2, 7))
    inner = nc.pushed_frame[1:-1, 1:-1]
    assert np.max(np.abs(inner[..., 0, :] - np.array([1.0, 0.0]))) < 1e-6
    assert np.max(np.abs(inner[..., 1, 0])) < 1e-6


def test_normal_chart_curved_transversal():
    # genuinely curved case: slanted transversal on the round sphere chart
    rs = M.round_sphere_chart()
    curve = G.ParamCurve(lambda s: np.array([0.1 * s * s, s]),
                         lambda s: np.array([0.2 * s, 1.0]))
    nc = C.build_normal_chart(rs, curve, s_range=0.3, n_grid=9,
                              alphas=np.linspace(-0.5, 0.5, 9))
    inner = nc.pushed_frame[1:-1, 1:-1]
    assert np.max(np.abs(inner[..., 0, :] - np.array([1.0, 0.0]))) < 1e-5
    assert np.max(np.abs(inner[..., 1, 0])) < 1e-5


def test_normal_chart_transversality_error():
    tb = M.tangency_basic()
    # the parabola itself is tangent to Delta at the origin
    curve = G.ParamCurve(lambda s: np.array([s, s * s]),
                         lambda s: np.array([1.0, 2.0 * s]))
    with pytest.raises(C.ClassifyError):
        C.build_normal_chart(tb, curve, s_range=0.1, n_grid=5,
                             alphas=np.linspace(-0.1, 0.1, 5))
