import numpy as np
import pytest

from arsurf import models as M

ALL_BUILTINS = ["grushin", "euclidean", "round_sphere_chart", "f2_normal",
                "f3_normal", "tangency_basic", "tangency_cubic", "sphere2"]


def test_eval_frame_grushin():
    g = M.grushin()
    f1, f2 = M.eval_frame(g, (2.0, 5.0))
    assert np.allclose(f1, [1, 0])
    assert np.allclose(f2, [0, 2])
    f1, f2 = M.eval_frame(g, (0.0, 0.0))
    assert np.allclose(f2, [0, 0])


def test_eval_frame_on_parabola():
    tb = M.tangency_basic()
    _, f2 = M.eval_frame(tb, (1.0, 1.0))
    assert np.allclose(f2, [0, 0])


def test_lie_bracket_values():
    g = M.grushin()
    assert np.allclose(M.lie_bracket(g, (0.0, 0.0)), [0, 1])
    assert np.allclose(M.lie_bracket(g, (0.3, -2.0), (1, 1)), [0, 0])
    tb = M.tangency_basic()
    assert np.allclose(M.lie_bracket(tb, (0.0, 0.0)), [0, 0])


def test_lie_bracket_against_finite_differences():
    # independent oracle: [F1,F2] = d/dt of the commutator flow expansion,
    # here via direct FD of the frame fields
    rng = np.random.default_rng(1)
    for name in ("grushin", "tangency_cubic", "sphere2"):
        model = M.builtin(name)
        for _ in range(10):
            q = rng.uniform(-1.2, 1.2, 2)
            h = 1e-6
            f1, f2 = model.frame(q)
            j2x = (model.frame(q + [h, 0])[1] - model.frame(q - [h, 0])[1]) / (2 * h)
            j2y = (model.frame(q + [0, h])[1] - model.frame(q - [0, h])[1]) / (2 * h)
            j1x = (model.frame(q + [h, 0])[0] - model.frame(q - [h, 0])[0]) / (2 * h)
            j1y = (model.frame(q + [0, h])[0] - model.frame(q - [0, h])[0]) / (2 * h)
            br_fd = (np.column_stack([j2x, j2y]) @ f1
                     - np.column_stack([j1x, j1y]) @ f2)
            assert np.allclose(M.lie_bracket(model, q), br_fd, atol=1e-8)


def test_metric_eval_grushin():
    g = M.grushin()
    rng = np.random.default_rng(2)
    for _ in range(50):
        x, y = rng.uniform(-3, 3, 2)
        if abs(x) < 1e-3:
            continue
        me = M.metric_eval(g, (x, y))
        assert np.allclose(me.g_matrix, [[1, 0], [0, 1 / x ** 2]])
    me = M.metric_eval(g, (3.0, 0.0))
    assert np.isclose(me.area_density, 1 / 3)
    assert me.area_sign == 1
    me0 = M.metric_eval(g, (0.0, 1.0))
    assert me0.singular and me0.g_matrix is None


def test_metric_eval_sphere2_equator():
    s2 = M.sphere2()
    # equator point with y != 0: chart-0 coordinates (x, y)/(1 - 0)
    w = np.array([0.6, 0.8])
    me = M.metric_eval(s2, M.Point2(w[0], w[1], 0))
    evals = np.linalg.eigvalsh(me.g_matrix)
    assert np.all(evals > 0)
    # Gram-inverse metric: |v|_g^2 = |A^-1 v|^2 for any v
    f1, f2 = s2.frame(w, 0)
    a = np.column_stack([f1, f2])
    v = np.array([0.3, -0.2])
    assert np.isclose(v @ me.g_matrix @ v, np.sum(np.linalg.solve(a, v) ** 2))


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_analytic_derivatives_match_fd(name):
    model = M.builtin(name)
    rng = np.random.default_rng(3)
    h = M.H_FD
    pts = rng.uniform(-2, 2, (1000, 2))
    if model.charts[0].radius is not None:
        pts = pts * 0.9
    f1px, f2px = model.frame(pts + [h, 0])
    f1mx, f2mx = model.frame(pts - [h, 0])
    f1py, f2py = model.frame(pts + [0, h])
    f1my, f2my = model.frame(pts - [0, h])
    j1, j2 = model.frame_jac(pts)
    for j, fpx, fmx, fpy, fmy in ((j1, f1px, f1mx, f1py, f1my),
                                  (j2, f2px, f2mx, f2py, f2my)):
        fd = np.stack([(fpx - fmx) / (2 * h), (fpy - fmy) / (2 * h)], axis=-1)
        assert np.max(np.abs(j - fd)) < 10 * h * h


def test_chart_overlap_consistency():
    s2 = M.sphere2()
    rng = np.random.default_rng(4)
    # overlap annulus
    r = rng.uniform(0.7, 1.4, 200)
    th = rng.uniform(0, 2 * np.pi, 200)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    jac = s2.transition_jac(pts, 0, 1)
    pts1 = s2.transition(pts, 0, 1)
    f1a, f2a = s2.frame(pts, 0)
    f1b, f2b = s2.frame(pts1, 1)
    push1 = np.einsum("nij,nj->ni", jac, f1a)
    push2 = np.einsum("nij,nj->ni", jac, f2a)
    assert np.max(np.abs(push1 - f1b)) < 1e-9
    assert np.max(np.abs(push2 - f2b)) < 1e-9
    # transition is an involution
    assert np.allclose(s2.transition(pts1, 1, 0), pts, atol=1e-12)


def test_g_matrix_spd_where_nonsingular():
    rng = np.random.default_rng(5)
    for name in ("grushin", "tangency_basic", "f3_normal"):
        model = M.builtin(name)
        for _ in range(100):
            q = rng.uniform(-2, 2, 2)
            me = M.metric_eval(model, q)
            if me.singular:
                continue
            evals = np.linalg.eigvalsh(me.g_matrix)
            assert np.all(evals > 0)
            assert np.isclose(me.area_density * abs(me.det_frame), 1.0)


def test_hormander_condition_on_grids():
    rng = np.random.default_rng(6)
    for name in ALL_BUILTINS:
        model = M.builtin(name)
        pts = rng.uniform(-1.5, 1.5, (400, 2))
        assert np.all(M.check_hormander(model, pts)), name


def test_f2_f3_parameter_validation():
    with pytest.raises(M.ModelError):
        M.f2_normal("y")  # phi(0, y) != 0 makes F2 nonzero on x = 0
    with pytest.raises(M.ModelError):
        M.f3_normal("x")  # psi(0) = 0


def test_from_json_builtin_and_custom(tmp_path):
    m = M.from_json({"model": "grushin"})
    assert m.name == "grushin"
    m2 = M.from_json({"model": "f2_normal", "params": {"phi": "x*y"}})
    f2 = m2.frame((2.0, 1.0))[1]
    assert np.isclose(f2[1], 2.0 * np.exp(2.0))
    custom = {"model": "custom",
              "charts": [{"F1": ["1", "0"], "F2": ["0", "y - x*x*x"]}]}
    p = tmp_path / "model.json"
    p.write_text(__import__("json").dumps(custom))
    m3 = M.from_json(str(p))
    assert np.isclose(m3.det_frame((2.0, 0.0)), -8.0)
    with pytest.raises(M.ModelError):
        M.from_json({"model": "nope"})


def test_out_of_chart_domain_error():
    s2 = M.sphere2()
    with pytest.raises(M.DomainError):
        s2.frame((10.0, 0.0), 0)


def test_orientation_sign_flips_area_sign():
    g1 = M.grushin()
    g2 = M.grushin(orientation_sign=-1)
    q = (0.7, 0.1)
    assert M.metric_eval(g1, q).area_sign == -M.metric_eval(g2, q).area_sign
