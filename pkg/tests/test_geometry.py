import json

import numpy as np
import pytest

from genalpha.geometry import (BUILTIN, ConformityError, Domain, GeometryError, Interface, MultiPatchSpace,
                               Patch, discretization_space, eval_map, face_indices, get_domain, quarter_annulus,
                               ring, singular_sector, two_squares, unit_square, validate_geometry)
from genalpha.splines import SplineSpace


def test_identity_map():
    patch = unit_square()
    pts = np.random.default_rng(0).random((20, 2))
    x, J, det = eval_map(patch, pts)
    np.testing.assert_allclose(x, pts, atol=1e-14)
    np.testing.assert_allclose(J, np.broadcast_to(np.eye(2), J.shape), atol=1e-14)
    np.testing.assert_allclose(det, 1.0)


def test_quarter_annulus_jacobian_matches_finite_differences():
    patch = quarter_annulus()
    pts = np.array([[0.2, 0.3], [0.7, 0.9], [0.5, 0.5]])
    x, J, _ = eval_map(patch, pts)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (eval_map(patch, pts + e)[0] - eval_map(patch, pts - e)[0]) / (2 * h)
        np.testing.assert_allclose(J[:, :, k], fd, atol=1e-7)
    r = np.linalg.norm(x, axis=1)
    assert np.all((r > 0.99) & (r < 2.01))


def test_validate_geometry_reports_singularity():
    rep = validate_geometry(singular_sector())
    assert rep.singular
    assert not validate_geometry(quarter_annulus()).singular


def test_inverted_map_rejected():
    p = unit_square()
    flipped = Patch(p.space, p.control * np.array([-1.0, 1.0]))
    with pytest.raises(GeometryError):
        validate_geometry(flipped)


def test_control_net_shape_checked():
    with pytest.raises(GeometryError):
        Patch(SplineSpace.uniform(1, 1, dim=2), np.zeros((3, 2)))


def test_face_indices():
    idx = face_indices((3, 4), 0)
    np.testing.assert_array_equal(idx, [0, 3, 6, 9])
    np.testing.assert_array_equal(face_indices((3, 4), 3), [9, 10, 11])


def test_two_squares_gluing():
    mp = two_squares().discretize(2, 3)
    assert mp.size == 2 * 25 - 5
    assert mp.n_adj == 2
    shared = [s for s in mp.dof_sets() if len(s) == 2]
    assert len(shared) == 5


def test_ring_numbering():
    mp = ring().discretize(2, 3)
    assert mp.n_adj == 4
    assert mp.size == 81
    # every patch has the same number of local functions
    assert {l2g.size for l2g in mp.local_to_global} == {25}


def test_interface_continuity_of_global_functions():
    """A global coefficient vector yields equal traces from both sides of every interface."""
    from genalpha.splines import tensor_eval
    mp = ring().discretize(2, 4)
    c = np.random.default_rng(1).standard_normal(mp.size)
    for itf in mp.interfaces:
        for s in np.linspace(0, 1, 5):
            vals = []
            for r, face, t in ((itf.patch_a, itf.face_a, s), (itf.patch_b, itf.face_b, 1 - s if itf.flip and itf.flip[0] else s)):
                k, side = divmod(face, 2)
                pt = np.empty(2)
                pt[k] = float(side)
                pt[1 - k] = t
                act = tensor_eval(mp.spaces[r], pt)
                vals.append(act.values @ c[mp.local_to_global[r][act.flat]])
            assert abs(vals[0] - vals[1]) < 1e-12


def test_nonconforming_knots_rejected():
    a = unit_square()
    b = Patch(a.space, a.control + np.array([1.0, 0.0]))
    sa = discretization_space(a, 2, 4)
    sb = discretization_space(b, 2, 3)
    with pytest.raises(ConformityError) as err:
        MultiPatchSpace([a, b], [sa, sb], [Interface(0, 1, 1, 0)])
    assert err.value.pair == (0, 1)


def test_mismatched_geometry_rejected():
    a = unit_square()
    b = Patch(a.space, a.control + np.array([1.0, 0.1]))
    s = discretization_space(a, 2, 4)
    with pytest.raises(ConformityError):
        MultiPatchSpace([a, b], [s, s], [Interface(0, 1, 1, 0)])


def test_domain_json_roundtrip(tmp_path):
    dom = ring()
    path = tmp_path / "ring.json"
    dom.save(path)
    json.loads(path.read_text())
    back = get_domain(str(path))
    assert len(back.patches) == 4
    for p, q in zip(dom.patches, back.patches):
        np.testing.assert_allclose(p.control, q.control)
    assert back.discretize(2, 3).size == dom.discretize(2, 3).size


def test_interface_dict_roundtrip():
    itf = Interface(0, 1, 2, 3, flip=(True,), swap=False)
    assert Interface.from_dict(itf.to_dict()) == itf


def test_unknown_geometry():
    with pytest.raises(KeyError):
        get_domain("teapot")
    assert "quarter_annulus" in BUILTIN
    assert isinstance(get_domain({"name": "quarter_annulus", "r_outer": 3.0}), Domain)
