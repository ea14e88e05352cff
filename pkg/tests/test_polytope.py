"""Region representation, redundancy pruning, vertex preservation."""

import numpy as np
import pytest

from drrcalc.errors import EmptyRegionError, ZeroNormal
from drrcalc.polytope import (FacetProvenance, Polytope, box,
                              chebyshev_center, remove_redundant)


def _tags(n, kind="Cut"):
    return tuple(FacetProvenance(kind, iteration=i) for i in range(n))


def unit_square():
    return box([0.0, 0.0], [1.0, 1.0],
               [FacetProvenance("InitialBox", farm=i, bound="upper") for i in range(2)],
               [FacetProvenance("InitialBox", farm=i, bound="lower") for i in range(2)])


def test_rows_are_normalized():
    W = Polytope(H=[[3.0, 4.0]], f=[10.0], provenance=_tags(1))
    assert np.linalg.norm(W.H[0]) == pytest.approx(1.0)
    assert W.f[0] == pytest.approx(2.0)


def test_zero_normal_rejected():
    with pytest.raises(ZeroNormal):
        Polytope(H=[[0.0, 0.0]], f=[1.0], provenance=_tags(1))


def test_contains_and_box_bounds():
    W = unit_square()
    assert W.contains([0.5, 0.5])
    assert not W.contains([1.5, 0.5])
    lo, hi = W.box_bounds()
    assert lo == pytest.approx([0.0, 0.0])
    assert hi == pytest.approx([1.0, 1.0])


def test_duplicate_facet_removed():
    W = unit_square().with_rows(np.array([[1.0, 0.0]]), np.array([2.0]),
                                [FacetProvenance("Cut", iteration=9)])
    R = remove_redundant(W)
    assert R.n_facets == 4
    assert all(p.kind == "InitialBox" for p in R.provenance)


def test_pruning_keeps_provenance_of_survivors():
    W = unit_square().with_rows(np.array([[1.0, 1.0]]), np.array([1.2]),
                                [FacetProvenance("Cut", iteration=1)])
    R = remove_redundant(W)
    labels = [p.label() for p in R.provenance]
    assert "cut from iteration 1" in labels
    assert R.n_facets == 5


def test_empty_region_detected():
    W = Polytope(H=[[1.0], [-1.0]], f=[-2.0, 1.0], provenance=_tags(2))
    with pytest.raises(EmptyRegionError):
        remove_redundant(W)


def _vertices_bruteforce(W):
    pts = []
    for i in range(W.n_facets):
        for j in range(i + 1, W.n_facets):
            M = np.vstack([W.H[i], W.H[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, np.array([W.f[i], W.f[j]]))
            if W.contains(v, tol=1e-9):
                pts.append(tuple(np.round(v, 8)))
    return set(pts)


def test_random_pruning_preserves_vertex_set():
    rng = np.random.default_rng(11)
    for _ in range(20):
        k = rng.integers(5, 12)
        H = rng.normal(size=(k, 2))
        f = rng.uniform(0.5, 2.0, size=k)  # contains the origin: never empty
        W = Polytope(H=H, f=f, provenance=_tags(k))
        R = remove_redundant(W)
        assert _vertices_bruteforce(W) == _vertices_bruteforce(R)
        # Removed rows are certified redundant: every kept-region vertex obeys them.
        for v in _vertices_bruteforce(R):
            assert W.contains(np.array(v), tol=1e-6)


def test_chebyshev_center_of_square():
    c, r = chebyshev_center(unit_square())
    assert c == pytest.approx([0.5, 0.5], abs=1e-9)
    assert r == pytest.approx(0.5, abs=1e-9)
