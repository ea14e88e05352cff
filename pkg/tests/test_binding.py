"""Perturbation-based binding-constraint identification."""

import numpy as np
import pytest

from drrcalc.binding import (ORIGIN_BOX, ORIGIN_PHYSICAL, identify,
                             probe_point, terminal_points)
from drrcalc.caseio import StudyConfig
from drrcalc.dispatch_model import feasibility_model
from drrcalc.engine import run
from drrcalc.errors import AmbiguousFacet, FacetInfeasible
from drrcalc.polytope import FacetProvenance, Polytope


@pytest.fixture(scope="module")
def two_result():
    from tests.conftest import load_case
    case = load_case("case2_ramp")
    cfg = StudyConfig()
    return case, cfg, run(case, cfg, method="milp")


@pytest.fixture(scope="module")
def pjm_result():
    from tests.conftest import load_case
    case = load_case("case5_wind")
    cfg = StudyConfig()
    return case, cfg, run(case, cfg, method="milp")


def unit_square():
    return Polytope(
        H=[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
        f=[1.0, 1.0, 0.0, 0.0],
        provenance=tuple(FacetProvenance("Cut", iteration=i) for i in range(4)))


def test_terminal_points_unit_square():
    w_u, w_l = terminal_points(unit_square(), 0, beta=np.array([1.0, 1.0]))
    assert w_u == pytest.approx([1.0, 1.0], abs=1e-9)
    assert w_l == pytest.approx([1.0, 0.0], abs=1e-9)


def test_terminal_points_1d_facet_is_point(two_result):
    _, _, res = two_result
    for i in range(res.region.n_facets):
        w_u, w_l = terminal_points(res.region, i)
        assert w_u == pytest.approx(w_l, abs=1e-9)


def test_terminal_points_infeasible_facet():
    W = unit_square()
    bogus = Polytope(H=np.vstack([W.H, [[1.0, 0.0]]]),
                     f=np.concatenate([W.f, [2.0]]),
                     provenance=W.provenance + (FacetProvenance("Cut", iteration=9),))
    with pytest.raises(FacetInfeasible):
        terminal_points(bogus, 4)


def test_probe_point_formula():
    # Midpoint 65, forecast 50: probe lands just outside at 65.15.
    probe = probe_point(np.array([65.0]), np.array([65.0]), np.array([50.0]),
                        lam=0.01)
    assert probe == pytest.approx([65.15], abs=1e-12)
    below = probe_point(np.array([45.0]), np.array([45.0]), np.array([50.0]),
                        lam=0.01)
    assert below == pytest.approx([44.95], abs=1e-12)
    fixed = probe_point(np.array([50.0]), np.array([50.0]), np.array([50.0]))
    assert fixed == pytest.approx([50.0], abs=1e-12)


def test_twobus_binding_sets(two_result):
    case, cfg, res = two_result
    w_bar = np.array(case.forecast_mw) / case.base_mva
    report = identify(res.model, res.region, w_bar, cfg)
    assert len(report.entries) == res.region.n_facets
    upper_expected = {"ramp-down limit of generator 1 at bus 1",
                      "ramp-down limit of generator 2 at bus 2"}
    lower_expected = {"ramp-up limit of generator 2 at bus 2",
                      "thermal limit of line 1-2 (forward)"}
    for e in report.entries:
        assert e.origin == ORIGIN_PHYSICAL
        labels = {b.label for b in e.bindings}
        assert labels
        if e.w_upper_mw[0] > 55.0:   # the w <= 65 facet
            assert labels <= upper_expected
        else:                        # the w >= 45 facet
            assert labels <= lower_expected


def test_probe_exteriority(two_result):
    case, cfg, res = two_result
    w_bar = np.array(case.forecast_mw) / case.base_mva
    lam = cfg.perturb_lambda
    for i in range(res.region.n_facets):
        w_u, w_l = terminal_points(res.region, i)
        mid = (w_u + w_l) / 2
        outside = probe_point(w_u, w_l, w_bar, lam)
        inside = mid - lam * (mid - w_bar)   # same step, pulled inward
        assert feasibility_model(res.model, outside).objective > 1e-9
        assert feasibility_model(res.model, inside).objective <= 1e-9


def test_pjm5_box_facets_identified(pjm_result):
    case, cfg, res = pjm_result
    w_bar = np.array(case.forecast_mw) / case.base_mva
    report = identify(res.model, res.region, w_bar, cfg)
    by_origin = {}
    for e in report.entries:
        by_origin.setdefault(e.origin, []).append(e)
    assert {e.provenance for e in by_origin[ORIGIN_BOX]} == {
        p.label() for p in res.region.provenance if p.kind == "InitialBox"}
    # Physical facets on this system trace back to line 4-5 or unit ramps.
    for e in by_origin[ORIGIN_PHYSICAL]:
        assert e.bindings
        for b in e.bindings:
            assert b.kind in ("FlowUpper", "FlowLower", "GenUpper", "GenLower")


def test_lambda_halving_stability(two_result, pjm_result):
    for case, cfg, res in (two_result, pjm_result):
        w_bar = np.array(case.forecast_mw) / case.base_mva
        full = identify(res.model, res.region, w_bar, cfg)
        halved_cfg = StudyConfig(perturb_lambda=cfg.perturb_lambda / 2)
        halved = identify(res.model, res.region, w_bar, halved_cfg)
        kinds_a = [sorted({b.kind for b in e.bindings}) for e in full.entries]
        kinds_b = [sorted({b.kind for b in e.bindings}) for e in halved.entries]
        assert kinds_a == kinds_b


def test_ambiguous_facet_raises_without_flag(two_result):
    case, cfg, res = two_result
    # A facet strictly inside the admissible band: its probe stays feasible
    # but no provenance or box bound explains it.
    loose = Polytope(H=[[1.0], [-1.0]], f=[0.64, -0.45],
                     provenance=(FacetProvenance("Cut", iteration=77),
                                 FacetProvenance("Cut", iteration=78)))
    w_bar = np.array(case.forecast_mw) / case.base_mva
    with pytest.raises(AmbiguousFacet):
        identify(res.model, loose, w_bar, cfg)
    report = identify(res.model, loose, w_bar, cfg, allow_unresolved=True)
    assert any(e.origin == "Unresolved" for e in report.entries)


def test_report_serialization(two_result):
    case, cfg, res = two_result
    w_bar = np.array(case.forecast_mw) / case.base_mva
    report = identify(res.model, res.region, w_bar, cfg)
    table = report.table()
    assert "facet" in table and "binding constraints" in table
    payload = report.to_json()
    assert payload["lambda"] == cfg.perturb_lambda
    assert len(payload["facets"]) == len(report.entries)


def test_ieee39_binding_all_facets_resolved():
    from tests.conftest import load_case
    case = load_case("case39_wind")
    cfg = StudyConfig()
    res = run(case, cfg, method="iblp")
    w_bar = np.array(case.forecast_mw) / case.base_mva
    report = identify(res.model, res.region, w_bar, cfg)
    assert len(report.entries) == res.region.n_facets
    origins = {e.origin for e in report.entries}
    assert origins <= {ORIGIN_PHYSICAL, ORIGIN_BOX}
    for e in report.entries:
        assert bool(e.bindings) == (e.origin == ORIGIN_PHYSICAL)
