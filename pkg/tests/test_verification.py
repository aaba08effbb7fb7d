import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from muskatlab import verification as v
from muskatlab.quadrature import FINE, REFERENCE, QuadratureSpec
from muskatlab.spectral_core import Grid, lipschitz_norm, transform

G = Grid(32, 8.0)


def test_report_passes_only_if_every_check_does():
    rep = v.SuiteReport("x")
    assert rep.passed
    rep.add("b", 1.0, 2.0, True)
    rep.add("a", np.float64(3.0), 2.0, False, detail="too big")
    assert not rep.passed
    assert isinstance(rep.checks[1].value, float)


@given(st.lists(st.booleans(), max_size=8))
def test_report_passed_is_conjunction(flags):
    rep = v.SuiteReport("p")
    for i, f in enumerate(flags):
        rep.add(f"c{i}", i, 1.0, f)
    assert rep.passed == all(flags)


def test_report_json_is_sorted_and_complete():
    rep = v.SuiteReport("s")
    rep.add("zeta", 0.5, 1.0, True, slope=1.9)
    rep.add("alpha", 2.0, 1.0, False)
    body = json.loads(rep.to_json())
    assert body["suite"] == "s" and body["passed"] is False
    assert body["thresholds_version"] == v.THRESHOLDS_VERSION
    assert [c["name"] for c in body["checks"]] == ["alpha", "zeta"]
    assert body["checks"][1]["slope"] == 1.9


def test_report_table_marks_failures():
    rep = v.SuiteReport("t")
    rep.add("good", 0.1, 1.0, True)
    rep.add("bad", 5.0, 1.0, False, resolution="fine")
    lines = rep.table().splitlines()
    assert lines[0] == "suite t: FAIL"
    assert lines[1].startswith("  BAD bad") and "[fine]" in lines[1]
    assert lines[2].startswith("  ok  good")


def test_thresholds_cover_every_suite_prefix():
    prefixes = {k.split(".")[0] for k in v.THRESHOLDS}
    assert {"identities", "kernels", "weights", "symmetry", "energy", "decay", "convergence"} <= prefixes
    assert all(math.isfinite(t) for t in v.THRESHOLDS.values())


def test_field_family_is_deterministic_and_normalized():
    a = v.field_family(G, 5, count=3, lip=0.3)
    b = v.field_family(G, 5, count=3, lip=0.3)
    c = v.field_family(G, 6, count=3, lip=0.3)
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)
    assert not np.allclose(a[0].values, c[0].values)
    for f in a:
        F = transform(f)
        assert abs(F.coeffs[0, 0]) < 1e-15
        assert lipschitz_norm(F) == pytest.approx(0.3, rel=1e-12)


def test_field_family_band_limited():
    f = v.field_family(G, 1, count=1, kmax_frac=0.25)[0]
    F = transform(f)
    assert np.all(np.abs(F.coeffs[G.kint > 0.25 * G.n]) < 1e-14)


def test_suite_config_families_are_disjoint():
    cfg = v.SuiteConfig(grid=G, family_size=2)
    a, b = cfg.family("A"), cfg.family("B")
    assert len(a) == len(b) == 2
    assert not np.allclose(a[0].values, b[0].values)


def test_suite_config_resolution():
    assert v.SuiteConfig().quad == REFERENCE
    assert v.SuiteConfig(resolution="fine").quad == FINE
    with pytest.raises(ValueError, match="resolution"):
        v.SuiteConfig(resolution="coarse").quad


def test_run_suite_rejects_unknown_name():
    with pytest.raises(ValueError, match="unknown suite"):
        v.run_suite("nope")


def _fake_runs(monkeypatch, cut):
    seen = []

    def fake(cfg, amp, t_end=None):
        seen.append(amp)
        ok = amp <= cut
        return v.DecayOutcome(amp, ok, not ok, 0.0 if ok else 0.1, amp, amp)

    monkeypatch.setattr(v, "decay_run", fake)
    return seen


def test_bisection_brackets_the_cut(monkeypatch):
    seen = _fake_runs(monkeypatch, 0.7)
    bis = v.decay_bisection(v.SuiteConfig(), lo=1e-3, hi=30.0, steps=20)
    assert bis.found
    a, b = bis.bracket
    assert a <= 0.7 < b and b / a < 1.0 + 1e-4
    assert bis.threshold == a
    assert seen[:2] == [1e-3, 30.0]


def test_bisection_reports_lower_bound_when_top_decays(monkeypatch):
    _fake_runs(monkeypatch, math.inf)
    bis = v.decay_bisection(v.SuiteConfig(), lo=1e-3, hi=30.0)
    assert not bis.found and bis.threshold == 30.0 and len(bis.runs) == 2


def test_bisection_stops_when_bottom_fails(monkeypatch):
    _fake_runs(monkeypatch, 0.0)
    bis = v.decay_bisection(v.SuiteConfig(), lo=1e-3, hi=30.0)
    assert bis.found and bis.threshold == 0.0 and len(bis.runs) == 1


def test_growth_probe_scales_amplitude(monkeypatch):
    _fake_runs(monkeypatch, 1.0)
    assert v.growth_probe(v.SuiteConfig(), 2.0).amplitude == 20.0


def test_small_decay_run_is_monotone():
    cfg = v.SuiteConfig(decay_grid=Grid(16, 8.0), decay_quad=QuadratureSpec(8, 4))
    out = v.decay_run(cfg, 1e-3, t_end=0.5)
    assert out.nonincreasing and not out.lip_growth
    assert out.max_A_increase <= 0.0


def test_symmetry_suite_small_grid():
    rep = v.suite_symmetry(v.SuiteConfig(grid=G, family_size=1))
    assert rep.passed, rep.table()
