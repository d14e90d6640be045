import json
import math

import numpy as np
import pytest

from frep.experiments import (
    ExperimentConfig,
    build_target,
    check_A_conditions,
    closure_gap,
    compare_to_limit,
    derive_seed,
    ecdf_table,
    estimate_extremal_index,
    generic_anchor,
    geometric_test,
    limit_laws,
    mean_hitting_scaling,
    periodic_theta,
    run_repp,
)
from frep.laws import LawSpec, sample_waiting
from frep.lsv import MapParams, build_boundary_table, point_from_word
from frep.targets import cylinder_of_point

# Darling-Kac constant for p = 2 measured once (a_n / sqrt(n) over n in [1e2, 1e6])
FAST = dict(scaling=(1.23, 0.5), measure_steps=2 * 10**6, trials=2000, table_size=20_000)


@pytest.fixture(scope="module")
def p2():
    P = MapParams(2.0)
    return P, build_boundary_table(P, 20_000)


@pytest.fixture(scope="module")
def generic_report():
    return run_repp(ExperimentConfig(master_seed=3, depth_grid=(4, 8), d_max=2, **FAST))


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert c.alpha == 0.5 and c.depth_grid == (4, 6, 8)

    @pytest.mark.parametrize(
        "kw", [dict(point_class="odd"), dict(mode="both"), dict(p=0.5), dict(d_max=0), dict(horizon=0.1)]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_anchor_defaults(self):
        assert ExperimentConfig(point_class="periodic").anchor == (0,)
        assert ExperimentConfig(point_class="preimage").anchor == ()

    def test_derive_seed(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert len({derive_seed(1, k) for k in range(100)}) == 100


class TestAnchor:
    def test_explicit(self):
        assert generic_anchor(ExperimentConfig(anchor=0.7)) == 0.7

    def test_seeded_draw_is_usable(self, p2):
        P, t = p2
        for seed in range(20):
            cfg = ExperimentConfig(master_seed=seed, depth_grid=(4, 12))
            x = generic_anchor(cfg, P, t)
            assert 0.5 <= x <= 1.0
            cylinder_of_point(P, t, x, 12)
            assert x == generic_anchor(cfg, P, t)

    def test_targets_nest(self, p2):
        P, t = p2
        cfg = ExperimentConfig(master_seed=7, depth_grid=(4, 8, 12))
        tg = [build_target(cfg, P, t, n) for n in cfg.depth_grid]
        for a, b in zip(tg, tg[1:]):
            assert a.lo <= b.lo and b.hi <= a.hi


class TestLaws:
    def test_generic(self):
        first, wait = limit_laws(ExperimentConfig())
        assert first == LawSpec("ML_H", 0.5, math.gamma(1.5)) == wait

    def test_periodic(self):
        cfg = ExperimentConfig(point_class="periodic")
        first, wait = limit_laws(cfg, theta=0.5)
        assert first.tag == "W_mix" and first.theta == 0.5
        assert first.lam == pytest.approx(0.5 * math.gamma(1.5))
        hit, _ = limit_laws(ExperimentConfig(point_class="periodic", mode="hitting"), theta=0.5)
        assert hit.tag == "ML_H" and hit.lam == pytest.approx(0.5 * math.gamma(1.5))

    def test_preimage(self):
        first, wait = limit_laws(ExperimentConfig(point_class="preimage"), q_hat=0.25)
        assert first.tag == "DRPP_J" and first.tau == 0.25 and first.v == pytest.approx(0.0625)
        assert not first.delayed and not wait.delayed
        hit, _ = limit_laws(ExperimentConfig(point_class="preimage", mode="hitting"), q_hat=0.25)
        assert hit.delayed

    def test_barely_infinite(self):
        assert limit_laws(ExperimentConfig(p=1.0))[0] == LawSpec("Exp", 1.0, 1.0)
        first, _ = limit_laws(ExperimentConfig(p=1.0, point_class="periodic"), theta=0.5)
        assert first.tag == "W_mix" and first.lam == 0.5

    def test_periodic_theta(self):
        assert periodic_theta(MapParams(2.0), (0,)) == 0.5
        _, d = point_from_word(MapParams(2.0), (1, 0), "periodic")
        assert periodic_theta(MapParams(2.0), (1, 0)) == pytest.approx(1 - 1 / d)


class TestHelpers:
    def test_geometric_accepts(self):
        marks = np.random.default_rng(0).geometric(0.5, 20000)
        assert geometric_test(marks, 0.5)["p_value"] > 0.01

    def test_geometric_rejects(self):
        marks = np.random.default_rng(0).geometric(0.3, 20000)
        assert geometric_test(marks, 0.5)["p_value"] < 1e-6

    def test_ecdf_table(self):
        x = np.array([0.5, 1.0, np.inf, 3.0])
        tab = ecdf_table(x, 4.0, points=5)
        assert tab[:, 1].tolist() == [0.0, 0.5, 0.5, 0.75, 0.75]
        assert np.all(np.diff(tab[:, 1]) >= 0)

    def test_closure_gap(self):
        rng = np.random.default_rng(1)
        a = 0.5
        ret = sample_waiting(a, math.gamma(1 + a), 1.0, rng, 10**5)
        hit = sample_waiting(a, math.gamma(1 + a), 1.0, rng, 10**5)
        assert closure_gap(ret, hit, a, 5.0) < 0.015
        # an exponential hitting law does not close against ML returns
        assert closure_gap(ret, rng.exponential(size=10**5), a, 5.0) > 0.05


class TestRepp:
    def test_structure(self, generic_report):
        d = generic_report.to_dict()
        assert d["schema"] == "frep-report-v1"
        assert "workers" not in d["config"]
        assert [r["depth"] for r in d["depths"]] == [4, 8]
        json.dumps(d)

    def test_distances_shrink(self, generic_report):
        ks = [r.ks for r in generic_report.depths]
        assert ks[1] < ks[0] + generic_report.depths[0].ks_noise

    def test_events_ordered(self, generic_report):
        ev = generic_report.samples[8]["events"]
        both = np.isfinite(ev[:, 1])
        assert np.all(ev[both, 1] > ev[both, 0])

    def test_joint_gap_reported(self, generic_report):
        for r in generic_report.depths:
            assert set(r.joint_gap) == {"joint", "product", "se", "gap"}

    def test_compare_to_limit(self, generic_report):
        out = compare_to_limit(generic_report, LawSpec("ML_H", 0.5, math.gamma(1.5)))
        assert out["depth"] == 8 and out["ks"] == pytest.approx(generic_report.depths[-1].ks)
        assert "within_3se" in out["joint"]

    def test_worker_invariance(self):
        cfg = dict(master_seed=2, depth_grid=(4, 6), **FAST)
        a = run_repp(ExperimentConfig(workers=1, **cfg)).to_dict()
        b = run_repp(ExperimentConfig(workers=3, **cfg)).to_dict()
        assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)

    def test_periodic_small(self):
        rep = run_repp(ExperimentConfig(point_class="periodic", master_seed=2, depth_grid=(6,), d_max=2, **FAST))
        r = rep.depths[0]
        assert abs(r.theta_hat - 0.5) < 0.05
        assert r.multiplicity["p_value"] > 0.01

    def test_too_few_trials(self):
        with pytest.raises(ValueError):
            run_repp(ExperimentConfig(trials=10))


class TestConditions:
    def test_extremal_index(self, p2):
        P, t = p2
        rows = estimate_extremal_index(P, t, (0,), [6, 8], 2 * 10**6, seed=1)
        assert all(0 <= r["theta_hat"] <= 1 for r in rows)
        assert abs(rows[-1]["theta_hat"] - 0.5) < 0.05

    def test_extremal_index_period_two(self, p2):
        P, t = p2
        _, d = point_from_word(P, (0, 1), "periodic")
        rows = estimate_extremal_index(P, t, (0, 1), [8, 10], 4 * 10**6, seed=2)
        assert abs(rows[-1]["theta_hat"] - (1 - 1 / d)) < 0.05

    def test_fixed_point_proxies(self):
        cfg = ExperimentConfig(point_class="periodic", depth_grid=(4, 8), master_seed=1, **FAST)
        rows = check_A_conditions(cfg, starts=3000)
        assert all(r["A5"] == 0.0 for r in rows)
        assert rows[-1]["A2"] == "structural, not tested"

    def test_generic_proxies(self):
        cfg = ExperimentConfig(master_seed=7, depth_grid=(4, 8, 12), **FAST)
        rows = check_A_conditions(cfg, starts=3000)
        med = [r["A3_median"] for r in rows]
        assert med[0] > med[1] > med[2]
        # escapes from the annulus before tau_n are rare at every depth
        assert max(r["A4"] for r in rows) < 0.01


class TestBarelyInfinite:
    def test_mean_hitting(self):
        cfg = ExperimentConfig(p=1.0, scaling=(2.0, 1.0), measure_steps=2 * 10**6, table_size=20_000)
        out = mean_hitting_scaling(cfg, 1000, steps=2 * 10**6)
        assert out["inv_mean_hitting"] > 0 and math.isfinite(out["ratio"])
