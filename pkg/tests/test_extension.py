"""Extension engine: power-maximal lemma, B_1 and B_p extensions."""

import math

import numpy as np
import pytest

from discweights.extension import (
    extend_b1,
    extend_bp,
    power_maximal_b1,
    restriction_self_improve,
)
from discweights.weights import (
    DyadicDomain,
    TreeWeight,
    b1_constant,
    bp_constant,
    maximal_values,
    node_id,
    osc_constants,
    random_domain,
    random_log_walk,
)

from helpers import brute_maximal


def b1_instance(seed, depth=7):
    rng = np.random.default_rng(seed)
    w = random_log_walk(depth, rng=rng, sigma=0.7)
    om = random_domain(depth, rng=rng, density=0.5)
    return w, om


class TestPowerMaximal:
    def test_bound_is_exact_no_tolerance(self):
        rng = np.random.default_rng(50)
        for _ in range(25):
            w = random_log_walk(7, rng=rng, sigma=1.5)
            for gamma in (0.25, 0.5, 0.75):
                _, cert = power_maximal_b1(w, gamma)
                assert cert.measured <= cert.bound  # strict, no epsilon
                assert cert.bound == (2 - gamma) / (1 - gamma)

    def test_restricted_variant(self):
        w, om = b1_instance(51)
        for gamma in (0.25, 0.75):
            v, cert = power_maximal_b1(w, gamma, om)
            assert cert.measured <= cert.bound

    def test_gamma_range_enforced(self):
        w = TreeWeight.constant(1.0, 3)
        for gamma in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                power_maximal_b1(w, gamma)


class TestExtendB1:
    def test_small_instance_against_brute_force(self):
        w = TreeWeight.from_node_values(
            0, 2, [((0, 0), 2.0), ((1, 0), 1.0), ((1, 1), 4.0),
                   ((2, 0), 0.5), ((2, 3), 8.0)]
        )
        om = DyadicDomain.from_generators(0, 2, [(1, 0), (2, 3)])
        res = extend_b1(w.power(0.5), q=2.0, domain=om)
        # off-domain values are the maximal of (w^0.5)^2 chi to the 1/2
        ref = brute_maximal(w, om)  # w == (w^0.5)^2
        for k, j in [(0, 0), (1, 1), (2, 0), (2, 1), (2, 2)]:
            assert res.weight.value_at(k, j) == pytest.approx(
                math.sqrt(ref[(k, j)]), rel=1e-12
            )
        for k, j in [(1, 0), (2, 3)]:
            assert res.weight.value_at(k, j) == math.sqrt(w.value_at(k, j))

    def test_certificates_on_random_instances(self):
        for seed in range(15):
            w, om = b1_instance(seed)
            res = extend_b1(w, q=2.0, domain=om)
            bad = [c.as_dict() for c in res.certificates if not c.passed]
            assert res.ok, bad

    def test_agreement_is_bitwise(self):
        w, om = b1_instance(77)
        res = extend_b1(w, q=2.0, domain=om)
        assert np.array_equal(res.weight.values[om.mask], w.values[om.mask])

    def test_quotient_window(self):
        for seed in (3, 8, 21):
            w, om = b1_instance(seed)
            res = extend_b1(w, q=2.0, domain=om)
            assert res.diagnostics["k_max"] <= 4.0  # own-cell average bound
            assert res.diagnostics["k_min"] >= 1.0 / res.diagnostics["restricted_b1_of_wq"]

    def test_other_powers(self):
        w, om = b1_instance(12)
        for q in (1.5, 3.0):
            res = extend_b1(w, q=q, domain=om)
            assert res.ok, [c.as_dict() for c in res.certificates if not c.passed]


class TestExtendBp:
    def test_p_two_certificates(self):
        for seed in range(12):
            w, om = b1_instance(seed + 100)
            res = extend_bp(w, p=2.0, q=2.0, domain=om)
            bad = [c.as_dict() for c in res.certificates if not c.passed]
            assert res.ok, bad
            assert np.array_equal(res.weight.values[om.mask], w.values[om.mask])

    def test_bp_of_extension_under_m1(self):
        w, om = b1_instance(200)
        res = extend_bp(w, p=2.0, q=2.0, domain=om)
        assert bp_constant(res.weight, 2.0) <= res.diagnostics["m1_bound"]
        assert osc_constants(res.weight).l_const <= res.diagnostics["m2_bound"]

    def test_fractional_p(self):
        w, om = b1_instance(201)
        res = extend_bp(w, p=1.5, q=2.0, domain=om)
        assert res.ok, [c.as_dict() for c in res.certificates if not c.passed]

    def test_p_above_two_via_dual(self):
        w, om = b1_instance(202)
        res = extend_bp(w, p=3.0, q=2.0, domain=om)
        assert res.via_dual
        assert res.ok, [c.as_dict() for c in res.certificates if not c.passed]
        assert np.array_equal(res.weight.values[om.mask], w.values[om.mask])

    def test_rejects_endpoint(self):
        w, om = b1_instance(203)
        with pytest.raises(ValueError):
            extend_bp(w, p=1.0, q=2.0, domain=om)


class TestSelfImprove:
    def test_gentle_weight_improves(self):
        w, om = b1_instance(300)
        rep = restriction_self_improve(w, p=2.0, domain=om)
        assert rep.improved
        assert rep.q >= 1.125
        assert all(np.isfinite(v) for v in rep.bracket_table.values())

    def test_wild_weight_can_fail(self):
        rng = np.random.default_rng(301)
        depth = 6
        vals = np.exp(rng.uniform(-25, 25, 1 << (depth + 1)))
        w = TreeWeight(0, depth, vals)
        om = DyadicDomain.full(depth)
        rep = restriction_self_improve(w, p=2.0, domain=om)
        assert rep.q is None or rep.rh_weight[rep.q] <= rep.threshold

    def test_constant_weight_tops_the_grid(self):
        w = TreeWeight.constant(3.0, 5)
        om = DyadicDomain.full(5)
        rep = restriction_self_improve(w, p=2.0, domain=om)
        assert rep.q == 3.0  # top of the default grid
        assert rep.bracket_table[rep.q] == pytest.approx(1.0, abs=1e-12)
