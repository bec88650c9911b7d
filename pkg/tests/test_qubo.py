import itertools
import json

import numpy as np
import pytest

from routequbo.qubo import (
    LinearExpr,
    QuboModel,
    add_equality_penalty,
    add_inequality_penalty,
    energy,
    load_model,
    model_from_dict,
    model_to_dict,
    new_model,
    save_model,
    slack_width,
    stats,
    to_ising,
)


def brute_energy(offset, linear, quadratic, bits):
    """Reference evaluation straight from the coefficient dictionaries."""
    e = offset
    for i, c in linear.items():
        e += c * bits[i]
    for (i, j), c in quadratic.items():
        e += c * bits[i] * bits[j]
    return e


def all_bits(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


def random_model(rng, n, density=0.5):
    m = new_model(n)
    for i in range(n):
        m.add_linear(i, rng.normal())
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < density:
            m.add_quadratic(i, j, rng.normal())
    m.add_offset(rng.normal())
    return m.freeze()


class TestQuboModel:
    def test_empty_model_energy_is_offset(self):
        m = new_model(3)
        m.add_offset(2.5)
        assert m.energy([0, 1, 1]) == 2.5

    def test_diagonal_folds_into_linear(self):
        m = new_model(2)
        m.add_quadratic(1, 1, 3.0)
        assert m.linear == {1: 3.0}
        assert m.quadratic == {}

    def test_pairs_are_canonical_and_merged(self):
        m = new_model(3)
        m.add_quadratic(2, 0, 1.0)
        m.add_quadratic(0, 2, 0.5)
        assert m.quadratic == {(0, 2): 1.5}

    def test_cancelled_pairs_are_not_counted(self):
        m = new_model(3)
        m.add_quadratic(0, 1, 1.0)
        m.add_quadratic(1, 0, -1.0)
        assert stats(m).n_quadratic == 0

    def test_index_out_of_range(self):
        m = new_model(2)
        with pytest.raises((IndexError, ValueError)):
            m.add_linear(2, 1.0)

    def test_non_finite_coefficient(self):
        m = new_model(2)
        with pytest.raises(ValueError):
            m.add_linear(0, float("nan"))

    def test_frozen_model_rejects_terms(self):
        m = new_model(2).freeze()
        with pytest.raises(Exception):
            m.add_linear(0, 1.0)

    def test_energy_length_mismatch(self):
        m = new_model(3)
        with pytest.raises(ValueError):
            m.energy([0, 1])

    def test_energy_matches_reference(self):
        rng = np.random.default_rng(1)
        m = random_model(rng, 8)
        bits = all_bits(8)
        ref = [brute_energy(m.offset, m.linear, m.quadratic, b) for b in bits]
        np.testing.assert_allclose(m.energies(bits), ref, atol=1e-12)
        np.testing.assert_allclose([energy(m, b) for b in bits], ref, atol=1e-12)

    def test_family_split_sums_to_energy(self):
        m = new_model(3)
        m.add_linear(0, 1.0, "a")
        m.add_quadratic(0, 1, -2.0, "b")
        m.add_linear(2, 0.25)
        m.freeze()
        for b in all_bits(3):
            parts = m.family("a").energy(b) + m.family("b").energy(b) + 0.25 * b[2]
            assert m.energy(b) == pytest.approx(parts, abs=1e-12)

    def test_stats(self):
        m = new_model(4)
        m.add_linear(0, 1.0)
        m.add_quadratic(1, 2, 1.0)
        s = stats(m)
        assert (s.n_vars, s.n_linear, s.n_quadratic) == (4, 1, 1)

    def test_add_variables_extends_range(self):
        m = new_model(2)
        r = m.add_variables(3)
        assert list(r) == [2, 3, 4]
        assert m.n_vars == 5


class TestEqualityPenalty:
    def test_matches_squared_expression(self):
        expr = LinearExpr({0: 1.0, 1: 2.0, 2: -1.0}, -1.0)
        m = new_model(3)
        add_equality_penalty(m, expr, 3.0)
        for b in all_bits(3):
            assert m.energy(b) == pytest.approx(3.0 * expr.evaluate(b) ** 2, abs=1e-12)

    def test_one_hot_zero_exactly_on_single_bit(self):
        m = new_model(4)
        add_equality_penalty(m, LinearExpr.ones(range(4), -1.0), 1.0)
        for b in all_bits(4):
            assert (m.energy(b) == 0) == (b.sum() == 1)

    @pytest.mark.parametrize("w", [0.0, -1.0, float("inf")])
    def test_rejects_bad_weight(self, w):
        with pytest.raises(ValueError):
            add_equality_penalty(new_model(1), LinearExpr({0: 1.0}), w)


class TestInequalityPenalty:
    @pytest.mark.parametrize("gap,width", [(0, 0), (1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4)])
    def test_slack_width(self, gap, width):
        assert slack_width(gap) == width

    def test_zero_exactly_when_satisfied(self):
        # 2 x0 + 3 x1 + x2 <= 3
        expr = LinearExpr({0: 2.0, 1: 3.0, 2: 1.0})
        m = new_model(3)
        slack = add_inequality_penalty(m, expr, 3, 1.0)
        assert len(slack) == slack_width(3)
        for b in all_bits(3):
            best = min(
                m.energy(np.concatenate([b, np.array(s, dtype=np.int8)]))
                for s in itertools.product((0, 1), repeat=len(slack))
            )
            satisfied = expr.evaluate(b) <= 3
            assert (best == 0) == satisfied
            if not satisfied:
                assert best >= 1.0

    def test_custom_slack_allocator_and_gap(self):
        m = new_model(5)
        got = add_inequality_penalty(m, LinearExpr({0: 1.0, 1: -1.0}), 0, 1.0,
                                     slack_alloc=lambda k: [2, 3, 4][:k], max_gap=3)
        assert list(got) == [2, 3]
        assert m.n_vars == 5

    def test_rejects_fractional_coefficients(self):
        with pytest.raises(ValueError):
            add_inequality_penalty(new_model(1), LinearExpr({0: 0.5}), 1, 1.0)

    def test_rejects_negative_bound(self):
        with pytest.raises(ValueError):
            add_inequality_penalty(new_model(1), LinearExpr({0: 1.0}), -1, 1.0)

    def test_rejects_infeasible(self):
        with pytest.raises(ValueError):
            add_inequality_penalty(new_model(1), LinearExpr({0: 1.0}, 5.0), 2, 1.0)


class TestIsing:
    def test_spin_energies_match(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, 6)
        ising = to_ising(m)
        for b in all_bits(6):
            assert ising.energy(1 - 2 * b.astype(int)) == pytest.approx(m.energy(b), abs=1e-9)

    def test_single_linear_term(self):
        m = new_model(1)
        m.add_linear(0, 2.0)
        ising = to_ising(m)
        # 2x = 2(1 - z)/2 = 1 - z
        assert ising.offset == pytest.approx(1.0)
        assert ising.h == {0: pytest.approx(-1.0)}


class TestJson:
    def test_round_trip_with_families(self, tmp_path):
        m = new_model(3)
        add_equality_penalty(m, LinearExpr.ones([0, 1, 2], -1.0), 2.0, "one_hot")
        m.add_linear(0, 0.5, "objective")
        m.freeze()
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert back.families == m.families
        for b in all_bits(3):
            assert back.energy(b) == pytest.approx(m.energy(b))
            assert back.family("one_hot").energy(b) == pytest.approx(m.family("one_hot").energy(b))

    def test_inconsistent_families_rejected(self):
        m = new_model(2)
        m.add_linear(0, 1.0, "a")
        doc = model_to_dict(m.freeze())
        doc["linear"] = [[0, 2.0]]
        with pytest.raises(ValueError):
            model_from_dict(doc)

    def test_malformed_document(self):
        with pytest.raises(ValueError):
            model_from_dict({"linear": []})

    def test_document_is_json(self):
        m = new_model(2)
        m.add_quadratic(0, 1, 1.0)
        json.dumps(model_to_dict(m.freeze()))

    def test_model_is_quadratic_container(self):
        assert isinstance(new_model(0), QuboModel)
