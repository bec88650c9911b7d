import itertools
import math

import numpy as np
import pytest

from routequbo.decode import RouteSet, Tour, decode, max_route_length, tour_length
from routequbo.formulations import build_gps_tsp
from routequbo.instances import VrpConfig, random_euclidean, regular_polygon
from routequbo.qubo import LinearExpr, QuboModel, add_equality_penalty
from routequbo.solvers import (
    SaParams,
    feasible_scan,
    solve_exhaustive,
    solve_sa,
    solve_tsp_oracle,
    solve_vrp_oracle,
)
from routequbo.solvers.sa import beta_range, read_seeds


def random_model(n, seed, density=0.5):
    rng = np.random.default_rng(seed)
    m = QuboModel(n)
    m.add_linear_terms(np.arange(n), rng.normal(size=n))
    r, c = np.triu_indices(n, 1)
    keep = rng.random(r.size) < density
    m.add_quadratic_terms(r[keep], c[keep], rng.normal(size=keep.sum()))
    return m.freeze()


def product_minimum(model):
    """Minimum energy over every assignment, by itertools."""
    return min(model.energy(np.array(bits)) for bits in itertools.product((0, 1), repeat=model.n_vars))


def brute_tsp(inst):
    N = inst.n_cities
    d = inst.dist
    best = math.inf
    for perm in itertools.permutations(range(1, N)):
        order = (0, *perm, N)
        best = min(best, sum(d[a, b] for a, b in zip(order[:-1], order[1:])))
    return best


def brute_vrp(inst, q):
    """Min-max route length over every labelled split and every visiting order."""
    N = inst.n_cities
    d = inst.dist
    best = math.inf
    for labels in itertools.product(range(q), repeat=N - 1):
        longest = 0.0
        for v in range(q):
            group = [c + 1 for c, lab in enumerate(labels) if lab == v]
            shortest = min(
                sum(d[a, b] for a, b in zip((0, *p), (*p, N))) for p in itertools.permutations(group)
            )
            longest = max(longest, shortest)
        best = min(best, longest)
    return best


class TestExhaustive:
    def test_single_negative_linear(self):
        m = QuboModel(1)
        m.add_linear(0, -1.0)
        bits, e = solve_exhaustive(m.freeze())
        assert bits.tolist() == [1]
        assert e == -1.0

    def test_one_hot_tie_break(self):
        m = QuboModel(3)
        add_equality_penalty(m, LinearExpr({0: 1.0, 1: 1.0, 2: 1.0}, -1.0), 1.0)
        bits, e = solve_exhaustive(m.freeze())
        assert bits.tolist() == [1, 0, 0]
        assert e == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_itertools(self, seed):
        m = random_model(10, seed)
        _, e = solve_exhaustive(m)
        assert e == pytest.approx(product_minimum(m), abs=1e-12)

    def test_limit(self):
        with pytest.raises(ValueError):
            solve_exhaustive(QuboModel(25).freeze())
        with pytest.raises(ValueError):
            solve_exhaustive(QuboModel(5).freeze(), var_limit=4)

    def test_chunk_boundary(self):
        # 18 variables spans several enumeration chunks; the optimum sits in the last one
        n = 18
        m = QuboModel(n)
        m.add_linear_terms(np.arange(n), -np.ones(n))
        bits, e = solve_exhaustive(m.freeze())
        assert bits.tolist() == [1] * n
        assert e == -n


class TestSimulatedAnnealing:
    def test_params_validation(self):
        for bad in [dict(num_reads=0), dict(sweeps=0), dict(schedule="linear"),
                    dict(beta_start=1.0), dict(beta_start=2.0, beta_end=1.0)]:
            with pytest.raises(ValueError):
                SaParams(**bad)

    def test_deterministic(self):
        m = random_model(20, 3)
        p = SaParams(num_reads=20, sweeps=200, seed=7)
        a, b = solve_sa(m, p), solve_sa(m, p)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.energies, b.energies)

    def test_seeds_differ(self):
        assert not np.array_equal(read_seeds(0, 10), read_seeds(1, 10))
        assert len(set(read_seeds(0, 1000).tolist())) == 1000

    def test_reads_independent_of_count(self):
        # read k sees the same stream whatever the total number of reads
        m = random_model(20, 4)
        few = solve_sa(m, SaParams(num_reads=5, sweeps=100, seed=1))
        many = solve_sa(m, SaParams(num_reads=50, sweeps=100, seed=1))
        rows_many = {tuple(r) for r in many.samples.tolist()}
        assert all(tuple(r) in rows_many for r in few.samples.tolist())

    def test_sorted_and_reevaluated(self):
        m = random_model(15, 5)
        s = solve_sa(m, SaParams(num_reads=30, sweeps=100))
        assert len(s) == 30
        assert np.all(np.diff(s.energies) >= 0)
        for bits, e in s:
            assert e == pytest.approx(m.energy(bits), abs=1e-12)
        assert s.best[1] == s.energies[0]

    @pytest.mark.parametrize("seed", range(5))
    def test_never_below_exhaustive(self, seed):
        m = random_model(12, seed)
        _, exact = solve_exhaustive(m)
        s = solve_sa(m, SaParams(num_reads=10, sweeps=100, seed=seed))
        assert s.energies.min() >= exact - 1e-12

    def test_finds_ground_state_of_small_models(self):
        hits = 0
        for seed in range(100):
            m = random_model(12, 1000 + seed)
            _, exact = solve_exhaustive(m)
            best = solve_sa(m, SaParams(num_reads=50, sweeps=200, seed=seed)).energies[0]
            hits += abs(best - exact) < 1e-9
        assert hits >= 95

    def test_schedules(self):
        m = random_model(10, 8)
        for schedule in ("median", "delta", "sigma"):
            b0, b1 = beta_range(m, SaParams(schedule=schedule))
            assert 0 < b0 < b1
        assert beta_range(m, SaParams(beta_start=0.5, beta_end=4.0)) == (0.5, 4.0)

    def test_to_dict(self):
        s = solve_sa(random_model(5, 1), SaParams(num_reads=3, sweeps=10))
        d = s.to_dict()
        assert len(d["samples"]) == 3
        assert set(d["samples"][0]) == {"bits", "energy"}
        assert "elapsed_s" in d and "params" in d

    def test_small_tsp_optimum(self):
        inst = regular_polygon(4)
        model, vm = build_gps_tsp(inst)
        s = solve_sa(model, SaParams(num_reads=50, sweeps=500))
        tour = decode(s.samples[0], vm)
        assert tour is not None
        assert tour_length(tour, inst) == pytest.approx(4 * math.sqrt(2))


class TestTspOracle:
    @pytest.mark.parametrize("seed", range(6))
    def test_dp_matches_brute(self, seed):
        inst = random_euclidean(7, seed=seed)
        tour_dp, len_dp = solve_tsp_oracle(inst, method="dp")
        tour_b, len_b = solve_tsp_oracle(inst, method="brute")
        assert len_dp == pytest.approx(len_b, abs=1e-12)
        assert len_b == pytest.approx(brute_tsp(inst), abs=1e-12)
        assert tour_length(tour_dp, inst) == pytest.approx(len_dp, abs=1e-12)

    @pytest.mark.parametrize("n,expected", [(8, 6.1229349178), (12, 6.2116570825)])
    def test_polygon(self, n, expected):
        _, length = solve_tsp_oracle(regular_polygon(n))
        assert length == pytest.approx(expected, abs=1e-9)
        assert length == pytest.approx(2 * n * math.sin(math.pi / n), abs=1e-12)

    def test_limits(self):
        with pytest.raises(ValueError):
            solve_tsp_oracle(regular_polygon(13))
        with pytest.raises(ValueError):
            solve_tsp_oracle(regular_polygon(10), method="brute")
        with pytest.raises(ValueError):
            solve_tsp_oracle(regular_polygon(4), method="greedy")


class TestVrpOracle:
    @pytest.mark.parametrize("n,q,seed", [(4, 2, 0), (5, 2, 1), (6, 2, 2), (6, 3, 3), (5, 3, 4)])
    def test_matches_brute(self, n, q, seed):
        inst = random_euclidean(n, seed=seed)
        routes, value = solve_vrp_oracle(VrpConfig(inst, q))
        assert value == pytest.approx(brute_vrp(inst, q), abs=1e-12)
        assert max_route_length(routes, inst) == pytest.approx(value, abs=1e-12)

    def test_longest_route_first(self):
        inst = random_euclidean(6, seed=9)
        routes, _ = solve_vrp_oracle(VrpConfig(inst, 3))
        lengths = [tour_length(p, inst) for p in routes.paths()]
        assert lengths[0] == max(lengths)

    @pytest.mark.parametrize("seed", range(3))
    def test_single_vehicle_is_tsp(self, seed):
        inst = random_euclidean(6, seed=seed)
        _, value = solve_vrp_oracle(VrpConfig(inst, 1))
        assert value == pytest.approx(solve_tsp_oracle(inst)[1], abs=1e-12)

    def test_limits(self):
        with pytest.raises(ValueError):
            solve_vrp_oracle(VrpConfig(regular_polygon(9), 2))
        with pytest.raises(ValueError):
            solve_vrp_oracle(VrpConfig(regular_polygon(6), 4))


class TestFeasibleScan:
    @pytest.mark.parametrize("name", ["gps", "native", "mtz", "position"])
    def test_tsp_scan_matches_oracle(self, name):
        inst = random_euclidean(5, seed=2)
        a, e, tour, model, vm = feasible_scan(name, inst)
        assert e == pytest.approx(solve_tsp_oracle(inst)[1], abs=1e-9)
        assert decode(a, vm) == tour

    def test_vrp_scan_matches_oracle(self):
        inst = random_euclidean(5, seed=2)
        config = VrpConfig(inst, 2)
        a, e, routes, model, vm = feasible_scan("vrp5", config)
        assert e == pytest.approx(solve_vrp_oracle(config)[1], abs=1e-9)
        assert decode(a, vm) == routes

    def test_scan_limit_and_types(self):
        with pytest.raises(ValueError):
            feasible_scan("gps", regular_polygon(8))
        with pytest.raises(TypeError):
            feasible_scan("vrp5", regular_polygon(4))
        with pytest.raises(TypeError):
            feasible_scan("gps", VrpConfig(regular_polygon(4), 2))
        with pytest.raises(ValueError):
            feasible_scan("nope", regular_polygon(4))

    def test_vrp_routes_are_route_sets(self):
        _, _, routes, _, _ = feasible_scan("vrp5", VrpConfig(regular_polygon(4), 2))
        assert isinstance(routes, RouteSet)
        assert not isinstance(routes, Tour)
