import itertools
import math

import numpy as np
import pytest

from routequbo.decode import (
    ENCODERS,
    RouteSet,
    Tour,
    check_constraints,
    decode,
    encode_gps,
    encode_native,
    max_route_length,
    route_lengths,
    tour_length,
)
from routequbo.formulations import TSP_BUILDERS, VRP_BUILDERS, build_gps_tsp, build_native_tsp
from routequbo.instances import VrpConfig, random_euclidean, regular_polygon
from routequbo.solvers.oracles import _ordered_route_sets

TSP_NAMES = sorted(TSP_BUILDERS)
VRP_NAMES = sorted(VRP_BUILDERS)


def all_tours(n):
    return [Tour.from_cities(p, n) for p in itertools.permutations(range(1, n))]


def flip_neighbours(a, rng, count):
    """Copies of ``a`` with one or two random bits flipped."""
    out = []
    for _ in range(count):
        b = a.copy()
        k = rng.integers(1, 3)
        b[rng.choice(a.size, size=k, replace=False)] ^= 1
        out.append(b)
    return out


class TestTourTypes:
    def test_tour_validation(self):
        Tour((0, 2, 1, 3))
        for bad in [(1, 2, 0, 3), (0, 1, 1, 3), (0, 2, 1, 4), (0, 2, 1, 2)]:
            with pytest.raises(ValueError):
                Tour(bad)

    def test_from_cities(self):
        t = Tour.from_cities([3, 1, 2], 4)
        assert t.order == (0, 3, 1, 2, 4)
        assert t.cities == (3, 1, 2)
        assert t.arcs() == [(0, 3), (3, 1), (1, 2), (2, 4)]

    def test_route_set_validation(self):
        rs = RouteSet(((2, 1), (3,)), 4)
        assert rs.vehicle_count == 2
        assert rs.paths() == [(0, 2, 1, 4), (0, 3, 4)]
        for bad in [((1,), (3,)), ((1, 2), (2, 3)), ((1, 5), (2, 3))]:
            with pytest.raises(ValueError):
                RouteSet(bad, 4)

    def test_idle_vehicle(self):
        rs = RouteSet(((1, 2, 3), ()), 4)
        assert rs.paths()[1] == (0, 4)


class TestLengths:
    def test_square_tour(self):
        inst = regular_polygon(4)
        assert tour_length(Tour.from_cities([1, 2, 3], 4), inst) == pytest.approx(4 * math.sqrt(2))
        assert tour_length(Tour.from_cities([2, 1, 3], 4), inst) == pytest.approx(4 + 2 * math.sqrt(2))

    def test_route_lengths_and_max(self):
        inst = regular_polygon(4)
        rs = RouteSet(((1, 2), (3,)), 4)
        # 0 -> 1 -> 2 -> 0 is two sides plus a diameter; 0 -> 3 -> 0 is two sides
        assert route_lengths(rs, inst) == pytest.approx([2 + 2 * math.sqrt(2), 2 * math.sqrt(2)])
        assert max_route_length(rs, inst) == pytest.approx(2 + 2 * math.sqrt(2))

    def test_idle_route_is_zero(self):
        inst = regular_polygon(4)
        assert route_lengths(RouteSet(((1, 2, 3), ()), 4), inst)[1] == 0.0


class TestRoundTrip:
    @pytest.mark.parametrize("name", TSP_NAMES)
    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_every_tour(self, name, n):
        inst = random_euclidean(n, seed=n)
        model, vm = TSP_BUILDERS[name](inst)
        for tour in all_tours(n):
            a = ENCODERS[name](tour, vm)
            assert decode(a, vm) == tour
            rep = check_constraints(a, model)
            assert rep.feasible, rep.residuals

    @pytest.mark.parametrize("name", VRP_NAMES)
    @pytest.mark.parametrize("n,q", [(4, 1), (4, 2), (5, 2), (4, 3)])
    def test_every_route_set(self, name, n, q):
        inst = random_euclidean(n, seed=n + q)
        model, vm = VRP_BUILDERS[name](VrpConfig(inst, q))
        for routes in _ordered_route_sets(n, q):
            rs = RouteSet(routes, n)
            a = ENCODERS[name](rs, vm)
            lengths = route_lengths(rs, inst)
            # the route-length slack only closes when vehicle 1 drives the longest route
            longest_first = all(round(lengths[0] * inst.scale) >= round(x * inst.scale) for x in lengths)
            assert check_constraints(a, model).feasible == longest_first
            assert decode(a, vm) == (rs if longest_first else None)

    def test_encoder_rejects_wrong_size(self):
        _, vm = build_gps_tsp(regular_polygon(4))
        with pytest.raises(ValueError):
            encode_gps(Tour.from_cities([1, 2, 3, 4], 5), vm)

    def test_encoder_rejects_wrong_kind(self):
        _, vm = build_gps_tsp(regular_polygon(4))
        with pytest.raises(ValueError):
            encode_native(Tour.from_cities([1, 2, 3], 4), vm)


class TestRejects:
    @pytest.mark.parametrize("name", TSP_NAMES + VRP_NAMES)
    def test_all_zeros(self, name):
        inst = regular_polygon(4)
        problem = VrpConfig(inst, 2) if name in VRP_BUILDERS else inst
        builder = VRP_BUILDERS.get(name) or TSP_BUILDERS[name]
        model, vm = builder(problem)
        a = np.zeros(vm.n_vars, dtype=np.int8)
        assert decode(a, vm) is None
        assert not check_constraints(a, model).feasible

    def test_two_successors(self):
        inst = regular_polygon(5)
        model, vm = build_gps_tsp(inst)
        a = encode_gps(Tour.from_cities([1, 2, 3, 4], 5), vm)
        x = vm.blocks["x"]
        # give city 1 a second outgoing arc, moving (1, 3) from "before" to "arc"
        a[x[1, 3, 0]] = 0
        a[x[1, 3, 1]] = 1
        assert decode(a, vm) is None
        rep = check_constraints(a, model)
        assert rep.residuals["leave_once"] > 0
        assert "leave_once" in rep.violated

    @pytest.mark.parametrize("name", TSP_NAMES)
    def test_random_bits_violate_one_hot(self, name):
        inst = regular_polygon(5)
        model, vm = TSP_BUILDERS[name](inst)
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.integers(0, 2, vm.n_vars).astype(np.int8)
            assert decode(a, vm) is None
            rep = check_constraints(a, model)
            assert not rep.feasible
            assert rep.total_penalty > 0

    def test_decoder_rejects_wrong_length(self):
        _, vm = build_gps_tsp(regular_polygon(4))
        with pytest.raises(ValueError):
            decode(np.zeros(vm.n_vars + 1), vm)


class TestEnergyDecomposition:
    @pytest.mark.parametrize("name", TSP_NAMES + VRP_NAMES)
    def test_families_sum_to_energy(self, name):
        inst = random_euclidean(4, seed=11)
        problem = VrpConfig(inst, 2) if name in VRP_BUILDERS else inst
        builder = VRP_BUILDERS.get(name) or TSP_BUILDERS[name]
        model, vm = builder(problem)
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = rng.integers(0, 2, vm.n_vars)
            rep = check_constraints(a, model)
            assert rep.objective + sum(rep.residuals.values()) == pytest.approx(model.energy(a), rel=1e-12, abs=1e-9)
            assert rep.untagged == pytest.approx(0.0, abs=1e-12 * abs(model.energy(a)) + 1e-9)

    def test_untagged_model_rejected(self):
        from routequbo.qubo import QuboModel

        m = QuboModel(2)
        m.add_linear_terms([0], [1.0])
        with pytest.raises(ValueError):
            check_constraints([0, 1], m.freeze())


class TestFeasibilityEquivalence:
    """A decoder succeeds exactly when every penalty family is zero."""

    @pytest.mark.parametrize("name", TSP_NAMES)
    def test_tsp_random_and_neighbours(self, name):
        inst = random_euclidean(4, seed=5)
        model, vm = TSP_BUILDERS[name](inst)
        rng = np.random.default_rng(2)
        samples = [rng.integers(0, 2, vm.n_vars).astype(np.int8) for _ in range(10_000)]
        for tour in all_tours(4):
            samples.extend(flip_neighbours(ENCODERS[name](tour, vm), rng, 300))
        for a in samples:
            assert (decode(a, vm) is not None) == check_constraints(a, model).feasible

    @pytest.mark.parametrize("name", VRP_NAMES)
    def test_vrp_random_and_neighbours(self, name):
        inst = random_euclidean(4, seed=5)
        model, vm = VRP_BUILDERS[name](VrpConfig(inst, 2))
        rng = np.random.default_rng(3)
        samples = [rng.integers(0, 2, vm.n_vars).astype(np.int8) for _ in range(2_000)]
        for routes in _ordered_route_sets(4, 2):
            samples.extend(flip_neighbours(ENCODERS[name](RouteSet(routes, 4), vm), rng, 100))
        for a in samples:
            rep = check_constraints(a, model)
            decoded = decode(a, vm)
            assert (decoded is not None) == rep.feasible
            if decoded is not None:
                assert rep.objective == pytest.approx(max_route_length(decoded, inst), abs=1e-9)

    def test_native_a_detached_cycle(self):
        inst = regular_polygon(5)
        model, vm = build_native_tsp(inst, subtour_variant="A")
        a = encode_native(Tour.from_cities([1, 2, 3, 4], 5), vm)
        rng = np.random.default_rng(4)
        for b in flip_neighbours(a, rng, 2000):
            assert (decode(b, vm) is not None) == check_constraints(b, model).feasible
