"""Command-line front end: generate, build, solve, bench, verify.

Exit codes: 0 success, 1 only infeasible results, 2 usage error,
3 failed invariant check.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import decode as dec
from .formulations import (
    FORMULATIONS,
    TSP_BUILDERS,
    VRP_BUILDERS,
    WEIGHT_PRESETS,
    PenaltyWeights,
    VariableMap,
    load_varmap,
    parse_weights,
    preset_weights,
    save_varmap,
    transitivity_value,
)
from .instances import RoutingInstance, VrpConfig, instance_from_dict, instance_to_dict, load_instance, random_euclidean, regular_polygon, save_instance
from .qubo import ENERGY_TOL, QuboModel, load_model, save_model, stats
from .solvers import DEFAULT_VAR_LIMIT, SaParams, feasible_scan, solve_exhaustive, solve_sa, solve_tsp_oracle, solve_vrp_oracle
from .solvers.oracles import SCAN_LIMIT
from .solvers.sa import SCHEDULES

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_INVARIANT = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- shared helpers

def _split_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _weights_for(instance: RoutingInstance, preset: str, margin: float, overrides: str | None) -> PenaltyWeights:
    try:
        return parse_weights(overrides, preset_weights(instance, preset, margin))
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def build_formulation(formulation: str, instance: RoutingInstance, weights: PenaltyWeights,
                      vehicles: int = 1, variant: str = "B") -> tuple[QuboModel, VariableMap]:
    if formulation in TSP_BUILDERS:
        kwargs = {"subtour_variant": variant} if formulation == "native" else {}
        return TSP_BUILDERS[formulation](instance, weights, **kwargs)
    if formulation in VRP_BUILDERS:
        try:
            config = VrpConfig(instance, vehicles)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        return VRP_BUILDERS[formulation](config, weights)
    raise UsageError(f"unknown formulation {formulation!r}; choose from {', '.join(FORMULATIONS)}")


def describe_sample(bits: np.ndarray, model: QuboModel, varmap: VariableMap, instance: RoutingInstance) -> dict:
    """Decode one assignment into the solution document."""
    report = dec.check_constraints(bits, model)
    sol = dec.decode(bits, varmap)
    feasible = bool(report.feasible and sol is not None)
    doc: dict = {"formulation": varmap.kind, "feasible": feasible, "energy": model.energy(bits)}
    if isinstance(sol, dec.Tour):
        doc["tour"] = list(sol.order)
        doc["length"] = dec.tour_length(sol, instance)
    elif isinstance(sol, dec.RouteSet):
        doc["routes"] = [list(p) for p in sol.paths()]
        doc["route_lengths"] = dec.route_lengths(sol, instance)
        doc["max_route"] = dec.max_route_length(sol, instance)
        doc["length"] = doc["max_route"]
    else:
        doc["tour"] = None
        doc["length"] = None
    doc["residuals"] = report.residuals
    return doc


def pick_solution(samples: np.ndarray, model: QuboModel, varmap: VariableMap, instance: RoutingInstance) -> dict:
    """Lowest-energy feasible sample, else the lowest-energy sample."""
    for bits in samples:
        doc = describe_sample(bits, model, varmap, instance)
        if doc["feasible"]:
            return doc
    return describe_sample(samples[0], model, varmap, instance)


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    try:
        if args.kind == "polygon":
            inst = regular_polygon(args.n, args.radius, scale=args.scale)
        else:
            inst = random_euclidean(args.n, args.seed, args.box, scale=args.scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_instance(inst, args.out)
    print(f"wrote {inst.name} (N={inst.n_cities}) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- build

def _default_varmap_path(model_path: str) -> str:
    p = Path(model_path)
    return str(p.with_name(p.stem + ".varmap.json"))


def cmd_build(args) -> int:
    inst = _load_instance(args.instance, args.scale)
    weights = _weights_for(inst, args.weight_preset, args.margin, args.weights)
    model, vm = build_formulation(args.formulation, inst, weights, args.vehicles, args.variant)
    save_model(model, args.out)
    varmap_path = args.varmap or _default_varmap_path(args.out)
    save_varmap(vm, varmap_path, {"instance": instance_to_dict(inst), "weights": weights.to_dict()})
    s = stats(model)
    print(f"formulation {args.formulation}")
    print(f"n_vars {s.n_vars}")
    print(f"n_clamped {len(vm.clamped)}")
    print(f"n_linear {s.n_linear}")
    print(f"n_quadratic {s.n_quadratic}")
    print(f"model {args.out}")
    print(f"varmap {varmap_path}")
    return EXIT_OK


def _load_instance(path: str, scale: int | None) -> RoutingInstance:
    try:
        inst = load_instance(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from exc
    return inst.with_scale(scale) if scale else inst


# ---------------------------------------------------------------- solve

def _sa_params(args, seed: int) -> SaParams:
    try:
        return SaParams(num_reads=args.reads, sweeps=args.sweeps, beta_start=args.beta_start,
                        beta_end=args.beta_end, seed=seed, schedule=args.schedule)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_solve(args) -> int:
    varmap_path = args.varmap or _default_varmap_path(args.model)
    if not Path(varmap_path).exists():
        raise UsageError(f"variable map {varmap_path} not found")
    try:
        model = load_model(args.model)
        vm, doc = load_varmap(varmap_path)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if "instance" not in doc:
        raise UsageError("variable map carries no instance")
    inst = instance_from_dict(doc["instance"])
    if vm.n_vars != model.n_vars:
        raise UsageError(f"model has {model.n_vars} variables, map has {vm.n_vars}")

    if args.sampler == "exhaustive":
        try:
            bits, energy = solve_exhaustive(model, args.var_limit)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        samples = bits[None, :]
        sample_doc = {"samples": [{"bits": "".join(map(str, bits.tolist())), "energy": energy}],
                      "elapsed_s": 0.0, "params": {"var_limit": args.var_limit}}
    else:
        ss = solve_sa(model, _sa_params(args, args.seed))
        samples = ss.samples
        sample_doc = ss.to_dict()
        for (bits, e) in ss:
            if abs(model.energy(bits) - e) > ENERGY_TOL * max(1.0, abs(e)):
                print("sample energy does not re-evaluate", file=sys.stderr)
                return EXIT_INVARIANT

    solution = pick_solution(samples, model, vm, inst)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(solution, fh, indent=2)
    if args.samples_out:
        with open(args.samples_out, "w", encoding="utf-8") as fh:
            json.dump(sample_doc, fh)
    status = "feasible" if solution["feasible"] else "infeasible"
    print(f"{status} energy {solution['energy']:.6g} length {solution['length']}")
    if not solution["feasible"]:
        bad = {k: v for k, v in solution["residuals"].items() if abs(v) > ENERGY_TOL}
        print(f"violated families: {bad}")
        return EXIT_INFEASIBLE
    return EXIT_OK


# ---------------------------------------------------------------- bench

@dataclass
class BenchRow:
    formulation: str
    N: int
    Q: int
    n_vars: int
    n_clamped: int
    n_quadratic: int
    best_energy: float | None
    best_length: float | None
    feasible: bool | None
    elapsed_s: float | None
    seed: int


BENCH_HEADER = [f.name for f in fields(BenchRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@dataclass(frozen=True)
class BenchCell:
    formulation: str
    n: int
    seed: int
    vehicles: int
    kind: str
    box: float
    variant: str
    preset: str
    margin: float
    weights: str | None
    scale: int
    sampler: str
    reads: int
    sweeps: int
    schedule: str
    var_limit: int
    timing: bool


def _bench_instance(cell: BenchCell) -> RoutingInstance:
    if cell.kind == "polygon":
        return regular_polygon(cell.n, 1.0, scale=cell.scale)
    return random_euclidean(cell.n, cell.seed, cell.box, scale=cell.scale)


def run_cell(cell: BenchCell) -> BenchRow:
    inst = _bench_instance(cell)
    weights = _weights_for(inst, cell.preset, cell.margin, cell.weights)
    model, vm = build_formulation(cell.formulation, inst, weights, cell.vehicles, cell.variant)
    s = stats(model)
    q = cell.vehicles if cell.formulation in VRP_BUILDERS else 1
    row = BenchRow(cell.formulation, cell.n, q, s.n_vars, len(vm.clamped), s.n_quadratic,
                   None, None, None, None, cell.seed)
    if cell.sampler == "none":
        return row
    if cell.sampler == "exhaustive":
        bits, energy = solve_exhaustive(model, cell.var_limit)
        samples, elapsed = bits[None, :], 0.0
    else:
        ss = solve_sa(model, SaParams(num_reads=cell.reads, sweeps=cell.sweeps, seed=cell.seed, schedule=cell.schedule))
        samples, elapsed = ss.samples, ss.info["elapsed_s"]
    row.best_energy = model.energy(samples[0])
    sol = pick_solution(samples, model, vm, inst)
    row.feasible = sol["feasible"]
    row.best_length = sol["length"] if sol["feasible"] else None
    row.elapsed_s = float(elapsed) if cell.timing else 0.0
    return row


def cmd_bench(args) -> int:
    ns = _split_ints(args.n)
    seeds = _split_ints(args.seeds)
    forms = [f for f in args.formulations.split(",") if f]
    for f in forms:
        if f not in FORMULATIONS:
            raise UsageError(f"unknown formulation {f!r}; choose from {', '.join(FORMULATIONS)}")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cells = [
        BenchCell(f, n, seed, args.vehicles, args.kind, args.box, args.variant, args.weight_preset, args.margin,
                  args.weights, args.scale or 1000, args.sampler, args.reads, args.sweeps, args.schedule,
                  args.var_limit, not args.no_timing)
        for f, n, seed in itertools.product(forms, ns, seeds)
    ]
    try:
        if args.jobs > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(run_cell, cells))
        else:
            rows = [run_cell(c) for c in cells]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rank = {f: k for k, f in enumerate(forms)}
    rows.sort(key=lambda r: (rank[r.formulation], r.N, r.seed))

    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for r in rows:
            writer.writerow([_fmt(v) for v in asdict(r).values()])
    finally:
        if args.out:
            out.close()
    if args.sampler != "none" and rows and not any(r.feasible for r in rows):
        return EXIT_INFEASIBLE
    return EXIT_OK


# ---------------------------------------------------------------- verify

class _Checks:
    def __init__(self) -> None:
        self.results: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    @property
    def ok(self) -> bool:
        return all(r[1] for r in self.results)


def _reference_count(formulation: str, n: int) -> int | None:
    return {"mtz": {4: 140, 6: 266, 8: 522, 10: 770, 12: 1066}}.get(formulation, {}).get(n)


def cmd_verify(args) -> int:
    inst = _load_instance(args.instance, args.scale)
    weights = _weights_for(inst, args.weight_preset, args.margin, args.weights)
    model, vm = build_formulation(args.formulation, inst, weights, args.vehicles, args.variant)
    checks = _Checks()
    N, T = inst.n_cities, inst.n_nodes

    if args.varmap:
        try:
            loaded, _ = load_varmap(args.varmap)
            same = loaded.kind == vm.kind and loaded.forward == vm.forward and loaded.clamped == vm.clamped
            checks.add("varmap", same, "matches the rebuilt map" if same else "differs from the rebuilt map")
        except (OSError, ValueError) as exc:
            checks.add("varmap", False, str(exc))

    bits = list(itertools.product((0, 1), repeat=3))
    tt = {b: transitivity_value(*b) for b in bits}
    checks.add("transitivity truth table", all(v == (1 if b in ((0, 0, 1), (1, 1, 0)) else 0) for b, v in tt.items()))

    s = stats(model)
    expected = {"gps": 3 * T * T, "native": N * T * T, "position": T * T}.get(args.formulation)
    if expected is not None:
        checks.add("variable count", s.n_vars == expected, f"{s.n_vars} (expected {expected})")
    else:
        reference = _reference_count(args.formulation, N)
        print(f"INFO variable count {s.n_vars}" + (f" (reference table value {reference})" if reference else ""))

    if N > SCAN_LIMIT:
        print(f"SKIP oracle checks need N <= {SCAN_LIMIT}")
    elif args.formulation in TSP_BUILDERS:
        _verify_tsp(args.formulation, inst, model, vm, weights, checks)
    else:
        _verify_vrp(args.formulation, VrpConfig(inst, args.vehicles), model, vm, weights, checks)
    print("OK" if checks.ok else "FAILED")
    return EXIT_OK if checks.ok else EXIT_INVARIANT


def _verify_tsp(formulation, inst, model, vm, weights, checks) -> None:
    N = inst.n_cities
    enc = dec.ENCODERS[formulation]
    trip = energy_ok = feas = True
    best = math.inf
    for perm in itertools.permutations(range(1, N)):
        tour = dec.Tour.from_cities(perm, N)
        a = enc(tour, vm)
        trip &= dec.decode(a, vm) == tour
        rep = dec.check_constraints(a, model)
        feas &= rep.feasible
        length = dec.tour_length(tour, inst)
        e = model.energy(a)
        energy_ok &= abs(e - weights.objective * length) <= 1e-9 * max(1.0, abs(e))
        best = min(best, length)
    checks.add("round trip", trip, f"{math.factorial(N - 1)} tours")
    checks.add("encodings penalty free", feas)
    checks.add("energy equals tour length", energy_ok)
    _, e, tour, _, _ = feasible_scan(formulation, inst, weights)
    _, opt = solve_tsp_oracle(inst)
    checks.add("scan optimum equals oracle", abs(e / weights.objective - opt) <= 1e-9,
               f"scan {e / weights.objective:.9g}, oracle {opt:.9g}")


def _verify_vrp(formulation, config, model, vm, weights, checks) -> None:
    a, e, rs, _, _ = feasible_scan(formulation, config, weights)
    _, opt = solve_vrp_oracle(config)
    checks.add("decode of scan optimum", dec.decode(a, vm) == rs)
    checks.add("scan penalty free", dec.check_constraints(a, model).feasible)
    got = dec.max_route_length(rs, config.instance)
    checks.add("scan max route equals oracle", abs(got - opt) <= 1e-9, f"scan {got:.9g}, oracle {opt:.9g}")
    lengths = dec.route_lengths(rs, config.instance)
    checks.add("vehicle 1 drives the longest route", lengths[0] >= max(lengths) - 1e-12)


# ---------------------------------------------------------------- parser

def _add_weight_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", help="JSON object (inline or file) overriding individual weights")
    p.add_argument("--weight-preset", choices=sorted(WEIGHT_PRESETS), default="bound",
                   help="bound: dominate any route length (default); edge: softer, sampler friendly")
    p.add_argument("--margin", type=float, default=0.25, help="weight margin over the preset's bound")
    p.add_argument("--scale", type=int, help="integer distance scaling for slack constraints")


def _add_formulation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vehicles", "-q", type=int, default=1, help="vehicles for vrp5/vrp3")
    p.add_argument("--variant", choices=("A", "B"), default="B", help="native subtour rule")


def _add_sa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reads", type=int, default=200)
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--schedule", choices=SCHEDULES, default="median", help="automatic beta range rule")
    p.add_argument("--var-limit", type=int, default=DEFAULT_VAR_LIMIT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="routequbo", description="QUBO routing formulations: build, solve, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an instance file")
    p.add_argument("kind", choices=("polygon", "random"))
    p.add_argument("n", type=int, help="number of cities (depot included)")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", type=float, default=1.0, help="side of the square for random cities")
    p.add_argument("--scale", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build", help="build a QUBO model and its variable map")
    p.add_argument("instance")
    p.add_argument("formulation", choices=FORMULATIONS)
    _add_formulation_flags(p)
    _add_weight_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--varmap", help="variable map path (default: <out stem>.varmap.json)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", help="sample a model and decode the best feasible sample")
    p.add_argument("model")
    p.add_argument("--varmap")
    p.add_argument("--sampler", choices=("sa", "exhaustive"), default="sa")
    _add_sa_flags(p)
    p.add_argument("--beta-start", type=float)
    p.add_argument("--beta-end", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="solution JSON path")
    p.add_argument("--samples-out", help="optional path for all samples")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="sweep formulations x sizes x seeds into CSV")
    p.add_argument("--n", default="4,6,8,10,12", help="comma-separated city counts")
    p.add_argument("--formulations", default="gps,native")
    p.add_argument("--seeds", default="0")
    p.add_argument("--kind", choices=("polygon", "random"), default="polygon")
    p.add_argument("--box", type=float, default=1.0)
    p.add_argument("--sampler", choices=("none", "sa", "exhaustive"), default="none")
    _add_formulation_flags(p)
    _add_weight_flags(p)
    _add_sa_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="write 0 for elapsed_s so rows are reproducible")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run round-trip, truth-table and oracle checks")
    p.add_argument("instance")
    p.add_argument("formulation", choices=FORMULATIONS)
    p.add_argument("--varmap", help="variable map file to validate against a rebuild")
    _add_formulation_flags(p)
    _add_weight_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
