"""Command line front end.

Each subcommand reads an optional JSON experiment file, writes one CSV whose
leading ``#`` lines echo the tool version and the fully resolved
configuration, and exits 0 on success, 1 when a validation check fails and
2 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, chain
from .bsm import AdaptiveVariant, BsmStrategy, adaptive_bsm_prob
from .config import ConfigError, ExperimentSpec, read_spec, with_oracle
from .experiments import curve_point, protocol_envelope, tree_window
from .optimizer import (
    BsmProb,
    ChainParams,
    EnvelopeExponent,
    Optimum,
    Rate,
    SearchBounds,
    enumerate_trees,
    optimize,
    rgs_size,
)
from .oracle import EnumerationTooLarge, exact_bsm_prob
from .tree_code import BranchingVector, LossProfile, num_qubits

EXIT_OK, EXIT_VALIDATION, EXIT_BAD_INPUT = 0, 1, 2
SYMMETRIZED_TOLERANCE = 1e-10


class BadInput(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    if x is None:
        return ""
    return str(x)


class Table:
    """CSV body with a provenance header and an optional ``#`` footer."""

    def __init__(self, command: str, spec: ExperimentSpec, columns: Sequence[str]):
        self.command = command
        self.spec = spec
        self.columns = list(columns)
        self.rows: list[list[str]] = []
        self.footer: list[str] = []

    def add(self, *values) -> None:
        self.rows.append([fmt(v) for v in values])

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# tree-repeater {__version__} {self.command}\n")
        # the output path does not affect results, so two runs to different files match byte for byte
        resolved = {k: v for k, v in self.spec.to_dict().items() if k != "out"}
        buf.write("# config: " + json.dumps(resolved, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        for line in self.footer:
            buf.write(f"# {line}\n")
        return buf.getvalue()


def _params(spec: ExperimentSpec) -> ChainParams:
    return ChainParams(
        eta_gen=spec.eta_gen,
        alpha_db_per_km=spec.alpha_db_per_km,
        p_f=spec.p_f,
        variant=spec.adaptive_variant,
        samples=spec.oracle.samples,
        seed=spec.oracle.seed,
    )


def _check_eps_grid(spec: ExperimentSpec) -> None:
    if not spec.eps_grid:
        raise BadInput("eps_grid is empty")


def _check_L_grid(spec: ExperimentSpec) -> None:
    if min(spec.L_grid) <= 0:
        raise BadInput("L_grid must start above 0 km: the repeaterless rate diverges at L = 0")


# ---------------------------------------------------------------------------


def cmd_bsm_curve(spec: ExperimentSpec) -> tuple[Table, int]:
    _check_eps_grid(spec)
    ts = spec.tree_search
    window = tree_window(ts.min_qubits, ts.max_qubits, ts.max_depth, ts.max_branch)
    if not window:
        raise BadInput("tree_search window holds no trees")
    table = Table(
        "bsm-curve",
        spec,
        ["epsilon", "strategy", "variant_or_profile", "probability", "std_error_or_0", "tree"],
    )
    jobs = [(s, False) for s in spec.strategy_list]
    if spec.nonuniform_adaptive:
        jobs.append((BsmStrategy.ADAPTIVE, True))
    for eps in spec.eps_grid:
        for strategy, nonuniform in jobs:
            point = curve_point(
                strategy,
                eps,
                window,
                p_f=spec.p_f,
                variant=spec.adaptive_variant,
                fixed_tree=spec.tree_for(strategy),
                nonuniform=nonuniform,
                samples=spec.oracle.samples,
                search_samples=ts.search_samples,
                seed=spec.oracle.seed,
                workers=spec.oracle.workers,
            )
            table.add(eps, strategy.value, point.label, point.probability, point.std_error, point.tree)
    return table, EXIT_OK


def _fixed_optimum(spec: ExperimentSpec, strategy: BsmStrategy) -> Optimum | None:
    cfg = spec.configs.get(strategy.value)
    if cfg is None:
        return None
    b_in = BranchingVector(cfg["b_in"])
    b_link = BranchingVector(cfg["b_link"]) if cfg.get("b_link") else None
    m = int(cfg["m"])
    return Optimum(float("nan"), rgs_size(strategy, m, b_in, b_link), b_in=b_in, b_link=b_link, m=m)


def _objective(spec: ExperimentSpec):
    if spec.objective.kind == "rate":
        return Rate(spec.objective.L)
    if spec.objective.kind == "exponent":
        return EnvelopeExponent(tuple(spec.L_grid))
    raise BadInput("rate-envelope needs objective.kind 'rate' or 'exponent'")


def cmd_rate_envelope(spec: ExperimentSpec) -> tuple[Table, int]:
    _check_L_grid(spec)
    params = _params(spec)
    table = Table(
        "rate-envelope",
        spec,
        ["L_km", "protocol", "best_n", "rate_ebits_per_mode", "repeaterless_rate"],
    )
    ts = spec.tree_search
    for strategy in spec.strategy_list:
        fixed = _fixed_optimum(spec, strategy)
        budget = spec.budgets.get(strategy.value)
        if fixed is None and budget is None:
            raise BadInput(f"no budget or fixed config for protocol {strategy.value}")
        env = protocol_envelope(
            strategy,
            params,
            spec.L_grid,
            spec.n_set,
            budget=budget,
            m_set=spec.m_set,
            max_depth=ts.max_depth,
            max_branch=ts.max_branch,
            objective=None if fixed else _objective(spec),
            fixed=fixed,
        )
        for p in env.points:
            table.add(p.L, strategy.value, p.n, p.rate, chain.repeaterless_rate(p.L, spec.alpha_db_per_km))
        o = env.optimum
        desc = f"m={o.m} b_in={o.b_in} b_link={o.b_link} qubits={o.qubits}"
        if env.fit is None:
            table.footer.append(f"fit {strategy.value} s=nan intercept=nan {desc}")
        else:
            table.footer.append(
                f"fit {strategy.value} s={env.fit.s:.12g} intercept={env.fit.intercept:.12g} {desc}"
            )
        table.footer.append(f"crossover {strategy.value} L_star_km={fmt(env.crossover_km)}")
    return table, EXIT_OK


def cmd_optimize(spec: ExperimentSpec) -> tuple[Table, int]:
    params = _params(spec)
    ts = spec.tree_search
    table = Table(
        "optimize",
        spec,
        ["objective", "strategy", "parameter", "score", "qubits", "tree", "b_in", "b_link", "m", "n"],
    )
    kind = spec.objective.kind
    for strategy in spec.strategy_list:
        if kind == "bsm":
            if strategy is BsmStrategy.PHYSICAL:
                continue
            bounds = SearchBounds(spec.qubit_budget, ts.max_depth, ts.max_branch)
            for eps in spec.eps_grid:
                o = optimize(BsmProb(eps), bounds, strategy, params)
                table.add("bsm", strategy.value, eps, o.score, o.qubits, o.tree, None, None, None, None)
            continue
        budget = spec.budgets.get(strategy.value, spec.qubit_budget)
        bounds = SearchBounds(
            budget, ts.max_depth, ts.max_branch, n_set=spec.n_set, m_set=spec.m_set
        )
        objective = _objective(spec)
        o = optimize(objective, bounds, strategy, params)
        param = objective.L if isinstance(objective, Rate) else "L_grid"
        table.add(kind, strategy.value, param, o.score, o.qubits, None, o.b_in, o.b_link, o.m, o.n)
    return table, EXIT_OK


def cmd_validate(spec: ExperimentSpec) -> tuple[Table, int]:
    _check_eps_grid(spec)
    table = Table(
        "validate",
        spec,
        ["tree", "epsilon", "variant", "analytic", "exact", "abs_diff", "status"],
    )
    failed = False
    for branches in spec.validate_trees:
        tree = BranchingVector(branches)
        for eps in spec.eps_grid:
            profile = LossProfile.uniform(eps, tree.depth)
            try:
                exact = exact_bsm_prob(BsmStrategy.ADAPTIVE, tree, profile, spec.p_f)
            except EnumerationTooLarge as exc:
                table.add(tree, eps, "-", None, None, None, f"too-large({exc.visited})")
                continue
            for variant in AdaptiveVariant:
                analytic = adaptive_bsm_prob(tree, profile, spec.p_f, variant)
                diff = abs(analytic - exact)
                if variant is AdaptiveVariant.SYMMETRIZED:
                    ok = diff <= SYMMETRIZED_TOLERANCE
                    failed |= not ok
                    status = "pass" if ok else "FAIL"
                else:
                    status = "match" if diff <= SYMMETRIZED_TOLERANCE else "deviates"
                table.add(tree, eps, variant.value, analytic, exact, diff, status)
    return table, EXIT_VALIDATION if failed else EXIT_OK


def cmd_repeaterless(spec: ExperimentSpec) -> tuple[Table, int]:
    _check_L_grid(spec)
    table = Table("repeaterless", spec, ["L_km", "transmissivity", "repeaterless_rate"])
    for L in spec.L_grid:
        table.add(L, chain.transmissivity(L, spec.alpha_db_per_km), chain.repeaterless_rate(L, spec.alpha_db_per_km))
    return table, EXIT_OK


def cmd_calibrate_fig4(spec: ExperimentSpec) -> tuple[Table, int]:
    """List every (m, b_in, b_link) whose RGS size equals each protocol's budget."""
    ts = spec.tree_search
    table = Table("calibrate-fig4", spec, ["target", "strategy", "m", "b_in", "b_link", "qubits"])
    for key, target in sorted(spec.budgets.items()):
        strategy = BsmStrategy.parse(key)
        count = 0
        for m in range(1, target // 2 + 1):
            cap = target // (2 * m)
            trees = enumerate_trees(SearchBounds(max(cap, 1), ts.max_depth, ts.max_branch))
            if strategy is BsmStrategy.PHYSICAL:
                for t in trees:
                    if rgs_size(strategy, m, t) == target:
                        table.add(target, key, m, t, None, target)
                        count += 1
                continue
            by_size: dict[int, list[BranchingVector]] = {}
            for t in trees:
                by_size.setdefault(num_qubits(t), []).append(t)
            for t in trees:
                for u in by_size.get(cap - num_qubits(t), []):
                    if rgs_size(strategy, m, t, u) == target:
                        table.add(target, key, m, t, u, target)
                        count += 1
        table.footer.append(f"candidates {key} target={target} count={count}")
    return table, EXIT_OK


COMMANDS = {
    "bsm-curve": cmd_bsm_curve,
    "rate-envelope": cmd_rate_envelope,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
    "repeaterless": cmd_repeaterless,
    "calibrate-fig4": cmd_calibrate_fig4,
}


PLOT_SCRIPT = '''"""Plot {csv_name}; generated by tree-repeater."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
with open(path) as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
fig, ax = plt.subplots()
for protocol in dict.fromkeys(r["protocol"] for r in rows):
    sel = [r for r in rows if r["protocol"] == protocol]
    ax.semilogy([float(r["L_km"]) for r in sel], [float(r["rate_ebits_per_mode"]) for r in sel], label=protocol)
sel = [r for r in rows if r["protocol"] == rows[0]["protocol"]]
ax.semilogy([float(r["L_km"]) for r in sel], [float(r["repeaterless_rate"]) for r in sel], "k--", label="repeaterless")
ax.set_xlabel("L (km)")
ax.set_ylabel("rate (ebits/mode)")
ax.legend()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tree-repeater", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment file")
        p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
        p.add_argument("--seed", type=int, help="oracle seed (unsigned 64-bit)")
        p.add_argument("--samples", type=int, help="Monte Carlo samples per estimate")
        p.add_argument("--variant", choices=[v.value for v in AdaptiveVariant])
        if name == "rate-envelope":
            p.add_argument("--plot-script", type=Path, help="also write a matplotlib script for the CSV")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        spec = read_spec(args.config, variant=args.variant, out=str(args.out) if args.out else None)
        spec = with_oracle(spec, seed=args.seed, samples=args.samples)
        if spec.oracle.samples < 1:
            raise ConfigError("--samples must be >= 1")
        table, code = COMMANDS[args.command](spec)
    except (ValueError, BadInput) as exc:
        print(f"tree-repeater {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    text = table.render()
    if spec.out:
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        plot = getattr(args, "plot_script", None)
        if plot is not None:
            plot.write_text(PLOT_SCRIPT.format(csv_name=out.name, csv_path=str(out)))
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
