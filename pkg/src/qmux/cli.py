"""``qmux-sim``: run an experiment and write its table as CSV.

Exit codes: 0 success, 2 configuration error, 3 numerical invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import analytics, core, noise, protocols
from .config import EXPERIMENTS, PROTOCOLS, ExperimentConfig, parse_config, to_text
from .errors import ConfigurationError, InvariantViolation
from .table import SweepTable, check_positive_finite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

EC_NOTE = (
    "raw-rate ratio is the traditional waiting factor alone; the normalized "
    "ratio also divides by resources (M=4, m=1/P0 against M=6, m=3/P0), so the "
    "two figures of merit differ"
)

# flag -> config key
FLAGS = {
    "--L-min": "L_min",
    "--L-max": "L_max",
    "--L-step": "L_step",
    "--L": "L",
    "--k": "k",
    "--n-pairs": "n_pairs",
    "--T2": "T2",
    "--c": "c",
    "--L-att": "L_att",
    "--eta-os": "eta_OS",
    "--P-es": "P_ES",
    "--C-M": "C_M",
    "--C-p": "C_p",
    "--switches": "switches",
    "--n-switches": "n_switches",
    "--trials": "trials",
    "--seed": "seed",
    "--output": "output",
    "--n": "n",
    "--p0": "p0",
    "--protocol": "protocol",
    "--noise": "noise",
    "--wait-factor": "wait_factor",
    "--format": "format",
    "--workers": "workers",
}


def _sweep(cfg: ExperimentConfig, fn: Callable[[float], tuple], xs: Sequence[float]) -> list[tuple]:
    """Evaluate ``fn`` over ``xs``; rows come back in grid order for any worker count."""
    if cfg.workers == 1:
        return [fn(x) for x in xs]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, xs))


def fidelity_vs_distance(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(["L_km", "F_pair", "F_qmx_dph", "F_trad_dph", "P_D_qmx", "P_D_trad"])

    def row(L):
        p = cfg.params.at(L)
        q = protocols.qmux_deutsch_fidelity(p)
        t = protocols.trad_deutsch_fidelity(p)
        return (L, noise.pair_fidelity_qmux(p), q.out_fidelity, t.out_fidelity, q.p_success, t.p_success)

    for r in _sweep(cfg, row, cfg.L_grid()):
        table.add(*r)
    return table


def ratio_purification(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(["L_km", "P0", "ratio", "raw_ratio", "R_qmx", "R_D"])

    def row(L):
        p = cfg.params.at(L)
        q = analytics.raw_rate_qmux(cfg.k, p, cfg.cost, cfg.switches, cfg.n_switches)
        d = analytics.raw_rate_deutsch(cfg.k, p, cfg.cost)
        ratio = analytics.ratio_purification(cfg.k, p, cfg.cost, cfg.switches, cfg.n_switches)
        raw = d.inverse_rate_coefficient / q.inverse_rate_coefficient
        return (L, noise.transmission_prob(p), ratio, raw, q.normalized_rate, d.normalized_rate)

    for r in _sweep(cfg, row, cfg.L_grid()):
        table.add(*r)
    check_positive_finite(table, ["ratio", "raw_ratio"])
    check_positive_finite(table, ["R_qmx", "R_D"], allow_inf=True)
    return table


def ratio_repeater(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(["L_km", "P0", "ratio", "raw_ratio", "R_qmx", "R_QR"])

    def row(L):
        p = cfg.params.at(L)
        raw, ratio = analytics.repeater_ratios(p, cfg.cost)
        q = analytics.raw_rate_qmux(1, p, cfg.cost)
        r = analytics.rate_single_node_qr(p, cfg.cost)
        return (L, noise.transmission_prob(p), ratio, raw, q.normalized_rate, r.normalized_rate)

    for r in _sweep(cfg, row, cfg.L_grid()):
        table.add(*r)
    check_positive_finite(table, ["ratio", "raw_ratio"])
    check_positive_finite(table, ["R_qmx", "R_QR"], allow_inf=True)
    return table


def ratio_ec(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(["L_km", "P0", "raw_ratio", "ratio", "ratio_exact_wait", "F_out_at_F_pair"])

    def row(L):
        p = cfg.params.at(L)
        p0 = noise.transmission_prob(p)
        raw, ratio = analytics.ec_ratios(p, cfg.cost, cfg.switches, cfg.wait_factor)
        exact = analytics.expected_attempts_3(p0) * p0
        _, ratio_exact = analytics.ec_ratios(p, cfg.cost, cfg.switches, exact)
        f_out = protocols.majority_vote_fidelity(noise.pair_fidelity_qmux(p))
        return (L, p0, raw, ratio, ratio_exact, f_out)

    for r in _sweep(cfg, row, cfg.L_grid()):
        table.add(*r)
    table.notes.append(EC_NOTE)
    check_positive_finite(table, ["raw_ratio", "ratio", "ratio_exact_wait"])
    return table


def cost_sweep(cfg: ExperimentConfig) -> SweepTable:
    grid = np.logspace(
        math.log10(cfg.cost_ratio_min), math.log10(cfg.cost_ratio_max), cfg.cost_points
    ).tolist()
    # the equal-cost point is always present
    if 1.0 not in grid and cfg.cost_ratio_min <= 1.0 <= cfg.cost_ratio_max:
        grid = sorted(grid + [1.0])
    sweep = analytics.cost_sweep(cfg.params.at(cfg.L), grid, max(cfg.k, 1))
    table = SweepTable(["L_km"] + sweep.columns)
    for r in sweep.rows:
        table.add(cfg.L, *r)
    check_positive_finite(table, ["ratio"])
    return table


def waiting_time(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(
        ["N", "P0", "analytic_mean", "analytic_mean_times_P0", "mc_mean", "mc_stderr", "mc_within_3se"]
    )
    if cfg.p0 is not None:
        p0s = [cfg.p0]
    else:
        p0s = [noise.transmission_prob(cfg.params.at(L)) for L in cfg.L_grid()]
    trials = cfg.mc_trials()

    def row(p0):
        exact = analytics.expected_attempts_n(cfg.n, p0)
        mean, se = analytics.monte_carlo_attempts(cfg.n, p0, trials, cfg.seed)
        within = abs(mean - exact) <= 3 * se if se > 0 else mean == exact
        return (cfg.n, p0, exact, exact * p0, mean, se, within)

    for r in _sweep(cfg, row, p0s):
        table.add(*r)
    check_positive_finite(table, ["analytic_mean", "mc_mean"])
    return table


def _simulate_once(cfg: ExperimentConfig, rng: np.random.Generator) -> list[protocols.TraceStep]:
    p = cfg.params.at(cfg.L)
    name = cfg.protocol
    if name == "qmux-entangle":
        return protocols.run_qmux_entangle(
            cfg.n_pairs, p, cfg.noise, rng, switches=cfg.switches, n_switches=cfg.n_switches
        ).trace
    if name == "traditional-entangle":
        return protocols.run_traditional_entangle(cfg.n_pairs, p, rng).trace
    if name == "deutsch":
        return protocols.qmux_deutsch_fidelity(p, engine=True).trace
    if name == "three-qubit-qmux":
        # runs are conditioned on the herald, so loss alone changes nothing here
        model = protocols.NOISE_NONE if cfg.noise in ("none", "loss") else protocols.NOISE_DEPHASING
        return protocols.run_three_qubit_qmux(p, model, rng).trace
    F = noise.pair_fidelity_qmux(p)
    if name == "four-qubit":
        return protocols.run_four_qubit_dephased_purification(F, rng).trace
    if name == "ec":
        pairs = [protocols.phase_damped_pair(F) for _ in range(3)]
        return protocols.run_three_qubit_ec(pairs, rng).trace
    raise ConfigurationError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")


def simulate(cfg: ExperimentConfig) -> SweepTable:
    table = SweepTable(["trial", "step", "name", "qubits", "outcome", "probability"])
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.mc_trials())
    for trial, ss in enumerate(streams, 1):
        rng = np.random.Generator(np.random.Philox(ss))
        for i, step in enumerate(_simulate_once(cfg, rng), 1):
            if not 0.0 <= step.probability <= 1.0 + core.STRUCTURAL_TOL:
                raise InvariantViolation(f"step {step.name} has probability {step.probability!r}")
            table.add(trial, i, step.name, " ".join(step.qubits), step.outcome, float(step.probability))
    return table


RUNNERS: dict[str, Callable[[ExperimentConfig], SweepTable]] = {
    "fidelity-vs-distance": fidelity_vs_distance,
    "ratio-purification": ratio_purification,
    "ratio-repeater": ratio_repeater,
    "ratio-ec": ratio_ec,
    "cost-sweep": cost_sweep,
    "waiting-time": waiting_time,
    "simulate": simulate,
}


def trace_text(table: SweepTable) -> str:
    """Plain-text step trace: one ``trial step name [qubits] outcome probability`` line per step."""
    lines = []
    for trial, step, name, qubits, outcome, prob in table.rows:
        lines.append(f"{trial} {step} {name} [{qubits}] {outcome or '.'} {prob:.12g}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig) -> tuple[str, SweepTable]:
    """Run under state validation and return (document text, table)."""
    with core.validating():
        table = RUNNERS[cfg.experiment](cfg)
    if len(table) == 0:
        raise InvariantViolation("experiment produced no rows")
    if cfg.experiment == "simulate" and cfg.format == "text":
        return trace_text(table), table
    return table.to_csv(), table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmux-sim", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key = value file")
    parser.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
    for flag, key in FLAGS.items():
        parser.add_argument(flag, dest=key, default=None, metavar=key.upper())
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {key: getattr(args, key) for key in FLAGS.values() if getattr(args, key) is not None}
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(args.experiment, text, overrides)
        if args.show_config:
            sys.stdout.write(to_text(cfg))
            return EXIT_OK
        document, table = run_experiment(cfg)
    except (ConfigurationError, OSError) as exc:
        print(f"qmux-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"qmux-sim: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    for note in table.notes:
        print(f"note: {note}", file=sys.stderr)
    if cfg.output == "-":
        sys.stdout.write(document)
    else:
        try:
            with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(document)
        except OSError as exc:
            print(f"qmux-sim: cannot write {cfg.output}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
