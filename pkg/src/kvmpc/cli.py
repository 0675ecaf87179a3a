"""Command-line harness: parameter planning, end-to-end simulation, leakage
verification, dummy-economy comparison, and benchmark sweeps.

Every subcommand is deterministic under a fixed seed and emits CSV files with
a header row and a config-hash column, so runs can be reproduced exactly.
Configuration comes from an INI-style file (key = value, bracketed sections
are allowed and flattened) overridden by command-line flags; flags win.

Exit codes: 0 success, 2 configuration error, 3 assumption violation
detected, 4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import os
import sys

from . import accounting
from .accounting import ProtocolParams, build_report
from .collection import KeyValuePair
from .errors import IngestError, ParameterError
from .leakage import verify_leakage_bound
from .protocols import (
    StatisticsRequest,
    divisor_upper_bound,
    plaintext_statistics,
    run_end_to_end,
    validation_sweep,
    collect,
    default_codec,
)
from .runtime import TranscriptMetrics, latency_model
from .workloads import load_dataset, synthetic_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_VERIFY = 4

DEFAULTS = {
    "seed": 1,
    "nodes": 5,
    "subset": 2,
    "rate": None,  # None means: optimize for the node count
    "max_keys": 1,
    "gamma": 1,
    "radius": 1.0,
    "center": 0.0,
    "keys": 10,
    "clients": 50,
    "collusion": 1,
    "eps_f": 1.0,
    "eps_m": 1.0,
    "dummy_parties": 1,
    "preset": "local",
    "out": "out",
    "stat": "both",
    "noise": True,
    "confidence": 0.05,
    "delta": 2.0**-40,
    "data": None,
    "validate": False,
}

_BOOL_KEYS = {"noise", "validate"}
_INT_KEYS = {
    "seed", "nodes", "subset", "max_keys", "gamma", "keys", "clients",
    "collusion", "dummy_parties",
}
_FLOAT_KEYS = {"rate", "radius", "center", "eps_f", "eps_m", "confidence", "delta"}


def _coerce(key: str, value):
    if value is None or isinstance(value, (int, float, bool)) or key not in (
        _BOOL_KEYS | _INT_KEYS | _FLOAT_KEYS
    ):
        return value
    text = str(value).strip()
    if key in _BOOL_KEYS:
        return text.lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(text)
    return float(text)


def load_config(path: str | None) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ParameterError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg[key] = _coerce(key, value)
        for key, value in parser.defaults().items():
            cfg[key] = _coerce(key, value)
    return cfg


def config_hash(cfg: dict) -> str:
    # the output directory does not influence results, so identical runs into
    # different directories stay byte-identical
    blob = ";".join(f"{k}={cfg[k]}" for k in sorted(cfg) if k != "out")
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_params(cfg: dict) -> ProtocolParams:
    rate = cfg["rate"]
    if rate is None:
        rate = accounting.optimal_rate(cfg["nodes"])
    return ProtocolParams(
        nodes=cfg["nodes"],
        subset_size=cfg["subset"],
        dummy_rate=rate,
        max_keys=cfg["max_keys"],
        min_frequency=cfg["gamma"],
        value_radius=cfg["radius"],
        value_center=cfg["center"],
        num_keys=cfg["keys"],
        num_clients=cfg["clients"],
        collusion=cfg["collusion"],
        eps_frequency=cfg["eps_f"],
        eps_mean=cfg["eps_m"],
        dummy_parties=cfg["dummy_parties"],
    )


def _write_csv(path: str, header: list[str], rows: list[list]):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# -- subcommands ----------------------------------------------------------------


def cmd_plan(cfg: dict) -> int:
    params = build_params(cfg)
    chash = config_hash(cfg)
    report = build_report(params, cfg["stat"], cfg["noise"], cfg["confidence"])
    print(report.as_text())
    rows = [[name, value, chash] for name, value in zip(report.csv_header(), report.csv_row())]
    rows.append(["optimal_rate", accounting.optimal_rate(params.nodes), chash])
    rows.append(["min_leakage_epsilon", accounting.min_leakage_epsilon(params.nodes, params.max_keys), chash])
    rows.append(["leakage_lower_bound", accounting.leakage_lower_bound(params.max_keys), chash])
    for c in range(1, params.nodes - 1):
        eps_c = accounting.collusion_epsilon(params.max_keys, params.dummy_rate, params.nodes, c)
        rows.append([f"collusion_eps_c{c}", eps_c, chash])
        print(f"collusion_eps_c{c} = {eps_c}")
    _write_csv(os.path.join(cfg["out"], "plan.csv"), ["name", "value", "config"], rows)
    return EXIT_OK


def _load_or_generate(cfg: dict):
    if cfg["data"]:
        parsed = load_dataset(cfg["data"])
        if parsed.rejects:
            for lineno, reason in parsed.rejects:
                print(f"rejected line {lineno}: {reason}", file=sys.stderr)
        cfg["keys"] = max(cfg["keys"], len(parsed.key_names))
        cfg["clients"] = max(cfg["clients"], len(parsed.clients))
        names = parsed.key_names + [
            str(k) for k in range(len(parsed.key_names), cfg["keys"])
        ]
        return parsed.clients, names, len(parsed.rejects)
    params = build_params(cfg)
    data = synthetic_dataset(params, cfg["seed"])
    return data, [str(k) for k in range(cfg["keys"])], 0


def cmd_simulate(cfg: dict) -> int:
    datasets, key_names, reject_count = _load_or_generate(cfg)
    params = build_params(cfg)
    request = StatisticsRequest(
        statistic=cfg["stat"], noise=cfg["noise"], confidence_beta=cfg["confidence"]
    )
    report = run_end_to_end(
        datasets, request, params, cfg["seed"], validate=cfg["validate"]
    )
    chash = config_hash(cfg)
    out = cfg["out"]

    stat_rows = []
    for key in sorted(report.key_flags):
        stat_rows.append([
            key,
            key_names[key] if key < len(key_names) else str(key),
            report.frequencies.get(key, ""),
            "" if report.means.get(key) is None else report.means.get(key),
            report.key_flags[key],
            chash,
        ])
    _write_csv(
        os.path.join(out, "statistics.csv"),
        ["key", "name", "frequency", "mean", "flag", "config"],
        stat_rows,
    )

    lat = latency_model(cfg["preset"])
    metrics = report.metrics
    _write_csv(
        os.path.join(out, "metrics.csv"),
        [
            "run_id", "preset", "nodes", "subset", "keys", "rounds",
            "bytes_total", "model_time_ms", "client_elements", "config",
        ],
        [[
            cfg["seed"], cfg["preset"], params.nodes, params.subset_size,
            params.num_keys, metrics.rounds, metrics.total_bytes,
            lat.model_time_ms(metrics.rounds, metrics.total_bytes),
            metrics.client_elements, chash,
        ]],
    )

    summary = [report.privacy.as_text()]
    summary.append(f"real_pairs = {report.real_pair_count}")
    summary.append(f"dummy_pairs = {report.dummy_pair_count}")
    summary.append(f"rounds = {metrics.rounds}")
    summary.append(f"bytes_total = {metrics.total_bytes}")
    summary.append(f"client_elements = {metrics.client_elements}")
    summary.append(f"rejected_lines = {reject_count}")
    for err in report.ingest_errors:
        summary.append(f"ingest_error = {err}")
    for key, tag in report.validation_rejects:
        summary.append(f"validation_reject = key {key} (tag {tag})")
    text = "\n".join(summary) + "\n"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")

    violated = (
        report.ingest_errors
        or report.validation_rejects
        or reject_count
        or any(f != "ok" and f != "no_data" for f in report.key_flags.values())
    )
    return EXIT_ASSUMPTION if violated else EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    datasets, key_names, _ = _load_or_generate(cfg)
    counts, means = plaintext_statistics(datasets, cfg["keys"])
    chash = config_hash(cfg)
    rows = [
        [k, key_names[k] if k < len(key_names) else str(k), counts[k],
         "" if means[k] is None else means[k], chash]
        for k in range(cfg["keys"])
    ]
    _write_csv(
        os.path.join(cfg["out"], "oracle.csv"),
        ["key", "name", "frequency", "mean", "config"],
        rows,
    )
    print(f"wrote plaintext reference for {cfg['keys']} keys")
    return EXIT_OK


def cmd_verify_leakage(cfg: dict, q_max: int = 50) -> int:
    configs = [
        (0.4, 2.0 / 3.0),
        (accounting.optimal_rate(20), 0.1),
        (accounting.optimal_rate(5), 0.4),
    ]
    if cfg["rate"] is not None:
        configs.append((cfg["rate"], cfg["subset"] / cfg["nodes"]))
    chash = config_hash(cfg)
    rows = []
    all_ok = True
    for rate, p in configs:
        for lam in (1, 2):
            result = verify_leakage_bound(rate, p, lam, q_max)
            ok = result.ok
            all_ok = all_ok and ok
            rows.append([
                rate, p, lam, q_max, result.max_log_ratio, result.bound,
                "pass" if ok else "FAIL", chash,
            ])
            print(
                f"rate={rate:.6f} p={p:.6f} max_keys={lam}: "
                f"max_log_ratio={result.max_log_ratio:.9f} bound={result.bound:.9f} "
                f"{'pass' if ok else 'FAIL'}"
            )
    _write_csv(
        os.path.join(cfg["out"], "verify_leakage.csv"),
        ["rate", "selection_p", "max_keys", "q_max", "max_log_ratio", "bound", "status", "config"],
        rows,
    )
    return EXIT_OK if all_ok else EXIT_VERIFY


def compare_dummies_rows(
    eps_grid: list[float], delta: float, max_keys: int, nodes: int
) -> list[dict]:
    """Per-epsilon dummy economics of both schemes.

    The selective row uses the largest dummy rate whose leakage stays within
    the budget (fewest dummies at that budget); the reciprocal-convention
    per-key count 1/rate is the canonical comparison column, with the
    geometric pmf mean reported alongside. Budgets below the achievable
    minimum leakage are marked infeasible.
    """
    r_opt = accounting.optimal_rate(nodes)
    at_opt = 1.0 / r_opt
    rows = []
    for eps in eps_grid:
        row = {
            "eps": eps,
            "selective_per_key_at_optimal": at_opt,
            "one_sided_shift": accounting.one_sided_shift(eps, delta, max_keys),
        }
        rate = accounting.max_feasible_rate(eps, max_keys, nodes)
        if rate is None:
            row.update(feasible="no", rate_used="", selective_per_key="",
                       selective_per_key_pmf_mean="", ratio="", ratio_pmf="")
        else:
            per_key = 1.0 / rate
            per_key_pmf = (1.0 - rate) / rate
            row.update(
                feasible="yes",
                rate_used=rate,
                selective_per_key=per_key,
                selective_per_key_pmf_mean=per_key_pmf,
                ratio=row["one_sided_shift"] / per_key,
                ratio_pmf=row["one_sided_shift"] / per_key_pmf if per_key_pmf else "",
            )
        rows.append(row)
    return rows


def cmd_compare_dummies(cfg: dict, eps_grid: list[float] | None = None) -> int:
    if eps_grid is None:
        eps_grid = [round(0.4 + 0.1 * i, 10) for i in range(12)]  # 0.4 .. 1.5
    rows = compare_dummies_rows(eps_grid, cfg["delta"], cfg["max_keys"], cfg["nodes"])
    chash = config_hash(cfg)
    header = [
        "eps", "feasible", "rate_used", "selective_per_key",
        "selective_per_key_pmf_mean", "selective_per_key_at_optimal",
        "one_sided_shift", "ratio", "ratio_pmf", "config",
    ]
    csv_rows = [[row.get(h, "") for h in header[:-1]] + [chash] for row in rows]
    _write_csv(os.path.join(cfg["out"], "compare_dummies.csv"), header, csv_rows)
    for row in rows:
        if row["feasible"] == "yes":
            print(
                f"eps={row['eps']:.2f} selective={row['selective_per_key']:.3f} "
                f"one_sided={row['one_sided_shift']:.2f} ratio={row['ratio']:.2f}"
            )
        else:
            print(f"eps={row['eps']:.2f} infeasible for selective distribution")
    return EXIT_OK


def cmd_bench(
    cfg: dict,
    node_list: list[int] | None = None,
    key_counts: list[int] | None = None,
    validation_counts: list[int] | None = None,
) -> int:
    node_list = node_list or [cfg["nodes"]]
    key_counts = key_counts or [10, 100, 1000, 10000]
    validation_counts = validation_counts or [10, 100, 1000, 10000]
    chash = config_hash(cfg)
    rows = []
    for nodes in node_list:
        for keys in key_counts:
            run_cfg = dict(cfg, nodes=nodes, keys=keys, rate=cfg["rate"])
            params = build_params(run_cfg)
            data = synthetic_dataset(params, cfg["seed"])
            request = StatisticsRequest(statistic=cfg["stat"], noise=cfg["noise"])
            report = run_end_to_end(data, request, params, cfg["seed"])
            m = report.metrics
            for preset in ("local", "remote", "distant"):
                lat = latency_model(preset)
                rows.append([
                    "protocol", preset, nodes, params.subset_size, keys,
                    m.rounds, m.total_bytes,
                    lat.model_time_ms(m.rounds, m.total_bytes),
                    m.client_elements, chash,
                ])
    _write_csv(
        os.path.join(cfg["out"], "bench.csv"),
        ["kind", "preset", "nodes", "subset", "keys", "rounds", "bytes_total",
         "model_time_ms", "client_elements", "config"],
        rows,
    )

    # input-validation sweep: cost of checking flag wellformedness in batches
    val_rows = []
    codec = default_codec()
    for count in validation_counts:
        run_cfg = dict(cfg, keys=max(2, min(cfg["keys"], count)), clients=count, max_keys=1)
        params = build_params(run_cfg)
        # exactly `count` single-pair clients: the sweep size is the input count
        data = [[KeyValuePair(i % params.num_keys, 0.0)] for i in range(count)]
        metrics = TranscriptMetrics()
        nodes, _, _, _, _, _ = collect(data, params, codec, cfg["seed"], metrics, with_dummies=False)
        rejects, sweep = validation_sweep(nodes, codec.field, cfg["seed"])
        for preset in ("local", "remote", "distant"):
            lat = latency_model(preset)
            val_rows.append([
                "validate", preset, params.nodes, params.subset_size, count,
                sweep.rounds, sweep.node_bytes,
                lat.model_time_ms(sweep.rounds, sweep.node_bytes),
                len(rejects), chash,
            ])
    _write_csv(
        os.path.join(cfg["out"], "bench_validation.csv"),
        ["kind", "preset", "nodes", "subset", "inputs", "rounds", "bytes_total",
         "model_time_ms", "rejects", "config"],
        val_rows,
    )
    print(f"bench: {len(rows)} protocol rows, {len(val_rows)} validation rows")
    return EXIT_OK


# -- argument plumbing ------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="INI config file (flags override it)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--nodes", type=int, help="computation node count")
    parser.add_argument("--subset", type=int, help="nodes receiving each pair")
    parser.add_argument("--rate", type=float, help="dummy rate; omit to optimize")
    parser.add_argument("--max-keys", type=int, dest="max_keys", help="pairs per client cap")
    parser.add_argument("--gamma", type=int, help="assumed minimum key frequency")
    parser.add_argument("--radius", type=float, help="value half-range R")
    parser.add_argument("--center", type=float, help="value range center")
    parser.add_argument("--keys", type=int, help="key-domain size")
    parser.add_argument("--clients", type=int, help="client count")
    parser.add_argument("--collusion", type=int, help="tolerated colluding nodes")
    parser.add_argument("--eps-f", type=float, dest="eps_f", help="frequency budget")
    parser.add_argument("--eps-m", type=float, dest="eps_m", help="mean budget")
    parser.add_argument("--dummy-parties", type=int, dest="dummy_parties")
    parser.add_argument("--preset", choices=("local", "remote", "distant"))
    parser.add_argument("--stat", choices=("frequency", "mean", "both"))
    parser.add_argument("--no-noise", action="store_true", help="exact mode")
    parser.add_argument("--validate", action="store_true", help="run input validation")
    parser.add_argument("--delta", type=float, help="delta for approximate-DP baselines")
    parser.add_argument("--data", help="dataset file (client_id,key,value lines)")
    parser.add_argument("--out", help="output directory")


def _merge(cfg: dict, args: argparse.Namespace) -> dict:
    for key in DEFAULTS:
        if key in ("noise", "validate", "data", "out"):
            continue
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "no_noise", False):
        cfg["noise"] = False
    if getattr(args, "validate", False):
        cfg["validate"] = True
    if getattr(args, "data", None):
        cfg["data"] = args.data
    if getattr(args, "out", None):
        cfg["out"] = args.out
    return cfg


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kvmpc",
        description="Differentially private key-value statistics over "
        "selectively distributed secret shares (simulator and accountant)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, _help in (
        ("plan", "print and export the privacy/accuracy accounting"),
        ("simulate", "run the full protocol on a dataset"),
        ("oracle", "plaintext reference statistics for a dataset"),
        ("verify-leakage", "brute-force certification of the leakage bounds"),
        ("compare-dummies", "dummy economics: selective vs one-sided baselines"),
        ("bench", "sweep node/key counts and report transcript metrics"),
    ):
        p = sub.add_parser(name, help=_help)
        _add_common(p)
        if name == "verify-leakage":
            p.add_argument("--q-max", type=int, dest="q_max", default=50)
        if name == "compare-dummies":
            p.add_argument("--eps-grid", dest="eps_grid", help="comma-separated epsilons")
        if name == "bench":
            p.add_argument("--node-list", dest="node_list", help="comma-separated node counts")
            p.add_argument("--key-counts", dest="key_counts", help="comma-separated key counts")
            p.add_argument("--val-counts", dest="val_counts", help="comma-separated validation sizes")

    args = parser.parse_args(argv)
    try:
        cfg = _merge(load_config(args.config), args)
        if args.command == "plan":
            return cmd_plan(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg)
        if args.command == "verify-leakage":
            return cmd_verify_leakage(cfg, args.q_max)
        if args.command == "compare-dummies":
            grid = _parse_float_list(args.eps_grid) if args.eps_grid else None
            return cmd_compare_dummies(cfg, grid)
        if args.command == "bench":
            return cmd_bench(
                cfg,
                _parse_int_list(args.node_list) if args.node_list else None,
                _parse_int_list(args.key_counts) if args.key_counts else None,
                _parse_int_list(args.val_counts) if args.val_counts else None,
            )
        raise ParameterError(f"unknown command {args.command!r}")
    except (ParameterError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
