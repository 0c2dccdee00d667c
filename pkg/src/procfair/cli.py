"""Command-line harness.

Subcommands: generate, train, evaluate, scenario run/compare,
sweep ws/p/grid, explain dump, presets list/show. Exit codes: 0 success,
1 validation error (bad flags, malformed config, missing file), 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .data import SyntheticConfig, dataset_dp, export_schema, generate_synthetic, write_csv
from .model import load_params, save_params
from .scenarios import (
    ResultBundle,
    ScenarioConfig,
    StageError,
    compare_scenarios,
    emit_sensitive_attributions,
    list_presets,
    load_preset,
    prepare_repetition,
    run_repetition,
    run_scenario,
)
from .sweeps import SweepSettings, p_sweep, sweep_p_ws, sweep_ws, write_sweep_csv
from .train import TrainConfig, evaluate
from .util import config_hash


import re


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1. The
    # negative-number matcher is widened so range values like -5:5:50 pass
    # as arguments instead of being mistaken for flags.
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r"^-\d+(\.\d+)?(:-?[\d.]+){0,2}$")

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_range(text: str) -> tuple[float, float, int]:
    """Parse 'lo:hi:count' grid specs."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range must look like lo:hi:count, got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2:
        raise ValueError("range count must be >= 2")
    return lo, hi, count


def _load_scenario(args) -> ScenarioConfig:
    if getattr(args, "preset", None):
        cfg = ScenarioConfig.from_dict(load_preset(args.preset))
    elif getattr(args, "config", None):
        cfg = ScenarioConfig.from_json(args.config)
    else:
        raise ValueError("provide --config FILE or --preset NAME")
    if getattr(args, "reps", None) is not None:
        cfg = replace(cfg, repetitions=args.reps)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def _cmd_generate(args) -> int:
    cfg = SyntheticConfig(p=args.p, n_points=args.n, seed=args.seed)
    data = generate_synthetic(cfg)
    h = config_hash({"p": args.p, "n": args.n, "seed": args.seed})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out, config_hash=h)
    schema_path = out.with_suffix(out.suffix + ".schema.json")
    export_schema(data).to_json(schema_path)
    print(f"wrote {data.n_rows} rows to {out} (dataset DP {dataset_dp(data):.3f})")
    print(f"wrote reload schema to {schema_path}")
    return 0


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("PROCFAIR_OUT")
    if not out:
        raise ValueError("provide --out DIR or set PROCFAIR_OUT")
    return Path(out)


def _cmd_train(args) -> int:
    cfg = _load_scenario(args)
    result = run_repetition(cfg, args.rep)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_params(result.params, out / "model.json")
    result.history.to_csv(out / "history.csv", config_hash=cfg.hash())
    report = result.report
    with open(out / "report.json", "w") as fh:
        json.dump({"config_hash": cfg.hash(), **report.to_dict()}, fh, indent=2)
    print(f"trained {cfg.scenario_id} (rep {args.rep}): "
          f"acc={report.accuracy:.3f} gpf_fae={report.gpf_fae:.3f} dp={report.dp:.3f}")
    print(f"model written to {out / 'model.json'}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_scenario(args)
    params = load_params(args.model)
    # Rebuild the rep's data pipeline so the model sees the same test split.
    _, test_ds, pairs, background, mmd_cfg = prepare_repetition(cfg, args.rep)
    report = evaluate(params, test_ds, pairs, mmd_cfg, background=background)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump({"config_hash": cfg.hash(), **report.to_dict()}, fh, indent=2)
    print(f"evaluated {args.model}: acc={report.accuracy:.3f} "
          f"gpf_fae={report.gpf_fae:.3f} dp={report.dp:.3f}")
    return 0


def _cmd_scenario_run(args) -> int:
    cfg = _load_scenario(args)
    out_dir = _out_dir(args)
    bundle_path = out_dir / f"{cfg.scenario_id}.bundle.json"
    if bundle_path.exists() and not args.force:
        raise ValueError(f"{bundle_path} exists; pass --force to overwrite")
    bundle = run_scenario(cfg, out_dir=out_dir)
    agg = bundle.aggregate
    def _fmt(name):
        entry = agg.get(name, {})
        return "n/a" if entry.get("mean") is None else f"{entry['mean']:.3f}"
    print(f"scenario {cfg.scenario_id}: {len(bundle.reports)}/{cfg.repetitions} repetitions ok")
    print(f"  acc={_fmt('accuracy')} gpf_fae={_fmt('gpf_fae')} dp={_fmt('dp')}")
    if bundle.errors:
        for err in bundle.errors:
            print(f"  rep {err['repetition']} failed at {err['stage']}: {err['error']}")
    print(f"bundle written to {bundle_path}")
    return 0


def _cmd_scenario_compare(args) -> int:
    bundles = [ResultBundle.from_json(p) for p in args.bundles]
    rows = compare_scenarios(bundles, metric=args.metric, alpha=args.alpha)
    for row in rows:
        if row.get("p_value") is None:
            print(f"{row['scenario_a']} vs {row['scenario_b']} [{row['metric']}]: undefined")
        else:
            mark = "significant" if row["significant"] else "not significant"
            print(
                f"{row['scenario_a']} vs {row['scenario_b']} [{row['metric']}]: "
                f"p={row['p_value']:.5f} ({mark} at {args.alpha})"
            )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)
        print(f"comparison written to {args.out}")
    return 0


def _sweep_settings(args) -> SweepSettings:
    return SweepSettings(
        n_points=args.n,
        pearson_threshold=args.pearson,
        epochs=args.epochs,
        n_permutations=args.perms,
    )


def _cmd_sweep_ws(args) -> int:
    from .data import pearson_select

    lo, hi, count = _parse_range(args.ws)
    settings = _sweep_settings(args)
    data = generate_synthetic(SyntheticConfig(p=args.p, n_points=args.n, seed=args.seed))
    data = pearson_select(data, settings.pearson_threshold)
    sl = sweep_ws(data, (lo, hi), count, args.seed, settings, p=args.p)
    rows = [
        {
            "p": args.p,
            "ws": float(sl.ws_values[j]),
            "ws_normalized": float(sl.ws_normalized[j]),
            "dp": r.dp,
            "gpf_fae": r.gpf_fae,
            "acc": r.accuracy,
        }
        for j, r in enumerate(sl.reports)
    ]
    h = config_hash({"cmd": "sweep_ws", "p": args.p, "ws": args.ws, "n": args.n, "seed": args.seed})
    write_sweep_csv(rows, args.out, config_hash=h)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def _cmd_sweep_p(args) -> int:
    lo, hi, count = _parse_range(args.p)
    settings = _sweep_settings(args)
    cfg = TrainConfig(mode="procedural", alpha=args.alpha)
    rows = p_sweep((lo, hi), count, cfg, seed=args.seed, settings=settings)
    h = config_hash({"cmd": "sweep_p", "p": args.p, "alpha": args.alpha,
                     "n": args.n, "seed": args.seed})
    write_sweep_csv(rows, args.out, config_hash=h)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def _cmd_sweep_grid(args) -> int:
    p_lo, p_hi, p_count = _parse_range(args.p)
    ws_lo, ws_hi, ws_count = _parse_range(args.ws)
    settings = _sweep_settings(args)
    grid = sweep_p_ws((p_lo, p_hi), (ws_lo, ws_hi), (p_count, ws_count), args.seed, settings)
    h = config_hash({"cmd": "sweep_grid", "p": args.p, "ws": args.ws,
                     "n": args.n, "seed": args.seed})
    grid.to_csv(args.out, config_hash=h)
    print(f"wrote {p_count * ws_count} grid rows to {args.out}")
    return 0


def _cmd_explain_dump(args) -> int:
    cfg = _load_scenario(args)
    if args.model:
        params = load_params(args.model)
        _, test_ds, pairs, background, _ = prepare_repetition(cfg, args.rep)
    else:
        result = run_repetition(cfg, args.rep)
        params, test_ds, pairs, background = (
            result.params, result.test_ds, result.pairs, result.background,
        )
    summary = emit_sensitive_attributions(
        params, test_ds, pairs, args.out, background=background, cfg_hash=cfg.hash()
    )
    print(
        f"wrote sensitive attributions to {args.out} "
        f"(mean s1 {summary['mean_s1']:+.4f}, mean s2 {summary['mean_s2']:+.4f})"
    )
    return 0


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in list_presets():
            print(name)
    else:
        print(json.dumps(load_preset(args.name), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="procfair", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="generate a synthetic dataset CSV")
    p.add_argument("--p", type=float, required=True, help="group-bias parameter in [0,1]")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train one model from a scenario config")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--preset", help="built-in preset name")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--rep", type=int, default=0, help="repetition index to run")
    p.add_argument("--out", help="output directory (default: $PROCFAIR_OUT)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a scenario's test split")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--preset", help="built-in preset name")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--out", help="output directory (default: $PROCFAIR_OUT)")
    p.set_defaults(func=_cmd_evaluate)

    scen = sub.add_parser("scenario", help="multi-repetition experiment bundles")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    p = scen_sub.add_parser("run", help="run all repetitions and write a bundle")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--preset", help="built-in preset name")
    p.add_argument("--out", help="output directory (default: $PROCFAIR_OUT)")
    p.add_argument("--reps", type=int, help="override repetition count")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing bundle in the output directory")
    p.set_defaults(func=_cmd_scenario_run)
    p = scen_sub.add_parser("compare", help="rank-sum comparison of bundles")
    p.add_argument("bundles", nargs="+", help="bundle JSON paths (>= 2)")
    p.add_argument("--metric", help="single metric to compare (default: all)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=_cmd_scenario_compare)

    sweep = sub.add_parser("sweep", help="bias-interaction sweeps")
    sweep_sub = sweep.add_subparsers(dest="sweep_command", required=True)

    def _common_sweep_flags(sp):
        sp.add_argument("--n", type=int, default=20000, help="synthetic points per dataset")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--pearson", type=float, default=0.30,
                        help="feature-selection threshold")
        sp.add_argument("--epochs", type=int, default=300)
        sp.add_argument("--perms", type=int, default=1000, help="permutation count")
        sp.add_argument("--out", required=True, help="output CSV path")

    p = sweep_sub.add_parser("ws", help="sensitive-weight sweep at fixed dataset bias")
    p.add_argument("--p", type=float, default=0.65)
    p.add_argument("--ws", default="-5:5:101", help="lo:hi:count grid")
    _common_sweep_flags(p)
    p.set_defaults(func=_cmd_sweep_ws)

    p = sweep_sub.add_parser("p", help="dataset-bias sweep with regularized training")
    p.add_argument("--p", default="0.5:0.65:20", help="lo:hi:count grid")
    p.add_argument("--alpha", type=float, default=0.5, help="regularizer weight")
    _common_sweep_flags(p)
    p.set_defaults(func=_cmd_sweep_p)

    p = sweep_sub.add_parser("grid", help="full p x ws grid")
    p.add_argument("--p", default="0.3:0.7:50", help="lo:hi:count grid")
    p.add_argument("--ws", default="-5:5:50", help="lo:hi:count grid")
    _common_sweep_flags(p)
    p.set_defaults(func=_cmd_sweep_grid)

    expl = sub.add_parser("explain", help="attribution dumps")
    expl_sub = expl.add_subparsers(dest="explain_command", required=True)
    p = expl_sub.add_parser("dump", help="per-point sensitive-attribute SHAP values")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--preset", help="built-in preset name")
    p.add_argument("--model", help="saved model JSON (default: train per config)")
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_explain_dump)

    p = sub.add_parser("presets", help="built-in scenario presets")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?", help="preset name for 'show'")
    p.set_defaults(func=_cmd_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "action", None) == "show" and not getattr(args, "name", None):
            raise ValueError("presets show requires a preset name")
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
