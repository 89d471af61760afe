"""Command line: ``v2drop {gen-model,run,compare,mask}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from ..compression.metrics import METRIC_KINDS
from ..compression.policies import POLICY_KINDS
from ..compression.schedule import CANONICAL_SCHEDULES, DropSchedule
from ..errors import ConfigError, ModelFormatError, ShapeError, StreamingIncompatibleError
from ..oracle.needle import NEEDLE_CONFIG, build_needle_weights
from ..runtime.config import ModelConfig
from ..runtime.engine import DecoderRuntime
from ..runtime.weights import generate_weights, load_model, save_model
from .harness import RunConfig, compare_grid, parse_policy, run_single
from .masks import default_grid, emit_mask
from .report import dumps_report, make_report, rows_to_csv
from .workload import SEED_ENV, WorkloadSpec, env_seed

EXIT_OK, EXIT_USAGE, EXIT_INCOMPATIBLE, EXIT_FORMAT = 0, 2, 3, 4

EPILOG = f"""\
schedules:
  comma-separated stages, each "layer:ratio" (prune that fraction of the vision
  tokens still present) or "layer=K" (keep K). Layers are 1-based and a stage
  fires after its layer runs. Shorthands: {", ".join(f"{k} = {v}" for k, v in CANONICAL_SCHEDULES.items())}.

environment:
  {SEED_ENV}  overrides workload seeds and the random policy seed

exit codes:
  0 success, 2 usage error, 3 policy/attention-path incompatibility, 4 model file error
"""


class UsageError(Exception):
    pass


def _grid(text: Optional[str], m: int):
    if not text:
        return default_grid(m)
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid must look like WxH, got {text!r}") from None
    return w, h


def _load_runtime(path: str) -> DecoderRuntime:
    weights, config = load_model(path)
    return DecoderRuntime(weights, config)


def _schedule(text: str, runtime: DecoderRuntime, accounting_layers: Optional[int]) -> DropSchedule:
    total = accounting_layers or runtime.config.n_layers
    return DropSchedule.parse(text, total)


def cmd_gen_model(args) -> int:
    seed = args.seed if args.seed is not None else (env_seed() if env_seed() is not None else 42)
    if args.needle:
        config = NEEDLE_CONFIG
        weights = build_needle_weights(config, seed)
    else:
        config = ModelConfig(args.n_layers, args.d_model, args.n_heads, args.d_ff, args.vocab_size,
                             args.positional_mode, args.rope_base)
        weights = generate_weights(config, seed)
    save_model(weights, config, args.out)
    print(f"wrote {args.out} (seed {seed})")
    return EXIT_OK


def _policy(args):
    seed = env_seed()
    return parse_policy(args.policy, args.metric, args.policy_seed if seed is None else seed, args.one_time_layer)


def cmd_run(args) -> int:
    runtime = _load_runtime(args.model)
    workload = WorkloadSpec.load(args.workload)
    schedule = _schedule(args.schedule, runtime, args.accounting_layers)
    record = run_single(runtime, workload, RunConfig(_policy(args), schedule, args.attn_path))
    report = make_report(args.model, runtime.config, [record])
    text = dumps_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.mask:
        m = record["M"]
        w, h = _grid(args.grid, m)
        mask = record["retained_mask"] if args.mask_stage is None else _stage_mask(record, args.mask_stage)
        emit_mask(mask, w, h, args.mask)
    return EXIT_OK


def _stage_mask(record: dict, stage: int) -> str:
    try:
        return record["stage_masks"][str(stage)]
    except KeyError:
        raise UsageError(f"no stage at layer {stage}; stages: {sorted(record['stage_masks'], key=int)}") from None


def cmd_compare(args) -> int:
    runtime = _load_runtime(args.model)
    kinds = [p.strip() for p in args.policies.split(",") if p.strip()]
    if not kinds:
        raise UsageError("--policies must name at least one policy")
    seed = env_seed()
    policies = [parse_policy(k, args.metric, args.policy_seed if seed is None else seed, args.one_time_layer)
                for k in kinds]
    paths = sorted(Path(args.workloads).glob("*.json"))
    if not paths:
        raise UsageError(f"no *.json workloads in {args.workloads}")
    workloads = [WorkloadSpec.load(p) for p in paths]
    schedules = [_schedule(s, runtime, args.accounting_layers) for s in (args.schedule or ["192"])]
    attn_paths = [p.strip() for p in args.attn_paths.split(",") if p.strip()]
    rows = compare_grid(runtime, workloads, policies, schedules, attn_paths)
    Path(args.out).write_text(rows_to_csv(rows), encoding="utf-8")
    if args.report:
        ok = [r for r in rows if r.get("status") == "ok"]
        for r in ok:
            r.pop("status")
        Path(args.report).write_text(dumps_report(make_report(args.model, runtime.config, ok)), encoding="utf-8")
    return EXIT_OK


def cmd_mask(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read report {args.report}: {exc}") from None
    try:
        record = report["runs"][args.run_index]
    except (KeyError, IndexError):
        raise UsageError(f"report has no run #{args.run_index}") from None
    mask = record["retained_mask"] if args.stage is None else _stage_mask(record, args.stage)
    w, h = _grid(args.grid, len(mask))
    txt = emit_mask(mask, w, h, args.out)
    print(f"wrote {args.out} and {txt}")
    return EXIT_OK


def _add_policy_flags(p) -> None:
    p.add_argument("--metric", choices=METRIC_KINDS, default="l2")
    p.add_argument("--policy-seed", type=int, default=0, help="seed for the random policy")
    p.add_argument("--one-time-layer", type=int, default=None,
                   help="stage layer for one_time_v2drop (default: first stage of --schedule)")
    p.add_argument("--accounting-layers", type=int, default=None,
                   help="depth used for equivalent token counts (default: model n_layers)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="v2drop", description="toy decoder runtime with vision token dropping",
                                 epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-model", help="generate deterministic weights", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    defaults = ModelConfig()
    g.add_argument("--n-layers", type=int, default=defaults.n_layers)
    g.add_argument("--d-model", type=int, default=defaults.d_model)
    g.add_argument("--n-heads", type=int, default=defaults.n_heads)
    g.add_argument("--d-ff", type=int, default=defaults.d_ff)
    g.add_argument("--vocab-size", type=int, default=defaults.vocab_size)
    g.add_argument("--positional-mode", choices=("rope", "nope"), default=defaults.positional_mode)
    g.add_argument("--rope-base", type=float, default=defaults.rope_base)
    g.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 42")
    g.add_argument("--needle", action="store_true", help="build the hand-constructed needle model instead")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_model)

    r = sub.add_parser("run", help="one inference with a drop policy", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("--model", required=True)
    r.add_argument("--workload", required=True, help="workload JSON file")
    r.add_argument("--policy", choices=POLICY_KINDS, default="v2drop")
    r.add_argument("--schedule", default="192")
    r.add_argument("--attn-path", choices=("dense", "streaming"), default="streaming")
    _add_policy_flags(r)
    r.add_argument("--out", help="report JSON (default: stdout)")
    r.add_argument("--mask", help="write the retention mask as PGM (+ .txt grid)")
    r.add_argument("--grid", help="mask grid WxH (default: square if M is a square, else Mx1)")
    r.add_argument("--mask-stage", type=int, default=None, help="mask after this stage layer instead of the final one")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="policy x schedule x attention-path grid to CSV", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    c.add_argument("--model", required=True)
    c.add_argument("--workloads", required=True, help="directory of workload JSON files")
    c.add_argument("--policies", required=True, help="comma-separated policy kinds")
    c.add_argument("--schedule", action="append", help="repeatable; default 192")
    c.add_argument("--attn-paths", default="streaming,dense")
    _add_policy_flags(c)
    c.add_argument("--out", required=True, help="CSV output")
    c.add_argument("--report", help="also write the successful runs as a JSON report")
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("mask", help="render a retention mask from a report")
    m.add_argument("--report", required=True)
    m.add_argument("--run-index", type=int, default=0)
    m.add_argument("--stage", type=int, default=None)
    m.add_argument("--grid")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mask)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StreamingIncompatibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except ModelFormatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (UsageError, ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
