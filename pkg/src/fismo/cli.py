"""Command line entry point.

Subcommands:
  fismo run --config FILE [--seed N] [--out DIR]   execute a config
  fismo compare --glob PATTERN [--out FILE]        run + tabulate configs
  fismo audit --run DIR [--out FILE]               lemma-audit a run dir
  fismo verify                                     full acceptance suite
"""

import argparse
import glob
import json
import sys
from dataclasses import replace
from pathlib import Path

from .diagnostics import lemma_audit
from .errors import FismoError
from .harness import compare, load_config, load_snapshots, run
from .problems import build_problem


def _cmd_run(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seeds=(args.seed,))
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    paths = run(config)
    for path in paths:
        print(path)
    return 0


def _cmd_compare(args):
    config_paths = sorted(glob.glob(args.glob))
    if not config_paths:
        print(f"no config files match {args.glob!r}", file=sys.stderr)
        return 2
    configs = [load_config(p) for p in config_paths]
    summary, table = compare(configs)
    print(table)
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_audit(args):
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        print(f"{run_dir}: no manifest.json", file=sys.stderr)
        return 2
    manifest = json.loads(manifest_path.read_text())
    problem = build_problem(**manifest["config"]["problem"])
    audited = 0
    failures = 0
    for entry in manifest["runs"]:
        if "snapshots" not in entry:
            continue
        snapshots = load_snapshots(run_dir / entry["snapshots"])
        report = lemma_audit(snapshots, problem)
        audited += 1
        text = report.to_json()
        print(f"== seed {entry['seed']} ==")
        print(text)
        if args.out:
            out_path = Path(args.out)
            out_path.parent.mkdir(parents=True, exist_ok=True)
            name = f"audit_seed{entry['seed']}.json"
            (out_path / name if out_path.is_dir() else out_path).write_text(text + "\n")
        if not report.all_passed:
            failures += 1
    if audited == 0:
        print("no snapshot files in this run dir (set snapshot_every=1)", file=sys.stderr)
        return 2
    return 1 if failures else 0


def _cmd_verify(args):
    from .acceptance import run_all

    results = run_all(only=args.criterion)
    return 0 if all(passed for _, passed, _ in results) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fismo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override: run only this seed")
    p_run.add_argument("--out", default=None, help="override output_dir")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several configs and tabulate")
    p_cmp.add_argument("--glob", required=True, help="glob over config files")
    p_cmp.add_argument("--out", default=None, help="write the JSON summary here")
    p_cmp.set_defaults(func=_cmd_compare)

    p_audit = sub.add_parser("audit", help="lemma-audit a recorded run directory")
    p_audit.add_argument("--run", required=True, help="output dir of a snapshotted run")
    p_audit.add_argument("--out", default=None, help="write JSON report(s) here")
    p_audit.set_defaults(func=_cmd_audit)

    p_verify = sub.add_parser("verify", help="run the acceptance suite")
    p_verify.add_argument("--criterion", type=int, default=None,
                          help="run a single criterion by number")
    p_verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FismoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
