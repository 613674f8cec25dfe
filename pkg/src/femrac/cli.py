"""Command line entry point.

    femrac run --scenario sf_fig1 --out runs/fig1 --plots
    femrac sweep --scenario sf_fig1 --param gamma0 --values 1,10,100 --out runs/g0
    femrac sweep --scenario of_fig6 --param gamma1 --values 0,10 \\
        --cross reference=constant,sine,exponential --out runs/g1
    femrac reproduce --out runs/all
    femrac check --out runs/all

``--scenario`` takes a JSON file or the name of a shipped preset.  Exit
status is 0 on success, 1 when a run overflows or a criterion fails, and 2
for configuration errors.
"""

import argparse
import json
import sys

from .harness import (DEFAULT_DECIMATE, EXIT_CONFIG, EXIT_OK, PRESETS, SWEEP_PARAMETERS,
                      ScenarioError, load_scenario, run_experiment, run_sweep)


def parse_values(text, parameter):
    """``"1,10,100"`` for gains; signal names or a JSON list for ``reference``."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("["):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"values: parse error: {exc}"]) from None
        if not isinstance(values, list):
            raise ScenarioError(["values: expected a JSON list"])
        return values
    items = [v.strip() for v in text.split(",") if v.strip()]
    if parameter == "reference":
        return [{"name": v} for v in items]
    try:
        return [float(v) for v in items]
    except ValueError:
        raise ScenarioError([f"values: not a number list: {text!r}"]) from None


def _parser():
    p = argparse.ArgumentParser(prog="femrac", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True, help=f"JSON file or preset {list(PRESETS)}")
    r.add_argument("--out", required=True)
    r.add_argument("--plots", action="store_true", help="also write plots.png (needs matplotlib)")
    r.add_argument("--decimate", type=int, default=DEFAULT_DECIMATE,
                   help="write every N-th sample to trace.csv")

    s = sub.add_parser("sweep", help="run a scenario over several parameter values")
    s.add_argument("--scenario", required=True)
    s.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    s.add_argument("--values", required=True)
    s.add_argument("--cross", help="second parameter, e.g. reference=constant,sine")
    s.add_argument("--out", required=True)
    s.add_argument("--decimate", type=int, default=DEFAULT_DECIMATE)

    c = sub.add_parser("check", help="evaluate the acceptance criteria on reproduced outputs")
    c.add_argument("--out", required=True)

    a = sub.add_parser("reproduce", help="run every preset and sweep the checks need")
    a.add_argument("--out", required=True)
    a.add_argument("--decimate", type=int, default=DEFAULT_DECIMATE)
    a.add_argument("--check", action="store_true", help="run the acceptance check afterwards")
    return p


def _check(out):
    from .acceptance import check_acceptance, exit_status, report_lines

    report = check_acceptance(out)
    for line in report_lines(report):
        print(line)
    if report["missing"]:
        print("not run: " + ", ".join(report["missing"]))
    return exit_status(report)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            status = run_experiment(load_scenario(args.scenario), args.out, plots=args.plots,
                                    decimate=args.decimate)
            if status != EXIT_OK:
                print(f"run diverged; partial outputs in {args.out}", file=sys.stderr)
            return status
        if args.command == "sweep":
            cross = None
            if args.cross:
                name, _, vals = args.cross.partition("=")
                cross = (name.strip(), parse_values(vals, name.strip()))
            values = parse_values(args.values, args.param)
            status = run_sweep(load_scenario(args.scenario), args.param, values, args.out,
                               cross=cross, decimate=args.decimate)
            with open(f"{args.out}/sweep.json", encoding="utf-8") as fh:
                report = json.load(fh)
            for run in report["runs"]:
                rate = "-" if run["rate"] is None else f"{run['rate']:.4f}"
                print(f"{run['label']:45s} {run['status']:8s} rate {rate}")
            for a in report["assertions"]:
                print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}")
            return status
        if args.command == "check":
            return _check(args.out)
        if args.command == "reproduce":
            from .acceptance import reproduce

            status = reproduce(args.out, decimate=args.decimate)
            return max(status, _check(args.out)) if args.check else status
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
