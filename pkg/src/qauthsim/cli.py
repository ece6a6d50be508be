"""Command-line front end.

Subcommands: ``params`` (sizing calculator), ``run`` (scenario execution),
``verify-tables`` (exact enumeration checks), ``oracle`` (direct relay-step
state dumps).  Exit codes: 0 all checks passed, 1 a conformance check
failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from fractions import Fraction

from .harness import (
    ScenarioError,
    emit_report,
    load_scenario,
    params_report,
    params_text,
    run_scenario,
    verify_tables,
)
from .qsim import BellLabel, SourceKind, swap_enumerate


def parse_probability(text: str) -> Fraction:
    """Accept '0.25', '1e-6', '1/131072', '2**-17', and '2^-17' forms."""
    s = text.strip().replace("^", "**")
    m = re.fullmatch(r"(\d+)\s*\*\*\s*-(\d+)", s)
    try:
        value = Fraction(1, int(m[1]) ** int(m[2])) if m else Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse probability {text!r}") from None
    if not 0 < value < 1:
        raise ValueError(f"probability must be in (0, 1), got {text!r}")
    return value


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand-level flags from clobbering main-level ones
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the scenario master seed")
    common.add_argument("--trials", type=int, default=argparse.SUPPRESS,
                        help="override the scenario trial count")
    common.add_argument("--format", dest="out_format", default=argparse.SUPPRESS,
                        choices=("text", "json", "csv"),
                        help="output format (default depends on subcommand)")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="write output to this path instead of stdout")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="qauthsim",
        description="Laboratory for a relay-mediated quantum authentication "
                    "protocol: seeded Monte Carlo scenarios, exact table "
                    "checks, and sizing math.")
    parser.set_defaults(seed=None, trials=None, out_format=None, out=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_params = sub.add_parser("params", parents=[common],
                              help="slot sizing for a failure budget")
    p_params.add_argument("target",
                          help="failure budget, e.g. 2**-17, 0.5, 1e-6")
    p_params.add_argument("--p1", default=None,
                          help="single-photon probability for splitter "
                               "inflation figures")

    p_run = sub.add_parser("run", parents=[common],
                           help="execute a scenario JSON document")
    p_run.add_argument("scenario", help="path to the scenario file, or -")

    sub.add_parser("verify-tables", parents=[common],
                   help="exact enumeration checks of the pair-algebra tables")

    p_oracle = sub.add_parser("oracle", parents=[common],
                              help="dump the exact relay-step distribution "
                                   "for one created pair and source")
    p_oracle.add_argument("--created", default="phi+",
                          help="created pair label: phi+ phi- psi+ psi-")
    p_oracle.add_argument("--source",
                          choices=[s.value for s in SourceKind],
                          default=SourceKind.ENTANGLED_PHI_PLUS.value,
                          help="what the relay actually emitted")
    p_oracle.add_argument("--product-bit", type=int, choices=(0, 1), default=0,
                          help="planted bit for the product source")
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _cmd_params(args) -> int:
    try:
        target = parse_probability(args.target)
        p1 = parse_probability(args.p1) if args.p1 is not None else None
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    doc = params_report(target, p1)
    if args.out_format == "json":
        from .harness import _json_value

        _write(_json_value(doc) + "\n", args.out)
    else:
        _write(params_text(doc), args.out)
    return 0


def _cmd_run(args) -> int:
    try:
        if args.scenario == "-":
            text = sys.stdin.read()
        else:
            with open(args.scenario, "r", encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2
    try:
        spec = load_scenario(text)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out_format in ("json", "csv"):
        overrides["out_format"] = args.out_format
    elif args.out_format == "text":
        print("error: run emits json or csv", file=sys.stderr)
        return 2
    if args.out is not None:
        overrides["out_path"] = args.out
    if overrides:
        from dataclasses import replace

        try:
            spec = replace(spec, **overrides)
            if "seed" in overrides and not 0 <= spec.seed < 2 ** 64:
                raise ScenarioError("seed must fit in 64 bits")
            if "trials" in overrides and spec.trials < 0:
                raise ScenarioError("trials must be non-negative")
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    report = run_scenario(spec)
    text_out = emit_report(report, spec.out_format, spec.out_path)
    if spec.out_path is None:
        sys.stdout.write(text_out)
    print(report.summary_text(), file=sys.stderr)
    if not report.all_pass:
        print(f"conformance FAILED: {', '.join(report.failures())}",
              file=sys.stderr)
        return 1
    return 0


def _cmd_verify_tables(args) -> int:
    report = verify_tables()
    _write(report.text(), args.out)
    return 0 if report.ok else 1


def _cmd_oracle(args) -> int:
    try:
        created = BellLabel.from_short(args.created)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    source = SourceKind(args.source)
    table = swap_enumerate(created, source, product_bit=args.product_bit)

    if args.out_format == "json":
        from .harness import _json_value

        doc = {
            "created": created.short(),
            "source": source.value,
            "product_bit": args.product_bit if source is SourceKind.PRODUCT else None,
            "outcomes": [
                {
                    "outcome": cell.outcome.short(),
                    "probability": str(cell.probability),
                    "residual_pair": (cell.residual_pair.short()
                                      if cell.residual_pair else None),
                    "joint": {"".join(map(str, bits)): str(prob)
                              for bits, prob in sorted(cell.joint.items())},
                }
                for cell in table.outcomes
            ],
        }
        _write(_json_value(doc) + "\n", args.out)
        return 0

    lines = [f"created={created.short()} source={source.value}"
             + (f" planted_bit={args.product_bit}"
                if source is SourceKind.PRODUCT else "")]
    for cell in table.outcomes:
        residual = cell.residual_pair.short() if cell.residual_pair else "mixed"
        lines.append(f"outcome={cell.outcome.short()}"
                     f" prob={cell.probability} residual={residual}")
        for bits, prob in sorted(cell.joint.items()):
            lines.append(f"  bits={''.join(map(str, bits))} prob={prob}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


_COMMANDS = {
    "params": _cmd_params,
    "run": _cmd_run,
    "verify-tables": _cmd_verify_tables,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 for usage errors already; normalize anything else
        return exc.code if exc.code in (0, 2) else 2
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
