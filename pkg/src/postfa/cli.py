"""``psim``: validate, run, transform and classify machine files."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import lab, transforms
from .machine import (
    Kind,
    Machine,
    MachineError,
    MachineParseError,
    dump,
    machine_from_dict,
    save,
    validate_wellformed,
)
from .numerics import DEFAULT_TOLERANCE, TolerancePolicy, format_rational, parse_rational
from .semantics import (
    ZeroPostselectionMass,
    decide,
    evaluate_all,
    restart_closed_form,
    simulate_restart,
    strings_up_to,
)

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

CSV_HEADER = ["input", "p_a", "p_r", "p_nh", "P_accept", "P_reject"]
MC_HEADER = ["mc_accept_freq", "rounds", "seed"]
ZERO_POST = "ZERO_POSTSELECTION"


class UsageError(Exception):
    pass


def tolerance_from_env() -> TolerancePolicy:
    raw = os.environ.get("PSIM_TOLERANCE")
    if not raw:
        return DEFAULT_TOLERANCE
    try:
        value = float(raw)
        return TolerancePolicy(min(DEFAULT_TOLERANCE.eps_validate, value), value)
    except ValueError as exc:
        raise UsageError(f"bad PSIM_TOLERANCE {raw!r}: {exc}") from exc


def fmt(x) -> str:
    if isinstance(x, Fraction):
        return format_rational(x)
    return format(float(x), ".12g")


def read_doc(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MachineParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MachineParseError(f"{path}: expected a JSON object")
    return doc


def read_any(path, tol):
    """Machine or virtual composite from a file; machines are validated."""
    doc = read_doc(path)
    if "composite" in doc:
        try:
            return transforms.VirtualComposite.from_dict(doc)
        except (KeyError, TypeError) as exc:
            raise MachineParseError(f"{path}: malformed composite: {exc}") from exc
    m = machine_from_dict(doc)
    report = validate_wellformed(m, tol)
    if not report.ok:
        raise MachineError(report.violations)
    return m


def write_text(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {output}: {exc.strerror or exc}") from exc


def serialize(obj) -> str:
    if isinstance(obj, Machine):
        return save(obj)
    return json.dumps(obj.to_dict(), indent=1) + "\n"


# -- commands ----------------------------------------------------------------

def cmd_validate(args, tol) -> int:
    doc = read_doc(args.path)
    if "composite" in doc:
        comp = transforms.VirtualComposite.from_dict(doc)
        bad = [f for f in comp.factors if isinstance(f, Machine) and not validate_wellformed(f, tol).ok]
        if bad:
            print("INVALID: composite factor is not well-formed")
            return EXIT_FAIL
        print("OK")
        return EXIT_OK
    m = machine_from_dict(doc)
    report = validate_wellformed(m, tol)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.ok:
        print("OK")
        return EXIT_OK
    print("INVALID")
    for v in report.violations:
        print(f"  - {v}")
    return EXIT_FAIL


def _rows(m, words, restart: bool):
    """``(w, outcome, decision or None)`` for each requested word."""
    if isinstance(m, transforms.VirtualComposite):
        outcomes = ((w, transforms.evaluate_virtual(m, w)) for w in words)
        judge = lambda o: restart_closed_form(o)  # noqa: E731
    else:
        wanted = set(words)
        longest = max((len(w) for w in words), default=0)
        found = {w: o for w, o in evaluate_all(m, longest) if w in wanted}
        outcomes = ((w, found[w]) for w in words)
        judge = (lambda o: restart_closed_form(o)) if restart else (lambda o: decide(m, o))
    for w, o in outcomes:
        try:
            d = judge(o)
        except ZeroPostselectionMass:
            d = None
        yield w, o, d


def cmd_run(args, tol) -> int:
    m = read_any(args.path, tol)
    if isinstance(m, Machine) and m.kind.automaton:
        raise UsageError("run needs a probabilistic or quantum machine")
    if args.word is not None:
        bad = [c for c in args.word if c not in m.alphabet]
        if bad:
            raise UsageError(f"symbol {bad[0]!r} not in alphabet {list(m.alphabet)}")
        words = [args.word]
    else:
        words = list(strings_up_to(m.alphabet, args.enumerate))
    if args.mc and not args.restart:
        raise UsageError("--mc needs --restart")
    mc_machine = None
    if args.mc:
        if not isinstance(m, Machine) or m.kind.quantum:
            raise UsageError("--mc supports classical machines only")
        mc_machine = m if m.kind is Kind.RESTART_PFA else transforms.to_restart(m)
    out = _Sink(args.output)
    writer = csv.writer(out.handle, lineterminator="\n")
    writer.writerow(CSV_HEADER + (MC_HEADER if args.mc else []))
    for w, o, d in _rows(m, words, args.restart):
        row = [w, fmt(o.p_a), fmt(o.p_r), fmt(o.p_nh)]
        row += [ZERO_POST, ZERO_POST] if d is None else [fmt(d.accept_prob), fmt(d.reject_prob)]
        if mc_machine is not None:
            rep = simulate_restart(mc_machine, w, args.rounds, args.seed)
            row += [fmt(rep.accept_freq), str(args.rounds), str(args.seed)]
        writer.writerow(row)
    out.close()
    return EXIT_OK


class _Sink:
    def __init__(self, output):
        self.path = output
        if output in (None, "-"):
            self.handle = sys.stdout
        else:
            try:
                self.handle = open(output, "w", encoding="utf-8", newline="")
            except OSError as exc:
                raise UsageError(f"cannot write {output}: {exc.strerror or exc}") from exc

    def close(self):
        if self.handle is not sys.stdout:
            self.handle.close()


TRANSFORM_ARITY = {
    "to-restart": 1, "to-postselect": 1, "complement": 1, "union": 2, "intersect": 2,
    "amplify": 1, "riga-to-std": 1, "errorfree-pair": 2, "riga-errorfree": 1,
    "to-unbounded": 1, "prefix-dispatch": 2, "partition": 1,
}


def _parse_assignments(text: str, what: str) -> dict:
    """``a=1,b=2`` -> ``{'a': '1', 'b': '2'}``; an empty key names the empty string."""
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"bad {what} entry {part!r}; expected key=value")
        out[key.strip()] = value.strip()
    return out


def cmd_transform(args, tol) -> int:
    op = args.op
    if len(args.inputs) != TRANSFORM_ARITY[op]:
        raise UsageError(f"{op} takes {TRANSFORM_ARITY[op]} input file(s), got {len(args.inputs)}")
    ins = [read_any(p, tol) for p in args.inputs]
    materialize = not args.virtual
    cap = args.cap
    try:
        if op == "to-restart":
            result = transforms.to_restart(ins[0])
        elif op == "to-postselect":
            result = transforms.to_postselection(ins[0])
        elif op == "complement":
            result = transforms.complement(ins[0])
        elif op == "union":
            result = transforms.union(*ins, materialize=materialize, cap=cap)
        elif op == "intersect":
            result = transforms.intersect(*ins, materialize=materialize, cap=cap)
        elif op == "amplify":
            if args.eps is None:
                raise UsageError("amplify needs --eps p/q")
            plan, result = transforms.amplify(ins[0], parse_rational(args.eps),
                                              materialize=bool(args.materialize), cap=cap)
            print(f"k={plan.k} eps_in={plan.eps_in} eps_out<={plan.eps_out_bound}", file=sys.stderr)
        elif op == "riga-to-std":
            result = transforms.riga_to_standard(ins[0])
        elif op == "errorfree-pair":
            result = transforms.errorfree_from_cutpoint_pair(*ins)
        elif op == "riga-errorfree":
            result = transforms.riga_errorfree_from_cutpoint0(ins[0], side=args.side)
        elif op == "to-unbounded":
            result = transforms.to_unbounded_standard(ins[0])
        elif op == "prefix-dispatch":
            if args.routing is None or args.short is None:
                raise UsageError("prefix-dispatch needs --routing and --short")
            routing = {k: int(v) for k, v in _parse_assignments(args.routing, "routing").items()}
            short = {k: v == "accept" for k, v in _parse_assignments(args.short, "short").items()}
            result = transforms.prefix_dispatch(*ins, routing=routing, short=short,
                                                materialize=materialize)
        else:
            result = transforms.partition_states(ins[0])
    except transforms.MaterializationRefused as exc:
        raise UsageError(f"{exc}; rerun with --virtual") from exc
    except (transforms.TransformError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    write_text(serialize(result), args.output)
    return EXIT_OK


def _oracle(key: str, tol) -> lab.LanguageOracle:
    if key in lab.ORACLES:
        return lab.ORACLES[key]()
    if not Path(key).exists():
        raise UsageError(f"unknown oracle {key!r}; use leq, lpal, leqbar or a dfa file")
    d = read_any(key, tol)
    if not isinstance(d, Machine) or d.kind is not Kind.DFA:
        raise UsageError(f"oracle file {key} is not a dfa")
    return lab.oracle_from_dfa(d, name=Path(key).name)


def _cell(pair) -> str:
    if pair is None:
        return "none"
    w, p = pair
    return f"{w}:{fmt(p)}"


def cmd_classify(args, tol) -> int:
    m = read_any(args.path, tol)
    oracle = _oracle(args.oracle, tol)
    try:
        mode = lab.parse_mode(args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        v = lab.classify(m, oracle, mode, args.max_len, tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    name = Path(args.path).name
    print(f"machine {name}, language {oracle.name}, mode {mode.label}, |w| <= {v.max_len_checked}")
    print(f"  worst member:    {_cell(v.worst_member)}")
    print(f"  worst nonmember: {_cell(v.worst_nonmember)}")
    if v.holds:
        print("  recognized")
    else:
        print(f"  NOT recognized; counterexample {v.counterexample!r}")
    print(f"VERDICT holds={str(v.holds).lower()} worst_member={_cell(v.worst_member)} "
          f"worst_nonmember={_cell(v.worst_nonmember)}")
    return EXIT_OK if v.holds else EXIT_FAIL


def cmd_examples(args, tol) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc.strerror or exc}") from exc
    for name, build in lab.WITNESSES.items():
        if name.startswith("riga") and not args.all:
            continue
        path = out / name
        dump(build(), path)
        print(path)
    return EXIT_OK


def cmd_bench(args, tol) -> int:
    m = read_any(args.path, tol)
    best = None
    count = 0
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        count = sum(1 for _ in lab.accept_probabilities(m, args.max_len))
        dt = time.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    rate = count / best if best else float("inf")
    print(f"strings={count} max_len={args.max_len} best_seconds={best:.6f} strings_per_second={rate:.1f}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psim", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check well-formedness of a machine file")
    v.add_argument("path")

    r = sub.add_parser("run", help="evaluate a machine, CSV on stdout")
    r.add_argument("path")
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--word")
    g.add_argument("--enumerate", type=int, metavar="MAX_LEN")
    r.add_argument("--restart", action="store_true", help="report the restart-machine decision")
    r.add_argument("--mc", action="store_true", help="add a Monte Carlo estimate (with --restart)")
    r.add_argument("--rounds", type=int, default=100_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--output")

    t = sub.add_parser("transform", help="apply a construction")
    t.add_argument("op", choices=sorted(TRANSFORM_ARITY))
    t.add_argument("inputs", nargs="+")
    t.add_argument("--output")
    t.add_argument("--virtual", action="store_true", help="write a composite descriptor")
    t.add_argument("--materialize", action="store_true", help="amplify: build the tensor power")
    t.add_argument("--eps")
    t.add_argument("--side", choices=["L", "coL"], default="L")
    t.add_argument("--routing", help="prefix-dispatch: e.g. a=1,b=2")
    t.add_argument("--short", help="prefix-dispatch: e.g. =reject,a=accept,b=reject")
    t.add_argument("--cap", type=int, default=transforms.DEFAULT_STATE_CAP)

    c = sub.add_parser("classify", help="check a recognition mode by enumeration")
    c.add_argument("path")
    c.add_argument("--oracle", required=True)
    c.add_argument("--mode", required=True)
    c.add_argument("--max-len", type=int, required=True)

    e = sub.add_parser("examples", help="write the witness machine files")
    e.add_argument("--out", default="witnesses")
    e.add_argument("--all", action="store_true", help="also write the Riga demo")

    b = sub.add_parser("bench", help="time evaluation over enumerated strings")
    b.add_argument("path")
    b.add_argument("--max-len", type=int, default=10)
    b.add_argument("--repeat", type=int, default=3)
    return p


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "transform": cmd_transform,
            "classify": cmd_classify, "examples": cmd_examples, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        tol = tolerance_from_env()
        if getattr(args, "enumerate", None) is not None and args.enumerate < 0:
            raise UsageError("--enumerate must be >= 0")
        if getattr(args, "max_len", None) is not None and args.max_len < 0:
            raise UsageError("--max-len must be >= 0")
        return COMMANDS[args.command](args, tol)
    except UsageError as exc:
        print(f"psim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MachineParseError as exc:
        print(f"psim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MachineError as exc:
        print("INVALID", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
