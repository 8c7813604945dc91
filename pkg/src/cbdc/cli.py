"""Command-line entry point.

    cbdc init --config topology.yaml --seed 42 [--out DIR]
    cbdc run scenario.yaml [--out DIR]
    cbdc bench --duration-ms 5000 --batch 64 --validators 4
    cbdc audit DIR/audit.jsonl [--genesis DIR/genesis.json]

Exit codes: 0 success, 1 an assertion or invariant failed, 2 bad
configuration or input. ``CBDC_LOG`` sets the log level (default WARNING).
"""
import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from cbdc.consensus import Evidence, ValidatorSet
from cbdc.errors import CbdcError, ConfigError
from cbdc.genesis import Genesis
from cbdc.harness import World, bench
from cbdc.ledger import AuditStream, LogRecord
from cbdc.regulator import AuditReplica
from cbdc.scenario import load_scenario

log = logging.getLogger("cbdc")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def cmd_init(args):
    scenario = load_scenario(args.config)
    scenario.seed = args.seed
    scenario.network = dataclasses.replace(scenario.network, seed=args.seed)
    world = World(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "genesis.json").write_text(world.genesis.to_json(), encoding="utf-8")
    epochs = out / "epochs.jsonl"
    epochs.unlink(missing_ok=True)
    for vintage in scenario.vintages:
        world.bank.write_epoch_record(epochs, vintage)
    print(json.dumps({"genesis": str(out / "genesis.json"), "genesis_hash": world.genesis.hash().hex(),
                      "validators": len(world.genesis.validators)}, sort_keys=True))
    return EXIT_OK


def export_run(world, result, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "genesis.json").write_text(world.genesis.to_json(), encoding="utf-8")
    world.sim.export_trace(out / "trace.jsonl")
    ref = world.reference().replica
    lines = [r.to_json() for r in ref.ledger.records]
    lines += [json.dumps({"checkpoint": h, "state_hash": s.hex()}) for h, s in ref.ledger.checkpoints]
    evidence = {}
    for v in world.honest:
        for ev in world.nodes[v].replica.evidence:
            evidence.setdefault(ev.key, ev)
    lines += [json.dumps({"evidence": json.loads(evidence[k].to_json())}, sort_keys=True) for k in sorted(evidence)]
    _write_lines(out / "audit.jsonl", lines)
    _write_lines(out / "report.jsonl", world.regulator().report_lines())
    _write_lines(out / "alerts.jsonl", [a.to_json() for a in result.alerts])


def cmd_run(args):
    scenario = load_scenario(args.scenario, require_script=True)
    world = World(scenario, record_dir=None)
    world.run()
    result = world.result()
    if args.out:
        export_run(world, result, args.out)
    summary = {
        "scenario": result.name,
        "ok": result.ok,
        "state_hash": result.state_hash,
        "trace_hash": result.trace_hash,
        "outstanding": result.report["outstanding_total"],
        **result.stats,
        "alerts": [a.kind for a in result.alerts],
    }
    print(json.dumps(summary, sort_keys=True))
    for failure in result.failures:
        print(f"FAIL {failure}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAILED


def cmd_bench(args):
    for name in ("duration_ms", "batch", "validators"):
        if getattr(args, name) < 0 or (name != "duration_ms" and getattr(args, name) == 0):
            raise ConfigError("must be positive", f"--{name.replace('_', '-')}")
    if args.validators < 4:
        raise ConfigError("need at least 4 validators", "--validators")
    result = bench(args.duration_ms, args.batch, args.validators, seed=args.seed)
    print(json.dumps({
        "validators": result.validators,
        "batch": result.batch,
        "duration_ms": result.duration_ms,
        "committed": result.committed,
        "elapsed_s": round(result.elapsed_s, 3),
        "entries_per_sec": round(result.rate, 1),
    }, sort_keys=True))
    return EXIT_OK


def read_audit_file(path):
    records, checkpoints, evidence = [], [], []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if "checkpoint" in doc:
                    checkpoints.append((doc["checkpoint"], bytes.fromhex(doc["state_hash"])))
                elif "evidence" in doc:
                    evidence.append(Evidence.from_json(json.dumps(doc["evidence"])))
                else:
                    records.append(LogRecord.from_json(line))
            except (ValueError, KeyError, TypeError, CbdcError) as exc:
                raise ConfigError(f"unreadable audit record: {exc}", f"{path}:{number}") from None
    first = records[0].height if records else 0
    return AuditStream(tuple(records), tuple(checkpoints), first), evidence


def cmd_audit(args):
    trace = Path(args.trace)
    genesis_path = Path(args.genesis) if args.genesis else trace.with_name("genesis.json")
    try:
        genesis = Genesis.from_json(genesis_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read genesis: {exc.strerror}", str(genesis_path)) from None
    stream, evidence = read_audit_file(trace)
    validators = ValidatorSet(genesis.validator_ids, tuple(v.consensus_key for v in genesis.validators))
    auditor = AuditReplica(genesis, validators, alert_path=args.alerts)
    auditor.ingest(stream)
    auditor.ingest_evidence(evidence)
    for line in auditor.report_lines():
        print(line)
    for alert in auditor.detect_anomalies():
        print(alert.to_json())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cbdc", description="Retail CBDC ledger simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="generate genesis and issuer epoch records")
    p.add_argument("--config", required=True, help="topology/policy YAML (scenario schema)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="execute a scenario")
    p.add_argument("scenario")
    p.add_argument("--out", help="write genesis, trace, audit stream, report and alerts here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="committed-entry throughput on the simulated network")
    p.add_argument("--duration-ms", type=int, default=5000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--validators", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="replay an audit stream as the regulator")
    p.add_argument("trace", help="audit.jsonl written by `run --out`")
    p.add_argument("--genesis", help="genesis.json (default: next to the trace)")
    p.add_argument("--alerts", help="append alerts to this file")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CBDC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CbdcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
