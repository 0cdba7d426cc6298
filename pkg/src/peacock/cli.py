"""``peacock`` command line.

Exit codes: 0 success, 2 attestation failure, 3 detection threshold
exceeded, 4 usage error (1 is reserved for runtime errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import tempfile
import threading
from pathlib import Path
from typing import Optional, Sequence

from . import os_agent
from .agent import FAIL_OPEN, FAIL_SECURE
from .detect import SEVERITIES, builtin_rules, evaluate, load_rules
from .measured_log import MalformedLine
from .pipeline import DEFAULT_DEVICE_ID, attest, simulate_boot
from .server import BackgroundServer, ServerConfig, make_server, parse_log
from .sim import BUILTIN_SCENARIOS, load_scenario
from .tamper import MUTATIONS, OutOfRange, mutate
from .tpm import SoftTPM

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ATTESTATION = 2
EXIT_DETECTION = 3
EXIT_USAGE = 4

log = logging.getLogger("peacock")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _severity_at_least(severity: str, floor: Optional[str]) -> bool:
    return floor is not None and SEVERITIES.index(severity) >= SEVERITIES.index(floor)


def _fail_on_exceeded(alerts: list[dict], floor: Optional[str]) -> bool:
    return any(_severity_at_least(a["severity"], floor) for a in alerts)


def _rules(rules_dir: Optional[str]):
    return load_rules(rules_dir) if rules_dir else builtin_rules()


def _load_tpm(path: str) -> SoftTPM:
    return SoftTPM.from_state(json.loads(Path(path).read_text("utf-8")))


def _save_tpm(tpm: SoftTPM, path: Path) -> None:
    path.write_text(json.dumps(tpm.state_dict(), indent=2), "utf-8")


def _print(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


# -- subcommands ------------------------------------------------------------

def cmd_scenarios(args) -> int:
    for name in BUILTIN_SCENARIOS:
        sc = load_scenario(name)
        print(f"{name}\t{sc.description}")
    return EXIT_OK


def cmd_run(args) -> int:
    ref = args.scenario_pos or args.scenario
    if not ref:
        raise UsageError("run needs a scenario (positional or --scenario)")
    out = Path(args.out or tempfile.mkdtemp(prefix="peacock-run-"))
    out.mkdir(parents=True, exist_ok=True)
    boot = simulate_boot(ref, policy=args.policy, seed=args.seed, device_id=args.device_id)
    (out / "boot.log").write_text(boot.raw_log, "utf-8")

    def submit(url: str):
        return attest(boot.raw_log, boot.tpm, url, legacy=args.legacy_client_nonce)

    if args.server:
        bundle, receipt = submit(args.server)
        data_dir = sink_dir = None
    else:
        data_dir = Path(args.data_dir or out / "data")
        sink_dir = Path(args.sink_dir or out / "sink")
        config = ServerConfig(data_dir, sink_dir, port=0, legacy_client_nonce=args.legacy_client_nonce,
                              rules_dir=Path(args.rules) if args.rules else None)
        with BackgroundServer(config) as srv:
            bundle, receipt = submit(srv.url)
    _save_tpm(boot.tpm, out / "tpm.json")
    (out / "bundle.json").write_text(bundle.to_json(), "utf-8")

    body = receipt.body
    alerts = body.get("alert_summary", [])
    report = {
        "scenario": boot.scenario.name,
        "policy": args.policy,
        "halted": boot.halted,
        "session_id": boot.session_id,
        "device_id": args.device_id,
        "http_status": receipt.http_status,
        "verdict": receipt.verdict,
        "reason": body.get("reason"),
        "events": body.get("events", 0),
        "alerts": alerts,
        "artifacts": {
            "log": str(out / "boot.log"), "tpm": str(out / "tpm.json"), "bundle": str(out / "bundle.json"),
            "report": str(out / "report.json"),
            "data_dir": str(data_dir) if data_dir else None, "sink_dir": str(sink_dir) if sink_dir else None,
        },
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), "utf-8")
    _print(report)
    if receipt.verdict != "attested":
        return EXIT_ATTESTATION
    if _fail_on_exceeded(alerts, args.fail_on):
        return EXIT_DETECTION
    return EXIT_OK


def cmd_serve(args) -> int:
    config = ServerConfig(Path(args.data_dir), Path(args.sink_dir), host=args.host, port=args.port,
                          nonce_ttl=args.nonce_ttl, legacy_client_nonce=args.legacy_client_nonce,
                          rules_dir=Path(args.rules) if args.rules else None)
    try:
        httpd = make_server(config)
    except OSError as exc:
        print(f"peacock serve: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    def stop(signum, frame):
        threading.Thread(target=httpd.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, stop)
    signal.signal(signal.SIGINT, stop)
    print(f"listening on {httpd.url}", flush=True)
    try:
        httpd.serve_forever()
    finally:
        httpd.drain()
        httpd.server_close()
    return EXIT_OK


def cmd_enroll(args) -> int:
    tpm = _load_tpm(args.tpm)
    status, doc = os_agent.enroll(args.server, tpm.ak_public, replace=args.replace)
    _print({"http_status": status, **doc})
    if status == 409:
        return EXIT_USAGE
    return EXIT_OK if status == 201 else EXIT_ERROR


def cmd_challenge(args) -> int:
    nonce = os_agent.request_challenge(args.server, args.device_id)
    print(nonce.hex())
    return EXIT_OK


def cmd_attest(args) -> int:
    tpm = _load_tpm(args.tpm)
    raw_log = Path(args.log).read_text("utf-8", "surrogateescape")
    bundle, receipt = attest(raw_log, tpm, args.server, legacy=args.legacy_client_nonce,
                             enroll=not args.no_enroll)
    _save_tpm(tpm, Path(args.tpm))
    if args.bundle_out:
        Path(args.bundle_out).write_text(bundle.to_json(), "utf-8")
    _print({"http_status": receipt.http_status, "verdict": receipt.verdict, **receipt.body})
    if receipt.verdict != "attested":
        return EXIT_ATTESTATION
    if _fail_on_exceeded(receipt.body.get("alert_summary", []), args.fail_on):
        return EXIT_DETECTION
    return EXIT_OK


def cmd_parse(args) -> int:
    raw_log = Path(args.log).read_text("utf-8")
    try:
        events = parse_log(raw_log, args.device_id)
    except MalformedLine as exc:
        print(f"peacock parse: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for e in events:
        print(json.dumps(e.to_dict(), sort_keys=True))
    return EXIT_OK


def _read_events(path: str) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except ValueError as exc:
                raise UsageError(f"{path}:{n}: invalid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise UsageError(f"{path}:{n}: expected a JSON object")
            if doc.get("record_type", "event") == "event":
                events.append(doc)
    return events


def cmd_detect(args) -> int:
    events = _read_events(args.events)
    alerts = evaluate(_rules(args.rules), events, args.device_id)
    for a in alerts:
        print(json.dumps(a.to_dict(), sort_keys=True))
    return EXIT_DETECTION if _fail_on_exceeded([a.to_dict() for a in alerts], args.fail_on) else EXIT_OK


def cmd_tamper(args) -> int:
    path = Path(args.log)
    raw = path.read_text("utf-8", "surrogateescape")
    try:
        mutated = mutate(raw, args.mutation, args.line, args.byte)
    except OutOfRange as exc:
        print(f"peacock tamper: OutOfRange: {exc}", file=sys.stderr)
        return EXIT_USAGE
    Path(args.out or path).write_text(mutated, "utf-8", "surrogateescape")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="peacock", description="Measured UEFI boot monitoring pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scenarios", help="list builtin scenarios")
    s.set_defaults(func=cmd_scenarios)

    s = sub.add_parser("run", help="boot a scenario and attest it end to end")
    s.add_argument("scenario_pos", nargs="?", metavar="SCENARIO")
    s.add_argument("--scenario", help="builtin name or path to a scenario JSON file")
    s.add_argument("--policy", choices=(FAIL_SECURE, FAIL_OPEN), default=FAIL_OPEN)
    s.add_argument("--server", help="verifier URL; an in-process server is used when omitted")
    s.add_argument("--data-dir")
    s.add_argument("--sink-dir")
    s.add_argument("--rules")
    s.add_argument("--fail-on", choices=SEVERITIES, default="high")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--device-id", default=DEFAULT_DEVICE_ID)
    s.add_argument("--legacy-client-nonce", action="store_true")
    s.add_argument("--out", help="artifact directory (default: a fresh temp dir)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("serve", help="run the verifier server")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--sink-dir", required=True)
    s.add_argument("--rules")
    s.add_argument("--nonce-ttl", type=float, default=120.0)
    s.add_argument("--legacy-client-nonce", action="store_true")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("enroll", help="register a TPM's attestation key")
    s.add_argument("--tpm", required=True)
    s.add_argument("--server", required=True)
    s.add_argument("--replace", action="store_true")
    s.set_defaults(func=cmd_enroll)

    s = sub.add_parser("challenge", help="request a nonce")
    s.add_argument("--server", required=True)
    s.add_argument("--device-id", required=True)
    s.set_defaults(func=cmd_challenge)

    s = sub.add_parser("attest", help="quote and submit an exported log")
    s.add_argument("--log", required=True)
    s.add_argument("--tpm", required=True)
    s.add_argument("--server", required=True)
    s.add_argument("--bundle-out")
    s.add_argument("--no-enroll", action="store_true")
    s.add_argument("--fail-on", choices=SEVERITIES, default="high")
    s.add_argument("--legacy-client-nonce", action="store_true")
    s.set_defaults(func=cmd_attest)

    s = sub.add_parser("parse", help="print structured events for a log (no verification)")
    s.add_argument("--log", required=True)
    s.add_argument("--device-id", default="")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("detect", help="evaluate rules over an NDJSON events file")
    s.add_argument("--events", required=True)
    s.add_argument("--rules")
    s.add_argument("--device-id")
    s.add_argument("--fail-on", choices=SEVERITIES)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("tamper", help="apply one mutation to a log file")
    s.add_argument("--log", required=True)
    s.add_argument("--mutation", choices=MUTATIONS, required=True)
    s.add_argument("--line", type=int, required=True, help="1-based line number")
    s.add_argument("--byte", type=int, default=0, help="byte offset within the line (flip)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_tamper)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"peacock {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"peacock {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except os_agent.TransportError as exc:
        print(f"peacock {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
