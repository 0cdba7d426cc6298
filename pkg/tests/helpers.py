from pathlib import Path

from peacock import os_agent
from peacock.pipeline import simulate_boot
from peacock.server import ServerConfig, ServerState


class FakeClock:
    def __init__(self, now=1_700_000_000.0):
        self.now = now

    def __call__(self):
        return self.now


def make_state(root: Path, clock=None, legacy=False, rules_dir=None) -> ServerState:
    config = ServerConfig(root / "data", root / "sink", legacy_client_nonce=legacy, rules_dir=rules_dir)
    return ServerState.from_config(config, clock=clock)


def enroll(state, tpm):
    if tpm.device_id not in state.registry:
        state.registry.register(tpm.device_id, tpm.ak_public)


def bundle_for(state, raw_log, tpm, nonce=None):
    """Enroll if needed, take a fresh challenge and quote it."""
    enroll(state, tpm)
    if nonce is None:
        nonce = state.cache.issue(tpm.device_id).nonce
    return os_agent.build_bundle(raw_log, tpm, nonce, tpm.device_id)


def boot(name, **kw):
    return simulate_boot(name, **kw)


def sink_records(sink_dir: Path):
    import json
    out = []
    for path in sorted(Path(sink_dir).glob("*.ndjson")):
        for line in path.read_text("utf-8").splitlines():
            out.append((path.name, json.loads(line)))
    return out
