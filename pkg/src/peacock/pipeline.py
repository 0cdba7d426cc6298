"""End-to-end composition: simulated boot, collection, enrollment, challenge, submission."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from . import os_agent
from .agent import FAIL_OPEN, AgentConfig, PeacockAgent, session_id_for_seed
from .os_agent import AttestationBundle, Receipt
from .sim import HaltedBoot, Scenario, SimEnvironment, build_environment, load_scenario, run_scenario
from .tpm import SoftTPM, create_tpm

DEFAULT_DEVICE_ID = "peacock-device-0"


@dataclass
class BootResult:
    scenario: Scenario
    env: SimEnvironment
    agent: PeacockAgent
    tpm: SoftTPM
    raw_log: str
    session_id: str
    halted: bool


def simulate_boot(scenario, policy: str = FAIL_OPEN, seed: int = 0, device_id: str = DEFAULT_DEVICE_ID,
                  tpm: Optional[SoftTPM] = None, whitelist: Iterable[str] = ()) -> BootResult:
    """Boot ``scenario`` under a fresh agent and export its log to the simulated ESP."""
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    tpm = tpm or create_tpm(device_id, rng_seed=seed, created_at="2024-01-01T00:00:00+00:00")
    env = build_environment(scenario.firmware_meta, scenario.service_addresses, scenario.tick_stride)
    config = AgentConfig(whitelist=frozenset(whitelist), policy=policy)
    agent = PeacockAgent(tpm, config, session_id=session_id_for_seed(f"{seed}:{scenario.name}:{policy}"))
    halted = False
    try:
        run_scenario(env, scenario, agent)
    except HaltedBoot:
        halted = True
    agent.finalize_and_export(env)
    raw_log, session_id = os_agent.collect(env.esp_files)
    return BootResult(scenario, env, agent, tpm, raw_log, session_id, halted)


def obtain_nonce(server_url: str, device_id: str, legacy: bool = False) -> bytes:
    if legacy:
        from .server.challenge import legacy_nonce
        return legacy_nonce()
    return os_agent.request_challenge(server_url, device_id)


def attest(raw_log: str, tpm: SoftTPM, server_url: str, legacy: bool = False,
           enroll: bool = True) -> tuple[AttestationBundle, Receipt]:
    """Enroll (tolerating an existing enrollment), challenge, quote and submit."""
    if enroll:
        status, doc = os_agent.enroll(server_url, tpm.ak_public)
        if status not in (201, 409):
            raise os_agent.TransportError(f"enrollment failed ({status}): {doc}")
    nonce = obtain_nonce(server_url, tpm.device_id, legacy)
    bundle = os_agent.build_bundle(raw_log, tpm, nonce, tpm.device_id)
    return bundle, os_agent.submit(bundle, server_url)
