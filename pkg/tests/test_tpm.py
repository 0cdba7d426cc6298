import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peacock.measured_log import ZERO_DIGEST, chain_evaluate, entry_digest
from peacock.tpm import (
    AkPublic,
    BadNonceLength,
    InvalidPcrIndex,
    Quote,
    SoftTPM,
    create_tpm,
    verify_quote,
)

NONCE = bytes(range(32))


def test_fresh_tpm_and_determinism():
    tpm = create_tpm("dev", rng_seed=1)
    assert tpm.pcr_read(23) == ZERO_DIGEST
    assert tpm.counter == 0
    assert create_tpm("dev", rng_seed=1).ak_public.key == tpm.ak_public.key


def test_distinct_seeds_give_distinct_keys():
    keys = {create_tpm("dev", rng_seed=s).ak_public.key for s in range(100)}
    assert len(keys) == 100


def test_extend_matches_chain():
    tpm = create_tpm("dev", rng_seed=1)
    assert tpm.pcr_extend(23, entry_digest("a")) == chain_evaluate(["a"])
    with pytest.raises(InvalidPcrIndex):
        tpm.pcr_extend(24, entry_digest("a"))
    with pytest.raises(InvalidPcrIndex):
        tpm.pcr_read(-1)


def test_extend_is_order_sensitive():
    m1, m2 = entry_digest("x"), entry_digest("y")
    a, b = create_tpm("d", rng_seed=0), create_tpm("d", rng_seed=0)
    a.pcr_extend(0, m1), a.pcr_extend(0, m2)
    b.pcr_extend(0, m2), b.pcr_extend(0, m1)
    assert a.pcr_read(0) != b.pcr_read(0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text(max_size=30), max_size=20))
def test_extend_chain_equivalence(lines):
    tpm = create_tpm("d", rng_seed=3)
    for line in lines:
        tpm.pcr_extend(23, entry_digest(line.encode("utf-8", "surrogatepass")))
    assert tpm.pcr_read(23) == chain_evaluate([l.encode("utf-8", "surrogatepass") for l in lines])


@pytest.mark.parametrize("algorithm", ["ecdsa-p256-sha256", "ed25519-sha256"])
def test_quote_verify_and_counter(algorithm):
    tpm = create_tpm("dev", rng_seed=5, algorithm=algorithm)
    q1, q2 = tpm.quote(23, NONCE), tpm.quote(23, NONCE)
    assert (q1.counter, q2.counter) == (1, 2)
    assert verify_quote(tpm.ak_public, q1, NONCE)
    assert verify_quote(tpm.ak_public, q2, NONCE)
    check = verify_quote(tpm.ak_public, q1, bytes(32))
    assert (check.accepted, check.reason) == (False, "NonceMismatch")
    with pytest.raises(BadNonceLength):
        tpm.quote(23, bytes(16))


def test_every_payload_byte_flip_breaks_signature():
    tpm = create_tpm("dev", rng_seed=9)
    q = tpm.quote(23, NONCE)
    mutants = []
    for i in range(len(q.device_id)):
        mutants.append(Quote(q.device_id[:i] + chr(ord(q.device_id[i]) ^ 1) + q.device_id[i + 1:],
                             q.pcr_index, q.pcr_value, q.nonce, q.counter, q.signature))
    mutants.append(Quote(q.device_id, q.pcr_index ^ 1, q.pcr_value, q.nonce, q.counter, q.signature))
    for i in range(32):
        pv = bytearray(q.pcr_value)
        pv[i] ^= 0x80
        mutants.append(Quote(q.device_id, q.pcr_index, bytes(pv), q.nonce, q.counter, q.signature))
    for i in range(8):
        mutants.append(Quote(q.device_id, q.pcr_index, q.pcr_value, q.nonce, q.counter ^ (1 << (8 * i)), q.signature))
    for i in range(4):
        magic = bytearray(q.magic)
        magic[i] ^= 1
        mutants.append(Quote(q.device_id, q.pcr_index, q.pcr_value, q.nonce, q.counter, q.signature, bytes(magic)))
    for m in mutants:
        check = verify_quote(tpm.ak_public, m, NONCE)
        assert (check.accepted, check.reason) == (False, "BadSignature")
    # nonce bytes are covered too: a flipped nonce with a matching expectation still fails the signature
    for i in range(32):
        n = bytearray(NONCE)
        n[i] ^= 1
        m = Quote(q.device_id, q.pcr_index, q.pcr_value, bytes(n), q.counter, q.signature)
        assert verify_quote(tpm.ak_public, m, bytes(n)).reason == "BadSignature"


def test_cross_tpm_quotes_never_verify():
    tpms = [create_tpm("dev", rng_seed=s) for s in range(6)]
    for a, b in itertools.permutations(tpms, 2):
        assert not verify_quote(b.ak_public, a.quote(23, NONCE), NONCE)


def test_serialization_round_trips():
    tpm = create_tpm("dev", rng_seed=11)
    tpm.pcr_extend(23, entry_digest("x"))
    q = tpm.quote(23, NONCE)
    assert Quote.from_dict(q.to_dict()) == q
    assert AkPublic.from_dict(tpm.ak_public.to_dict()) == tpm.ak_public
    restored = SoftTPM.from_state(tpm.state_dict())
    assert restored.pcr_read(23) == tpm.pcr_read(23)
    assert restored.counter == 1
    assert verify_quote(tpm.ak_public, restored.quote(23, NONCE), NONCE)
    assert "seed" not in str(tpm.ak_public.to_dict())
