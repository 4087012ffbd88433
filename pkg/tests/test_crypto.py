"""Signature scheme, beacon extraction, and seed derivation."""

from splitchain.crypto import SignatureScheme, beacon, derive_rng, derive_seed
from splitchain.model import ZERO_DIGEST, make_block

import pytest


def test_sign_verify_roundtrip():
    s = SignatureScheme(seed=1)
    pk = s.issue(b"alice")
    sig = s.sign(pk, b"hello")
    assert s.verify(pk, b"hello", sig)
    assert not s.verify(pk, b"hellp", sig)
    assert not s.verify(pk, b"hello", sig[:-1] + b"\x00")


def test_keys_are_per_user_and_stable():
    s = SignatureScheme(seed=1)
    a = s.issue(b"alice")
    b = s.issue(b"bob")
    assert a != b
    assert s.issue(b"alice") == a  # reissue returns the same handle


def test_wrong_key_does_not_verify():
    s = SignatureScheme(seed=1)
    a = s.issue(b"alice")
    b = s.issue(b"bob")
    sig = s.sign(a, b"msg")
    assert not s.verify(b, b"msg", sig)


def test_unissued_key_cannot_sign():
    s = SignatureScheme(seed=1)
    with pytest.raises(KeyError):
        s.sign(b"\x00" * 32, b"msg")
    assert not s.verify(b"\x00" * 32, b"msg", b"\x00" * 32)


def test_scheme_is_seed_deterministic():
    pk1 = SignatureScheme(seed=9).issue(b"alice")
    pk2 = SignatureScheme(seed=9).issue(b"alice")
    pk3 = SignatureScheme(seed=10).issue(b"alice")
    assert pk1 == pk2
    assert pk1 != pk3


def test_beacon_depends_on_tip():
    g = make_block(0, ZERO_DIGEST, [])
    b1 = make_block(1, g.digest, [])
    assert beacon([g]) != beacon([g, b1])
    assert beacon([g, b1]) == beacon([g, b1])


def test_beacon_lookback_widens_the_window():
    g = make_block(0, ZERO_DIGEST, [])
    b1 = make_block(1, g.digest, [])
    assert beacon([g, b1], lookback=1) != beacon([g, b1], lookback=2)
    with pytest.raises(ValueError):
        beacon([], lookback=1)
    with pytest.raises(ValueError):
        beacon([g], lookback=0)


def test_derive_seed_separates_labels():
    assert derive_seed("a", 1) != derive_seed("a", 2)
    assert derive_seed("a", 1) != derive_seed("b", 1)
    assert derive_seed("a", 1) == derive_seed("a", 1)
    assert derive_seed(b"raw") != derive_seed("raw")


def test_derive_rng_streams_are_independent():
    r1 = derive_rng("stream", 1)
    r2 = derive_rng("stream", 2)
    seq1 = [r1.randrange(1000) for _ in range(5)]
    seq2 = [r2.randrange(1000) for _ in range(5)]
    assert seq1 != seq2
    replayed = derive_rng("stream", 1)
    assert [replayed.randrange(1000) for _ in range(5)] == seq1
