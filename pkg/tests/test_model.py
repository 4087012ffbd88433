"""Ledger structure and the pure transaction state machine."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splitchain.crypto import SignatureScheme
from splitchain.errors import (
    AlreadyMember,
    AssetIdCollision,
    AssetLocked,
    BrokenChain,
    InvalidSignature,
    NotOwner,
    UnknownAsset,
    UnknownLock,
    UnknownUser,
)
from splitchain.model import (
    Account,
    Asset,
    AssetCreatePayload,
    AssetTransferPayload,
    Block,
    ClaimPayload,
    LockPayload,
    RegisterPayload,
    ResolvePayload,
    Role,
    Transaction,
    TxKind,
    ZERO_DIGEST,
    apply_transaction,
    build_genesis,
    make_block,
    quorum_size,
    replay,
    verify_ledger,
)

from helpers import make_accounts, make_config


@pytest.fixture
def scheme():
    return SignatureScheme(seed=5)


@pytest.fixture
def chain(scheme):
    """A 4-validator chain with one client and one asset, fully replayed."""
    config = make_config(n_validators=4, n_clients=1,
                         assets=[Asset(b"coin-1", b"u100", 10)])
    accounts = make_accounts(config, scheme)
    genesis = build_genesis(config, accounts)
    return [genesis], replay([genesis])


def signed(scheme, state, kind, payload, submitter):
    tx = Transaction(kind, payload, submitter)
    sig = scheme.sign(state.accounts[submitter].public_key, tx.signing_bytes())
    return Transaction(kind, payload, submitter, sig)


def extend(ledger, state, txs, scheme=None):
    block = make_block(len(ledger), ledger[-1].digest, txs)
    new_ledger = ledger + [block]
    return new_ledger, replay(new_ledger, scheme=scheme)


# --- quorum arithmetic -------------------------------------------------------


def test_quorum_is_ceiling_of_honest_fraction():
    assert quorum_size(4, Fraction(1, 3)) == 3
    assert quorum_size(5, Fraction(1, 3)) == 4
    assert quorum_size(6, Fraction(1, 3)) == 4
    assert quorum_size(10, Fraction(1, 2)) == 5
    assert quorum_size(7, Fraction(1, 2)) == 4


@given(st.integers(1, 400), st.fractions(min_value=Fraction(1, 100),
                                         max_value=Fraction(1, 2)))
@settings(max_examples=200, derandomize=True)
def test_quorum_matches_float_ceiling(n, alpha):
    q = quorum_size(n, alpha)
    # smallest integer >= (1-alpha)*n, checked by rational comparison
    assert q - 1 < (1 - alpha) * n <= q


# --- blocks and ledgers --------------------------------------------------------


def test_genesis_replay_installs_config_accounts_assets(chain):
    ledger, state = chain
    assert state.config is not None
    assert len(state.config.validators) == 4
    assert state.accounts[b"u100"].role == Role.CLIENT
    assert state.assets[b"coin-1"].owner == b"u100"
    assert state.last_height == 0
    assert state.total_value() == 10


def test_verify_ledger_rejects_height_gap(chain):
    ledger, _ = chain
    bogus = make_block(5, ledger[-1].digest, [])
    with pytest.raises(BrokenChain):
        verify_ledger(ledger + [bogus])


def test_verify_ledger_rejects_parent_mismatch(chain):
    ledger, _ = chain
    bogus = make_block(1, ZERO_DIGEST, [])
    with pytest.raises(BrokenChain) as exc:
        verify_ledger(ledger + [bogus])
    assert exc.value.height == 1


def test_verify_ledger_rejects_tampered_digest(chain):
    ledger, _ = chain
    block = make_block(1, ledger[-1].digest, [])
    tampered = Block(block.height, block.parent_digest, block.transactions,
                     b"\xff" * 32)
    with pytest.raises(BrokenChain):
        verify_ledger(ledger + [tampered])


def test_block_digest_changes_with_contents(chain, scheme):
    ledger, state = chain
    t1 = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"coin-1", b"u000"), b"u100")
    a = make_block(1, ledger[-1].digest, [t1])
    b = make_block(1, ledger[-1].digest, [])
    assert a.digest != b.digest


# --- transfers -------------------------------------------------------------------


def test_transfer_moves_ownership(chain, scheme):
    ledger, state = chain
    tx = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"coin-1", b"u000"), b"u100")
    _, after = extend(ledger, state, [tx], scheme)
    assert after.assets[b"coin-1"].owner == b"u000"
    # original state untouched
    assert state.assets[b"coin-1"].owner == b"u100"


def test_transfer_requires_known_asset(chain, scheme):
    ledger, state = chain
    tx = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"ghost", b"u000"), b"u100")
    with pytest.raises(UnknownAsset):
        apply_transaction(state, tx, scheme)


def test_transfer_requires_ownership(chain, scheme):
    ledger, state = chain
    tx = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"coin-1", b"u001"), b"u000")
    with pytest.raises(NotOwner):
        apply_transaction(state, tx, scheme)


def test_transfer_requires_registered_recipient(chain, scheme):
    ledger, state = chain
    tx = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"coin-1", b"stranger"), b"u100")
    with pytest.raises(UnknownUser):
        apply_transaction(state, tx, scheme)


def test_bad_signature_rejected(chain, scheme):
    ledger, state = chain
    tx = Transaction(TxKind.ASSET_TRANSFER,
                     AssetTransferPayload(b"coin-1", b"u000"), b"u100",
                     b"\x00" * 32)
    with pytest.raises(InvalidSignature):
        apply_transaction(state, tx, scheme)
    # without a scheme the caller vouches for signatures
    after = apply_transaction(state, tx)
    assert after.assets[b"coin-1"].owner == b"u000"


def test_register_then_create_asset(chain, scheme):
    ledger, state = chain
    newcomer = Account(b"u200", scheme.issue(b"u200"), Role.CLIENT)
    reg = Transaction(TxKind.REGISTER, RegisterPayload(newcomer), b"u200")
    ledger, state = extend(ledger, state, [reg])
    assert b"u200" in state.accounts
    assert b"u200" in state.config.clients
    mint = signed(scheme, state, TxKind.ASSET_CREATE,
                  AssetCreatePayload(Asset(b"coin-2", b"u200", 5)), b"u200")
    _, state = extend(ledger, state, [mint], scheme)
    assert state.total_value() == 15


def test_double_register_rejected(chain, scheme):
    _, state = chain
    dup = Transaction(TxKind.REGISTER,
                      RegisterPayload(state.accounts[b"u100"]), b"u100")
    with pytest.raises(AlreadyMember):
        apply_transaction(state, dup)


def test_asset_id_collision_rejected(chain, scheme):
    _, state = chain
    tx = signed(scheme, state, TxKind.ASSET_CREATE,
                AssetCreatePayload(Asset(b"coin-1", b"u100", 1)), b"u100")
    with pytest.raises(AssetIdCollision):
        apply_transaction(state, tx, scheme)


# --- lock / claim / resolve -------------------------------------------------------


def lock_tx(scheme, state, nonce=b"n-1"):
    return signed(scheme, state, TxKind.LOCK,
                  LockPayload(b"coin-1", 10, b"other-chain", b"u000", nonce),
                  b"u100")


def test_lock_freezes_asset(chain, scheme):
    ledger, state = chain
    ledger, state = extend(ledger, state, [lock_tx(scheme, state)], scheme)
    asset = state.assets[b"coin-1"]
    assert asset.locked and asset.lock_target == (b"other-chain", b"u000")
    assert state.locks[b"n-1"] == b"coin-1"
    moved = signed(scheme, state, TxKind.ASSET_TRANSFER,
                   AssetTransferPayload(b"coin-1", b"u000"), b"u100")
    with pytest.raises(AssetLocked):
        apply_transaction(state, moved, scheme)


def test_double_lock_rejected(chain, scheme):
    ledger, state = chain
    ledger, state = extend(ledger, state, [lock_tx(scheme, state)], scheme)
    with pytest.raises(AssetLocked):
        apply_transaction(state, lock_tx(scheme, state, nonce=b"n-2"), scheme)


def test_resolve_claimed_burns_asset(chain, scheme):
    ledger, state = chain
    ledger, state = extend(ledger, state, [lock_tx(scheme, state)], scheme)
    resolve = signed(scheme, state, TxKind.RESOLVE,
                     ResolvePayload(b"n-1", outcome=1), b"u100")
    _, state = extend(ledger, state, [resolve], scheme)
    assert b"coin-1" not in state.assets
    assert b"n-1" not in state.locks


def test_resolve_aborted_unlocks_asset(chain, scheme):
    ledger, state = chain
    ledger, state = extend(ledger, state, [lock_tx(scheme, state)], scheme)
    resolve = signed(scheme, state, TxKind.RESOLVE,
                     ResolvePayload(b"n-1", outcome=0), b"u100")
    _, state = extend(ledger, state, [resolve], scheme)
    asset = state.assets[b"coin-1"]
    assert not asset.locked and asset.lock_target is None


def test_resolve_unknown_lock_rejected(chain, scheme):
    _, state = chain
    resolve = signed(scheme, state, TxKind.RESOLVE,
                     ResolvePayload(b"nope", outcome=0), b"u100")
    with pytest.raises(UnknownLock):
        apply_transaction(state, resolve, scheme)


def test_claim_creates_asset_once(chain, scheme):
    ledger, state = chain
    claim = ClaimPayload(b"n-9", b"coin-9", 3, b"u000", b"src-chain", verdict=1)
    tx = signed(scheme, state, TxKind.CLAIM, claim, b"u000")
    ledger, state = extend(ledger, state, [tx], scheme)
    assert state.assets[b"coin-9"].owner == b"u000"
    assert state.claims[b"n-9"] == 1
    # a second verdict-1 claim on the same lock nonce must not mint again
    dup = signed(scheme, state, TxKind.CLAIM,
                 ClaimPayload(b"n-9", b"coin-9x", 3, b"u000", b"src-chain", 1),
                 b"u000")
    with pytest.raises(Exception):
        apply_transaction(state, dup, scheme)


def test_failed_claim_is_recorded_without_minting(chain, scheme):
    ledger, state = chain
    claim = ClaimPayload(b"n-8", b"coin-8", 3, b"u000", b"src-chain", verdict=0)
    tx = signed(scheme, state, TxKind.CLAIM, claim, b"u000")
    _, state = extend(ledger, state, [tx], scheme)
    assert b"coin-8" not in state.assets
    assert state.claims[b"n-8"] == 0


# --- state digests -----------------------------------------------------------------


def test_state_digest_is_order_insensitive_but_content_sensitive(chain, scheme):
    ledger, state = chain
    d0 = state.digest()
    assert d0 == replay(ledger).digest()  # replays agree
    tx = signed(scheme, state, TxKind.ASSET_TRANSFER,
                AssetTransferPayload(b"coin-1", b"u000"), b"u100")
    _, after = extend(ledger, state, [tx], scheme)
    assert after.digest() != d0


def test_asset_lock_flag_consistency():
    with pytest.raises(ValueError):
        Asset(b"x", b"u", 1, locked=True, lock_target=None)
    with pytest.raises(ValueError):
        Asset(b"x", b"u", 1, locked=False, lock_target=(b"c", b"a"))
    with pytest.raises(ValueError):
        Asset(b"x", b"u", -2)
