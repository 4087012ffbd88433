"""Cross-chain proofs: knowledge transfer and two-phase asset hand-off.

A fact about one chain's committed state travels as a quorum certificate
over ``(predicate, verdict, freshness tag)``. The verifying side issues the
tag first, anchored to its own recent block, so stale certificates cannot
be replayed past the tag's expiry height.

Asset transfer composes three such proofs: the source chain commits a Lock
and hands back an inclusion proof; the target chain checks it and commits
either a successful Claim (minting the asset) or a recorded failure; the
source finally Resolves the lock — deleting the asset if it was claimed,
unlocking it if the claim aborted. Every hand-off is keyed on the tag
nonce, which makes double claims detectable and idempotent.

Operations run synchronously against the ecosystem: a client gathers
signatures from validators directly rather than through simulated wire
messages, which keeps large randomized-schedule suites cheap while the
certificates themselves stay byte-faithful.
"""

from dataclasses import dataclass

from .consensus import QuorumCertificate, collect_certificate, verify_certificate
from .manager import _name
from .errors import (
    InvalidProof,
    NotOwner,
    SplitchainError,
    UnknownAsset,
    UnknownLock,
    UnknownUser,
)
from .model import (
    ChainId,
    ClaimPayload,
    Digest,
    LockPayload,
    ResolvePayload,
    Transaction,
    TxKind,
    UserId,
    _Reader,
    enc_bytes,
    enc_u64,
    sha256,
)

DEFAULT_EXPIRY_WINDOW = 100

__all__ = [
    "DEFAULT_EXPIRY_WINDOW",
    "FreshnessTag",
    "TxInclusion",
    "AssetOwnedBy",
    "BalanceAtLeast",
    "parse_predicate",
    "KnowledgeProof",
    "TransferProof",
    "proof_statement",
    "parse_transaction",
    "issue_tag",
    "tok_generate_proof",
    "tok_verify_proof",
    "toa_lock",
    "toa_claim",
    "toa_resolve",
]


# --- freshness tags -----------------------------------------------------------


@dataclass(frozen=True)
class FreshnessTag:
    """Verifier-issued anti-replay anchor.

    ``issuer_chain`` is the chain that will judge proofs carrying this tag;
    ``anchor_digest`` pins one of its recent blocks and ``expiry_height``
    bounds how long the tag stays acceptable on that chain.
    """

    issuer_chain: ChainId
    anchor_digest: Digest
    issued_height: int
    expiry_height: int
    nonce: bytes

    def __post_init__(self):
        if self.expiry_height <= self.issued_height:
            raise ValueError("tag must expire strictly after issuance")

    def to_bytes(self) -> bytes:
        return (enc_bytes(self.issuer_chain) + enc_bytes(self.anchor_digest)
                + enc_u64(self.issued_height) + enc_u64(self.expiry_height)
                + enc_bytes(self.nonce))

    @classmethod
    def read_from(cls, r: _Reader) -> "FreshnessTag":
        return cls(r.read_bytes(), r.read_bytes(), r.read_u64(),
                   r.read_u64(), r.read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "FreshnessTag":
        r = _Reader(data)
        tag = cls.read_from(r)
        if not r.done():
            raise ValueError("trailing bytes after tag")
        return tag


# --- predicates over committed state -------------------------------------------
#
# evaluate(ledger, state) returns True/False, or None when the chain cannot
# answer (e.g. the referenced height is not committed yet). Proof generation
# treats False and None alike: no certificate is produced.


@dataclass(frozen=True)
class TxInclusion:
    """The block at ``height`` contains a transaction with this digest."""

    KIND = 0

    tx_digest: Digest
    height: int

    def evaluate(self, ledger, state):
        if self.height > state.last_height or self.height >= len(ledger):
            return None
        block = ledger[self.height]
        return any(t.digest == self.tx_digest for t in block.transactions)

    def to_bytes(self) -> bytes:
        return bytes([self.KIND]) + enc_bytes(self.tx_digest) + enc_u64(self.height)


@dataclass(frozen=True)
class AssetOwnedBy:
    """The asset exists and is currently owned by ``owner``."""

    KIND = 1

    asset_id: bytes
    owner: UserId

    def evaluate(self, ledger, state):
        asset = state.assets.get(self.asset_id)
        if asset is None:
            return False
        return asset.owner == self.owner

    def to_bytes(self) -> bytes:
        return bytes([self.KIND]) + enc_bytes(self.asset_id) + enc_bytes(self.owner)


@dataclass(frozen=True)
class BalanceAtLeast:
    """The user's assets (locked or not) sum to at least ``amount``."""

    KIND = 2

    user: UserId
    amount: int

    def evaluate(self, ledger, state):
        if self.user not in state.accounts:
            return None  # cannot attest anything about an unknown account
        total = sum(a.value for a in state.assets.values()
                    if a.owner == self.user)
        return total >= self.amount

    def to_bytes(self) -> bytes:
        return bytes([self.KIND]) + enc_bytes(self.user) + enc_u64(self.amount)


@dataclass(frozen=True)
class ClaimDecided:
    """The chain's first committed claim verdict for ``nonce`` is ``verdict``.

    Resolve legs ride on this predicate rather than on inclusion of any
    particular claim attempt: replayed attempts also leave recorded-failure
    transactions in the ledger, but only the deciding verdict is attestable,
    so a failure recorded after a successful claim can never be dressed up
    as grounds to unlock the source asset.
    """

    KIND = 3

    nonce: bytes
    verdict: int

    def evaluate(self, ledger, state):
        decided = state.claims.get(self.nonce)
        if decided is None:
            return None  # nothing committed about this nonce yet
        return decided == self.verdict

    def to_bytes(self) -> bytes:
        return bytes([self.KIND]) + enc_bytes(self.nonce) + enc_u64(self.verdict)


def parse_predicate(r: _Reader):
    kind = r.take(1)[0]
    if kind == TxInclusion.KIND:
        return TxInclusion(r.read_bytes(), r.read_u64())
    if kind == AssetOwnedBy.KIND:
        return AssetOwnedBy(r.read_bytes(), r.read_bytes())
    if kind == BalanceAtLeast.KIND:
        return BalanceAtLeast(r.read_bytes(), r.read_u64())
    if kind == ClaimDecided.KIND:
        return ClaimDecided(r.read_bytes(), r.read_u64())
    raise ValueError(f"unknown predicate kind {kind}")


def proof_statement(predicate, verdict: int, tag: FreshnessTag) -> bytes:
    """The exact bytes a quorum signs: predicate, verdict, and tag bound
    together."""
    return (b"know" + enc_bytes(predicate.to_bytes()) + enc_u64(verdict)
            + enc_bytes(tag.to_bytes()))


# --- proofs ---------------------------------------------------------------------


@dataclass(frozen=True)
class KnowledgeProof:
    """Quorum-certified claim that ``predicate`` held on the signing chain."""

    predicate: object
    verdict_claimed: int
    tag: FreshnessTag
    certificate: QuorumCertificate

    def to_bytes(self) -> bytes:
        return (enc_bytes(self.predicate.to_bytes())
                + enc_u64(self.verdict_claimed)
                + enc_bytes(self.tag.to_bytes())
                + enc_bytes(self.certificate.to_bytes()))

    @classmethod
    def read_from(cls, r: _Reader) -> "KnowledgeProof":
        predicate = parse_predicate(_Reader(r.read_bytes()))
        verdict = r.read_u64()
        tag = FreshnessTag.from_bytes(r.read_bytes())
        cert = QuorumCertificate.from_bytes(r.read_bytes())
        return cls(predicate, verdict, tag, cert)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KnowledgeProof":
        r = _Reader(data)
        proof = cls.read_from(r)
        if not r.done():
            raise ValueError("trailing bytes after proof")
        return proof

    @property
    def size_bytes(self) -> int:
        return len(self.to_bytes())


@dataclass(frozen=True)
class TransferProof:
    """Inclusion proof of one leg of an asset transfer.

    ``inner`` certifies that the carried transaction bytes were committed on
    ``attesting_chain``; ``kind`` says which leg ("lock", "claim", "abort")
    those bytes represent, so the receiving side knows which state change to
    perform.
    """

    KINDS = ("lock", "claim", "abort")

    kind: str
    inner: KnowledgeProof
    tx_bytes: bytes
    attesting_chain: ChainId

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transfer proof kind {self.kind!r}")

    def to_bytes(self) -> bytes:
        return (bytes([self.KINDS.index(self.kind)])
                + enc_bytes(self.inner.to_bytes())
                + enc_bytes(self.tx_bytes)
                + enc_bytes(self.attesting_chain))

    @classmethod
    def from_bytes(cls, data: bytes) -> "TransferProof":
        r = _Reader(data)
        kind_idx = r.take(1)[0]
        if kind_idx >= len(cls.KINDS):
            raise ValueError(f"unknown transfer proof kind index {kind_idx}")
        inner = KnowledgeProof.from_bytes(r.read_bytes())
        tx_bytes = r.read_bytes()
        chain = r.read_bytes()
        if not r.done():
            raise ValueError("trailing bytes after transfer proof")
        return cls(cls.KINDS[kind_idx], inner, tx_bytes, chain)


def parse_transaction(data: bytes) -> Transaction:
    """Decode the transaction kinds that travel inside transfer proofs."""
    r = _Reader(data)
    kind = TxKind(r.take(1)[0])
    pr = _Reader(r.read_bytes())
    submitter = r.read_bytes()
    signature = r.read_bytes()
    if not r.done():
        raise ValueError("trailing bytes after transaction")
    if kind == TxKind.LOCK:
        payload = LockPayload(pr.read_bytes(), pr.read_u64(), pr.read_bytes(),
                              pr.read_bytes(), pr.read_bytes())
    elif kind == TxKind.CLAIM:
        payload = ClaimPayload(pr.read_bytes(), pr.read_bytes(), pr.read_u64(),
                               pr.read_bytes(), pr.read_bytes(), pr.read_u64(),
                               pr.read_bytes())
    else:
        raise ValueError(f"cannot parse transactions of kind {kind!r}")
    if not pr.done():
        raise ValueError("trailing bytes in payload")
    return Transaction(kind, payload, submitter, signature)


# --- tag issuance and knowledge transfer ------------------------------------------


def issue_tag(eco, verifier_chain: ChainId,
              expiry_window: int = DEFAULT_EXPIRY_WINDOW) -> FreshnessTag:
    """Mint a tag on the chain that will verify proofs carrying it."""
    sim = eco._live(verifier_chain)
    height = sim.state.last_height
    eco._tag_counter += 1
    nonce = sha256(b"tag" + enc_bytes(verifier_chain) + enc_u64(height)
                   + enc_u64(eco._tag_counter))[:16]
    tag = FreshnessTag(verifier_chain, sim.ledger[-1].digest, height,
                       height + expiry_window, nonce)
    eco.issued_tags[(verifier_chain, nonce)] = tag
    return tag


def tok_generate_proof(eco, prover: UserId, source: ChainId, predicate,
                       tag: FreshnessTag):
    """Ask the source chain's validators to certify ``predicate``.

    Returns a KnowledgeProof when the predicate holds on committed state and
    a quorum signs, None when it is false or unanswerable. NoQuorum
    propagates when too few validators respond with valid signatures.
    """
    sim = eco._live(source)
    if prover not in sim.config.members():
        raise UnknownUser(f"{prover!r} is not a member of {source!r}")
    if predicate.evaluate(sim.ledger, sim.state) is not True:
        return None
    statement = proof_statement(predicate, 1, tag)
    cert = collect_certificate(statement, sim.validators, sim.quorum,
                               eco._cert_sign_fn(statement),
                               eco.registry.pk_of, eco.scheme)
    return KnowledgeProof(predicate, 1, tag, cert)


def tok_verify_proof(proof: KnowledgeProof, tag: FreshnessTag, source_config,
                     current_height: int, pk_of, scheme) -> tuple:
    """(verdict, reason): 1 with None, or 0 with why it was rejected.

    Acceptance requires the presented tag to match the proof's, the tag to
    be unexpired at ``current_height``, the statement to bind (predicate, 1,
    tag) exactly, and a quorum of distinct source validators to have signed.
    """
    if proof.tag != tag:
        return 0, "tag mismatch"
    if current_height > tag.expiry_height:
        return 0, "stale tag"
    if proof.verdict_claimed != 1:
        return 0, "proof does not claim an affirmative verdict"
    statement = proof_statement(proof.predicate, 1, tag)
    ok, reason = verify_certificate(proof.certificate, statement,
                                    source_config.validators,
                                    source_config.quorum, pk_of, scheme)
    if not ok:
        return 0, reason
    return 1, None


# --- routing across divisions ------------------------------------------------------
#
# A lock can outlive its chain: either endpoint may divide before the
# transfer finishes. Descendants inherit the parent's pending locks/claims
# and honor tags their ancestors issued, so in-flight transfers land on
# whichever child holds the relevant account or lock.


def _ancestry(registry, chain_id: ChainId) -> tuple:
    seen = [chain_id]
    entry = registry.lineage.get(chain_id)
    while entry is not None:
        parent = entry[0]
        seen.append(parent)
        entry = registry.lineage.get(parent)
    return tuple(seen)


def _route(eco, chain_id: ChainId, want) -> "object | None":
    sim = eco.chains.get(chain_id)
    if sim is not None and want(sim):
        return sim
    for candidate in eco.chains.values():
        if chain_id in _ancestry(eco.registry, candidate.chain_id) and want(candidate):
            return candidate
    return None


def _tag_acceptable(eco, sim, tag: FreshnessTag) -> bool:
    """Was this tag issued by the judging chain or one of its ancestors?"""
    if tag.issuer_chain not in _ancestry(eco.registry, sim.chain_id):
        return False
    return eco.issued_tags.get((tag.issuer_chain, tag.nonce)) == tag


def _config_snapshot(eco, chain_id: ChainId):
    cfg = eco.registry.chains.get(chain_id)
    if cfg is None:
        cfg = eco.registry.archived.get(chain_id)
    return cfg


# --- asset transfer ------------------------------------------------------------------


def _signed(eco, user: UserId, kind: TxKind, payload) -> Transaction:
    tx = Transaction(kind, payload, user)
    sig = eco.scheme.sign(eco.registry.pk_of(user), tx.signing_bytes())
    return Transaction(kind, payload, user, sig)


def _find_asset_chain(eco, asset_id: bytes):
    for sim in eco.chains.values():
        if asset_id in sim.state.assets:
            return sim
    raise UnknownAsset(f"asset {asset_id!r} not found on any live chain")


def toa_lock(eco, owner: UserId, asset_id: bytes, target_addr: UserId,
             target_chain: ChainId) -> TransferProof:
    """Freeze an asset for transfer and return the lock's inclusion proof.

    The target chain issues the freshness tag first; its nonce becomes the
    lock nonce, keying the whole transfer end to end.
    """
    source = _find_asset_chain(eco, asset_id)
    asset = source.state.assets[asset_id]
    if asset.owner != owner:
        raise NotOwner(f"{owner!r} does not own {asset_id!r}")
    tag = issue_tag(eco, target_chain)
    payload = LockPayload(asset_id, asset.value, target_chain, target_addr,
                          tag.nonce)
    tx = _signed(eco, owner, TxKind.LOCK, payload)
    source.commit([tx])
    proof = tok_generate_proof(
        eco, owner, source.chain_id,
        TxInclusion(tx.digest, source.state.last_height), tag)
    if proof is None:  # the lock was just committed, so this cannot be False
        raise SplitchainError("lock inclusion proof unavailable")
    eco._log(f"lock {_name(asset_id)} on {_name(source.chain_id)} "
             f"-> {_name(target_chain)} nonce {tag.nonce.hex()[:8]}")
    return TransferProof("lock", proof, tx.to_bytes(), source.chain_id)


def toa_claim(eco, claimer: UserId, target: ChainId,
              lock_proof: TransferProof) -> TransferProof:
    """Present a lock proof on the target chain.

    A valid, fresh, addressed-to-us, first-time proof mints the asset and
    returns a Claim proof attesting the committed decision; anything else
    commits a recorded failure and returns an Abort proof — the transfer
    fails on-chain rather than in transit, so the source can always
    resolve. Only the first attempt decides the nonce: an abort returned
    for a later attempt cannot be used to unlock a successfully claimed
    asset.
    """
    sim = _route(eco, target, lambda s: claimer in s.config.members())
    if sim is None:
        raise UnknownUser(
            f"{claimer!r} is not a member of {target!r} or its descendants")
    if claimer not in sim.state.accounts:
        raise UnknownUser(f"claimer {claimer!r} not registered on target")

    inner = lock_proof.inner
    nonce = inner.tag.nonce
    reason = None
    payload = None
    if lock_proof.kind != "lock":
        reason = "not a lock proof"
    else:
        try:
            tx = parse_transaction(lock_proof.tx_bytes)
        except (ValueError, IndexError):
            tx = None
        if tx is None or tx.kind != TxKind.LOCK:
            reason = "carried transaction is not a lock"
        elif not isinstance(inner.predicate, TxInclusion):
            reason = "proof does not attest a transaction inclusion"
        elif inner.predicate.tx_digest != tx.digest:
            reason = "proof attests a different transaction"
        elif not _tag_acceptable(eco, sim, inner.tag):
            reason = "tag was not issued here"
        else:
            payload = tx.payload
            nonce = payload.nonce
            source_cfg = _config_snapshot(eco, lock_proof.attesting_chain)
            if source_cfg is None:
                reason = "unknown source chain"
            elif payload.nonce != inner.tag.nonce:
                reason = "lock nonce does not match tag nonce"
            elif payload.target_chain not in _ancestry(eco.registry,
                                                       sim.chain_id):
                reason = "lock targets a different chain"
            elif payload.target_address != claimer:
                reason = "lock targets a different address"
            else:
                verdict, why = tok_verify_proof(
                    inner, inner.tag, source_cfg, sim.state.last_height,
                    eco.registry.pk_of, eco.scheme)
                if verdict != 1:
                    reason = why
                elif nonce in sim.state.claims:
                    reason = "lock nonce already claimed"
                elif payload.asset_id in sim.state.assets:
                    reason = "asset id already exists on target"

    if reason is None:
        claim_payload = ClaimPayload(nonce, payload.asset_id, payload.value,
                                     claimer, lock_proof.attesting_chain, 1,
                                     lock_proof.to_bytes())
        kind = "claim"
    else:
        asset_id = payload.asset_id if payload is not None else b""
        value = payload.value if payload is not None else 0
        claim_payload = ClaimPayload(nonce, asset_id, value, claimer,
                                     lock_proof.attesting_chain, 0,
                                     lock_proof.to_bytes())
        kind = "abort"
    claim_tx = _signed(eco, claimer, TxKind.CLAIM, claim_payload)
    sim.commit([claim_tx])
    eco._log(f"claim nonce {nonce.hex()[:8]} on {_name(sim.chain_id)}: "
             + ("accepted" if reason is None else f"recorded failure ({reason})"))

    # the source chain judges the resolve leg, so it issues the next tag
    source_sim = _route(
        eco, lock_proof.attesting_chain,
        lambda s: nonce in s.state.locks) or eco.chains.get(
            lock_proof.attesting_chain)
    if source_sim is None:
        raise UnknownLock(
            f"no live chain holds the lock for nonce {nonce.hex()}")
    back_tag = issue_tag(eco, source_sim.chain_id)
    decision = sim.state.claims.get(nonce)
    if kind == "claim" or decision == 0:
        back_pred = ClaimDecided(nonce, 1 if kind == "claim" else 0)
    else:
        # a failure recorded after the nonce was already claimed: attest
        # only this attempt's inclusion, which resolve will not accept as
        # the lock's decision
        back_pred = TxInclusion(claim_tx.digest, sim.state.last_height)
    back = tok_generate_proof(eco, claimer, sim.chain_id, back_pred, back_tag)
    if back is None:
        raise SplitchainError("claim decision proof unavailable")
    return TransferProof(kind, back, claim_tx.to_bytes(), sim.chain_id)


def toa_resolve(eco, source: ChainId, proof: TransferProof) -> str:
    """Settle a lock with the target chain's claim or abort proof.

    "claimed" deletes the locked asset (it lives on the target now);
    "aborted" unlocks it. Proofs that fail any check are discarded with
    InvalidProof and the state does not change.
    """
    if proof.kind not in ("claim", "abort"):
        raise InvalidProof(f"cannot resolve with a {proof.kind!r} proof")
    try:
        tx = parse_transaction(proof.tx_bytes)
    except (ValueError, IndexError) as exc:
        raise InvalidProof(f"carried transaction unreadable: {exc}") from None
    if tx.kind != TxKind.CLAIM:
        raise InvalidProof("carried transaction is not a claim")
    payload = tx.payload
    expected_verdict = 1 if proof.kind == "claim" else 0
    if payload.verdict != expected_verdict:
        raise InvalidProof("proof kind contradicts the committed verdict")

    sim = _route(eco, source, lambda s: payload.lock_nonce in s.state.locks)
    if sim is None:
        raise UnknownLock(f"no lock with nonce {payload.lock_nonce.hex()}")

    inner = proof.inner
    if not isinstance(inner.predicate, ClaimDecided):
        raise InvalidProof("proof does not attest a claim decision")
    if inner.predicate.nonce != payload.lock_nonce:
        raise InvalidProof("proof decides a different lock")
    if inner.predicate.verdict != expected_verdict:
        raise InvalidProof("proof kind contradicts the attested decision")
    if not _tag_acceptable(eco, sim, inner.tag):
        raise InvalidProof("tag was not issued here")
    target_cfg = _config_snapshot(eco, proof.attesting_chain)
    if target_cfg is None:
        raise InvalidProof(f"unknown chain {proof.attesting_chain!r}")
    verdict, why = tok_verify_proof(inner, inner.tag, target_cfg,
                                    sim.state.last_height,
                                    eco.registry.pk_of, eco.scheme)
    if verdict != 1:
        raise InvalidProof(why)

    owner = sim.state.assets[sim.state.locks[payload.lock_nonce]].owner
    resolve_payload = ResolvePayload(payload.lock_nonce, expected_verdict,
                                     proof.to_bytes())
    sim.commit([_signed(eco, owner, TxKind.RESOLVE, resolve_payload)])
    outcome = "claimed" if expected_verdict == 1 else "aborted"
    eco._log(f"resolve nonce {payload.lock_nonce.hex()[:8]} on "
             f"{_name(sim.chain_id)}: {outcome}")
    return outcome
