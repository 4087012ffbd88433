"""Hashing, signatures, and seeded randomness.

Signatures use HMAC-SHA256 under per-user keys held by the simulator's
key issuer. The interface (issue/sign/verify over public handles) matches
an asymmetric scheme, so a real one can be dropped in; the MAC construction
keeps million-signature test runs fast and fully deterministic.
"""

import hashlib
import hmac
import random

from .model import Digest, UserId, sha256

__all__ = [
    "sha256",
    "SignatureScheme",
    "KeyedVerifier",
    "mac_sign",
    "mac_verify",
    "beacon",
    "derive_seed",
    "derive_rng",
]

TAG_LEN = 32


def mac_sign(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, hashlib.sha256).digest()


def mac_verify(key: bytes, message: bytes, signature: bytes) -> bool:
    if len(signature) != TAG_LEN:
        return False
    return hmac.compare_digest(mac_sign(key, message), signature)


class SignatureScheme:
    """Deterministic signature scheme with a simulator-held key registry.

    ``issue(user)`` mints a key pair: the public handle is a hash commitment
    to the secret, and signatures are HMAC-SHA256 tags under the secret.
    Verification looks the secret up by handle, so only handles ever travel
    in messages.
    """

    TAG_LEN = 32

    def __init__(self, seed: int = 0):
        self._rng = random.Random(("splitchain-keys", seed).__repr__())
        self._secrets: dict[bytes, bytes] = {}  # public handle -> secret
        self._by_user: dict[UserId, bytes] = {}

    def issue(self, user: UserId) -> bytes:
        """Create (or return) the public key handle for ``user``."""
        if user in self._by_user:
            return self._by_user[user]
        secret = sha256(b"secret" + self._rng.getrandbits(256).to_bytes(32, "big")
                        + user)
        public = sha256(b"public" + secret)
        self._secrets[public] = secret
        self._by_user[user] = public
        return public

    def sign(self, public_key: bytes, message: bytes) -> bytes:
        secret = self._secrets.get(public_key)
        if secret is None:
            raise KeyError("no secret issued for this public key")
        return mac_sign(secret, message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        secret = self._secrets.get(public_key)
        if secret is None:
            return False
        return mac_verify(secret, message, signature)

    def verification_key(self, public_key: bytes) -> bytes:
        """Export the key needed to check tags offline.

        With a MAC construction the verification key is the signing key
        itself, so exports are meant for trusted verifiers (e.g. a registry
        snapshot consumed by ``verify-proof``).
        """
        secret = self._secrets.get(public_key)
        if secret is None:
            raise KeyError("no secret issued for this public key")
        return secret


class KeyedVerifier:
    """Signature checker over an explicit handle -> key table.

    Duck-types the ``verify`` half of :class:`SignatureScheme` so proof and
    certificate verification can run without the issuing simulator, e.g.
    from a serialized registry snapshot.
    """

    def __init__(self, keys: dict[bytes, bytes]):
        self._keys = dict(keys)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        key = self._keys.get(public_key)
        if key is None:
            return False
        return mac_verify(key, message, signature)


def beacon(ledger, lookback: int = 1) -> Digest:
    """Public randomness extracted from the tip of a committed ledger.

    Hashes the digests of the last ``lookback`` blocks; every honest member
    of the chain computes the same value, and it is fixed before any
    assignment that consumes it.
    """
    if not ledger:
        raise ValueError("beacon needs at least one committed block")
    if lookback < 1:
        raise ValueError("lookback must be positive")
    tail = ledger[-lookback:]
    return sha256(b"beacon" + b"".join(b.digest for b in tail))


def derive_seed(*parts) -> int:
    """Collapse labels/ints/bytes into a 64-bit stream seed, stably."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(b"b" + len(part).to_bytes(4, "big") + part)
        elif isinstance(part, int):
            h.update(b"i" + part.to_bytes(16, "big", signed=True))
        elif isinstance(part, str):
            data = part.encode()
            h.update(b"s" + len(data).to_bytes(4, "big") + data)
        else:
            raise TypeError(f"cannot derive a seed from {type(part).__name__}")
    return int.from_bytes(h.digest()[:8], "big")


def derive_rng(*parts) -> random.Random:
    """Independent ``random.Random`` stream named by ``parts``."""
    return random.Random(derive_seed(*parts))
