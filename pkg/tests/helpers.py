"""Shared test oracles and small builders.

The enumeration oracles here deliberately avoid the library's own formulas:
they count outcomes by brute force so the exact-arithmetic code has an
independent reference.
"""

import itertools
from fractions import Fraction

from splitchain.model import (
    Account,
    Asset,
    ChainConfig,
    ConsensusParams,
    Role,
)


def enumerate_violation_probability(n: int, f: int, alpha: Fraction) -> Fraction:
    """Probability a uniform balanced split breaches either child.

    Walks all C(n, n/2) subsets that could form child 1; validators
    0..f-1 are the faulty ones. A child of size n/2 with f_i faulty is
    breached when f_i >= alpha * n/2.
    """
    alpha = Fraction(alpha)
    half = n // 2
    bad = 0
    total = 0
    for side1 in itertools.combinations(range(n), half):
        f1 = sum(1 for v in side1 if v < f)
        f2 = f - f1
        if Fraction(f1) >= alpha * half or Fraction(f2) >= alpha * half:
            bad += 1
        total += 1
    return Fraction(bad, total)


def enumerate_pmf(N: int, M: int, n: int, k: int) -> Fraction:
    """P(X = k) for H(N, M, n) by walking every n-subset of N elements."""
    hits = 0
    total = 0
    for draw in itertools.combinations(range(N), n):
        total += 1
        if sum(1 for x in draw if x < M) == k:
            hits += 1
    return Fraction(hits, total)


def enumerate_upper_tail(N: int, M: int, n: int, threshold: Fraction) -> Fraction:
    hits = 0
    total = 0
    for draw in itertools.combinations(range(N), n):
        total += 1
        if sum(1 for x in draw if x < M) >= threshold:
            hits += 1
    return Fraction(hits, total)


def user(i: int) -> bytes:
    return b"u%03d" % i


def make_config(chain=b"root", n_validators=4, n_clients=0, alpha=Fraction(1, 2),
                kind="cft", n_max=8, assets=()) -> ChainConfig:
    validators = tuple(user(i) for i in range(n_validators))
    clients = tuple(user(100 + i) for i in range(n_clients))
    return ChainConfig(chain, validators, clients,
                       ConsensusParams(Fraction(alpha), kind), n_max,
                       tuple(assets))


def make_accounts(config: ChainConfig, scheme) -> dict:
    accounts = {}
    for v in config.validators:
        accounts[v] = Account(v, scheme.issue(v), Role.VALIDATOR)
    for c in config.clients:
        if c not in accounts:
            accounts[c] = Account(c, scheme.issue(c), Role.CLIENT)
    return accounts


def demo_asset(i: int, owner: bytes, value: int = 1) -> Asset:
    return Asset(b"asset-%03d" % i, owner, value)
