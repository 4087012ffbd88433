"""Scenario files and the ecosystem-evolution driver.

A scenario is a line-oriented ``key = value`` file describing initial
chains, a validator-arrival process, scheduled faults, and fusions::

    [scenario]
    seed = 0
    assignment = randomized

    [chain root]
    validators = 10
    alpha = 1/2
    n_max = 20

    [join]
    arrivals = 70
    beta = 1/5
    block = 10

    [faults]
    root-v003 = crash 40

Running a scenario grows chains through joins, divides any chain that
reaches its size trigger, applies the fault plan, and records per-chain
size/fault trajectories, lineage, and division outcomes into an immutable
MetricsReport. A (scenario, seed) pair fully determines the report.

The arrival process delivers validators in blocks: within each block of
``block`` consecutive arrivals to the same chain, exactly ``beta * block``
are flagged faulty, at seeded positions. This makes the faulty ratio after
a chain doubles exactly ``(beta_birth + beta_join) / 2``, which the report
exposes for direct checking.
"""

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .assignment import DETERMINISTIC, RANDOMIZED
from .crypto import derive_rng
from .errors import (
    ConfigError,
    NoQuorum,
    SplitchainError,
    StateDivergence,
    TriggerNotMet,
)
from .manager import Ecosystem
from .model import Asset, Role

_SCENARIO_KEYS = {"seed", "horizon", "d_min", "d_max", "lookback", "assignment"}
_CHAIN_KEYS = {"validators", "clients", "faulty", "alpha", "kind", "n_max",
               "assets"}
_JOIN_KEYS = {"arrivals", "interval", "beta", "block", "target"}
_FUSE_KEYS = {"at", "left", "right", "merged"}


@dataclass
class ChainSpec:
    name: str
    line: int
    validators: int = 4
    clients: int = 0
    faulty: int = 0
    alpha: Fraction = Fraction(1, 2)
    kind: str = "cft"
    n_max: int = 64
    assets: int = 0


@dataclass
class JoinSpec:
    line: int
    arrivals: int = 0
    interval: int = 1
    beta: Fraction = Fraction(0)
    block: int = 1
    target: str = "round-robin"


@dataclass
class FuseSpec:
    line: int
    at: int = 0
    left: str = ""
    right: str = ""
    merged: str = ""


@dataclass
class FaultLine:
    line: int
    user: str
    kind: str
    at_time: int = 0
    strategy: str = ""


@dataclass
class ScenarioSpec:
    seed: int = 0
    horizon: int = 0  # 0 = run to completion
    d_min: int = 1
    d_max: int = 1
    lookback: int = 1
    assignment: str = RANDOMIZED
    chains: list = field(default_factory=list)
    join: JoinSpec = None
    fuses: list = field(default_factory=list)
    faults: list = field(default_factory=list)


def _parse_int(value, lineno, key):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {value!r}",
                          lineno) from None


def _parse_fraction(value, lineno, key):
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key} expects a rational like 1/3, got {value!r}",
                          lineno) from None


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse scenario source, raising line-numbered ConfigError on mistakes."""
    spec = ScenarioSpec()
    section = None  # (kind, object)
    seen_chains = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            header = line[1:-1].strip()
            if header == "scenario":
                section = ("scenario", spec)
            elif header.startswith("chain"):
                name = header[len("chain"):].strip()
                if not name:
                    raise ConfigError("chain section needs a name: [chain NAME]",
                                      lineno)
                if name in seen_chains:
                    raise ConfigError(f"duplicate chain {name!r}", lineno)
                seen_chains.add(name)
                chain = ChainSpec(name, lineno)
                spec.chains.append(chain)
                section = ("chain", chain)
            elif header == "join":
                if spec.join is not None:
                    raise ConfigError("only one [join] section is allowed",
                                      lineno)
                spec.join = JoinSpec(lineno)
                section = ("join", spec.join)
            elif header == "fuse":
                fuse = FuseSpec(lineno)
                spec.fuses.append(fuse)
                section = ("fuse", fuse)
            elif header == "faults":
                section = ("faults", None)
            else:
                raise ConfigError(f"unknown section [{header}]", lineno)
            continue

        if "=" not in line:
            raise ConfigError("expected key = value", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if section is None:
            raise ConfigError(f"{key!r} appears before any section", lineno)

        kind, obj = section
        if kind == "scenario":
            if key not in _SCENARIO_KEYS:
                raise ConfigError(f"unknown [scenario] key {key!r}", lineno)
            if key == "assignment":
                if value not in (RANDOMIZED, DETERMINISTIC):
                    raise ConfigError(
                        f"assignment must be {RANDOMIZED} or {DETERMINISTIC}",
                        lineno)
                spec.assignment = value
            else:
                setattr(spec, key, _parse_int(value, lineno, key))
        elif kind == "chain":
            if key not in _CHAIN_KEYS:
                raise ConfigError(f"unknown [chain] key {key!r}", lineno)
            if key == "alpha":
                obj.alpha = _parse_fraction(value, lineno, key)
            elif key == "kind":
                if value not in ("cft", "bft"):
                    raise ConfigError("kind must be cft or bft", lineno)
                obj.kind = value
            else:
                setattr(obj, key, _parse_int(value, lineno, key))
        elif kind == "join":
            if key not in _JOIN_KEYS:
                raise ConfigError(f"unknown [join] key {key!r}", lineno)
            if key == "beta":
                obj.beta = _parse_fraction(value, lineno, key)
            elif key == "target":
                if value not in ("round-robin", "smallest"):
                    raise ConfigError(
                        "target must be round-robin or smallest", lineno)
                obj.target = value
            else:
                setattr(obj, key, _parse_int(value, lineno, key))
        elif kind == "fuse":
            if key not in _FUSE_KEYS:
                raise ConfigError(f"unknown [fuse] key {key!r}", lineno)
            if key == "at":
                obj.at = _parse_int(value, lineno, key)
            else:
                setattr(obj, key, value)
        else:  # faults
            parts = value.split()
            if not parts or parts[0] not in ("crash", "byzantine"):
                raise ConfigError(
                    f"fault must be 'crash [TICK]' or 'byzantine STRATEGY',"
                    f" got {value!r}", lineno)
            if parts[0] == "crash":
                at = _parse_int(parts[1], lineno, "crash time") if len(
                    parts) > 1 else 0
                spec.faults.append(FaultLine(lineno, key, "crash", at_time=at))
            else:
                if len(parts) != 2:
                    raise ConfigError("byzantine fault needs a strategy name",
                                      lineno)
                spec.faults.append(
                    FaultLine(lineno, key, "byzantine", strategy=parts[1]))

    _validate(spec)
    return spec


def _validate(spec: ScenarioSpec) -> None:
    if not spec.chains:
        raise ConfigError("scenario defines no chains", 1)
    if not 0 < spec.d_min <= spec.d_max:
        raise ConfigError("need 0 < d_min <= d_max", 1)
    for chain in spec.chains:
        if chain.validators < 1:
            raise ConfigError(f"chain {chain.name!r} needs validators >= 1",
                              chain.line)
        if not 0 <= chain.faulty <= chain.validators:
            raise ConfigError(
                f"chain {chain.name!r}: faulty must lie in [0, validators]",
                chain.line)
        if chain.assets > 0 and chain.clients == 0:
            raise ConfigError(
                f"chain {chain.name!r} has assets but no clients to own them",
                chain.line)
        if not 0 < chain.alpha <= Fraction(1, 2):
            raise ConfigError(
                f"chain {chain.name!r}: alpha must lie in (0, 1/2]",
                chain.line)
    join = spec.join
    if join is not None and join.arrivals > 0:
        if join.interval < 1:
            raise ConfigError("join interval must be >= 1", join.line)
        if join.block < 1:
            raise ConfigError("join block must be >= 1", join.line)
        faulty_per_block = join.beta * join.block
        if faulty_per_block.denominator != 1:
            raise ConfigError(
                f"beta * block must be an integer so each block carries an"
                f" exact faulty count (got {faulty_per_block})", join.line)
        if not 0 <= faulty_per_block <= join.block:
            raise ConfigError("join beta must lie in [0, 1]", join.line)
    names = {c.name for c in spec.chains}
    for fuse in spec.fuses:
        if not fuse.left or not fuse.right:
            raise ConfigError("[fuse] needs left and right chain names",
                              fuse.line)
        if fuse.left not in names or fuse.right not in names:
            raise ConfigError(
                f"[fuse] references unknown chain"
                f" {fuse.left!r} or {fuse.right!r}", fuse.line)


# --- report ----------------------------------------------------------------------

METRICS_HEADER = ("tick", "chain_id", "n", "f", "beta", "divisions", "messages")
LINEAGE_HEADER = ("chain_id", "parent_id", "side", "split_height")


@dataclass(frozen=True)
class DoublingRow:
    """Fault bookkeeping for one grow-to-trigger cycle of a chain."""

    chain_id: bytes
    n_birth: int
    f_birth: int
    n_division: int
    f_division: int
    joined: int
    joined_faulty: int

    @property
    def beta_birth(self) -> Fraction:
        return Fraction(self.f_birth, self.n_birth)

    @property
    def beta_division(self) -> Fraction:
        return Fraction(self.f_division, self.n_division)


@dataclass(frozen=True)
class MetricsReport:
    """Everything a scenario run produced, as immutable values."""

    metrics: tuple  # rows matching METRICS_HEADER
    lineage: tuple  # rows matching LINEAGE_HEADER
    events: tuple  # human-readable log lines
    divisions: tuple  # manager.DivisionRecord per completed division
    doublings: tuple  # DoublingRow per division of a grown chain
    bound_violations: tuple  # children born with f_i >= alpha * n_i
    safety_violations: tuple  # observed divergence among correct validators
    messages_total: int
    final_chains: tuple  # (chain_id, n, f) at end of run

    def metrics_csv(self) -> str:
        lines = [",".join(METRICS_HEADER)]
        for row in self.metrics:
            lines.append(",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"

    def lineage_csv(self) -> str:
        lines = [",".join(LINEAGE_HEADER)]
        for row in self.lineage:
            lines.append(",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"

    def events_log(self) -> str:
        return "\n".join(self.events) + ("\n" if self.events else "")


def _name(raw: bytes) -> str:
    try:
        return raw.decode("ascii")
    except UnicodeDecodeError:
        return raw.hex()


# --- driver ----------------------------------------------------------------------


class _Driver:
    def __init__(self, spec: ScenarioSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.eco = Ecosystem(seed=seed, d_min=spec.d_min, d_max=spec.d_max,
                             lookback=spec.lookback,
                             assignment_scheme=spec.assignment)
        self.metrics = []
        self.doublings = []
        self.safety_violations = []
        self.arrival_idx = 0
        # per-chain growth bookkeeping: birth size/faults, arrivals since
        self.meta = {}
        # round-robin order: a chain re-enters at the back after each turn,
        # and its children take over its membership when it divides
        self.rotation = deque()

    # -- setup --

    def create_chains(self) -> None:
        for cs in self.spec.chains:
            validators = [b"%s-v%03d" % (cs.name.encode(), i)
                          for i in range(cs.validators)]
            faulty_at = set()
            if cs.faulty:
                rng = derive_rng("init-faulty", self.seed, cs.name)
                faulty_at = set(rng.sample(range(cs.validators), cs.faulty))
            for i, v in enumerate(validators):
                self.eco.register_user(v, Role.VALIDATOR,
                                       faulty=i in faulty_at)
            clients = [b"%s-c%03d" % (cs.name.encode(), i)
                       for i in range(cs.clients)]
            for c in clients:
                self.eco.register_user(c, Role.CLIENT)
            assets = [Asset(b"%s-coin-%03d" % (cs.name.encode(), j),
                            clients[j % len(clients)], 1)
                      for j in range(cs.assets)]
            sim = self.eco.create_chain(
                cs.name.encode(), validators, clients, alpha=cs.alpha,
                kind=cs.kind, n_max=cs.n_max, initial_assets=assets)
            self._register_birth(sim.chain_id)

    def apply_faults(self) -> None:
        for fault in self.spec.faults:
            user = fault.user.encode()
            if user not in self.eco.registry.users:
                raise ConfigError(f"fault names unknown user {fault.user!r}",
                                  fault.line)
            if fault.kind == "crash":
                self.eco.crash_user(user, at_time=fault.at_time)
            else:
                try:
                    self.eco.mark_byzantine(user, fault.strategy)
                except ValueError as exc:
                    raise ConfigError(str(exc), fault.line) from None

    def _register_birth(self, chain_id: bytes) -> None:
        sim = self.eco.chains[chain_id]
        self.meta[chain_id] = {
            "n_birth": len(sim.validators),
            "f_birth": self.eco.chain_fault_count(sim),
            "joined": 0,
            "joined_faulty": 0,
            "faulty_positions": set(),
        }
        self.rotation.append(chain_id)

    # -- actions --

    def sample(self) -> None:
        tick = self.eco.network.now
        divisions = len(self.eco.divisions)
        messages = self.eco.network.messages_sent
        for chain_id in sorted(self.eco.chains):
            sim = self.eco.chains[chain_id]
            n = len(sim.validators)
            f = self.eco.chain_fault_count(sim)
            self.metrics.append((tick, _name(chain_id), n, f,
                                 str(Fraction(f, n)), divisions, messages))

    def _next_target(self):
        if self.spec.join.target == "smallest":
            return min(self.eco.chains.values(),
                       key=lambda s: (len(s.validators), s.chain_id))
        while self.rotation and self.rotation[0] not in self.eco.chains:
            self.rotation.popleft()  # divided or fused away
        return self.eco.chains[self.rotation.popleft()]

    def arrival(self) -> None:
        join = self.spec.join
        uid = b"join-%04d" % self.arrival_idx
        target = self._next_target()
        self.arrival_idx += 1
        meta = self.meta[target.chain_id]
        pos = meta["joined"] % join.block
        if pos == 0:
            per_block = int(join.beta * join.block)
            block_idx = meta["joined"] // join.block
            rng = derive_rng("join-faulty", self.seed, target.chain_id,
                             block_idx)
            meta["faulty_positions"] = set(
                rng.sample(range(join.block), per_block))
        faulty = pos in meta["faulty_positions"]
        self.eco.register_user(uid, Role.VALIDATOR, faulty=faulty)
        self.eco.join_chain(uid, target.chain_id)
        meta["joined"] += 1
        meta["joined_faulty"] += faulty
        self._maybe_divide(target.chain_id)
        if target.chain_id in self.eco.chains:  # still live: next turn later
            self.rotation.append(target.chain_id)

    def _maybe_divide(self, chain_id: bytes) -> None:
        sim = self.eco.chains.get(chain_id)
        if sim is None or len(sim.validators) < sim.config.n_max:
            return
        meta = self.meta[chain_id]
        initiator = next((v for v in sim.validators
                          if not self.eco.network.is_crashed(v)), None)
        if initiator is None:
            self.eco._log(f"chain {_name(chain_id)} at trigger but every"
                          f" validator is crashed; skipping division")
            return
        self.doublings.append(DoublingRow(
            chain_id, meta["n_birth"], meta["f_birth"],
            len(sim.validators), self.eco.chain_fault_count(sim),
            meta["joined"], meta["joined_faulty"]))
        try:
            children = self.eco.divide_chain(chain_id, initiator=initiator)
        except (TriggerNotMet, NoQuorum) as exc:
            self.eco._log(f"division of {_name(chain_id)} failed: {exc}")
            return
        del self.meta[chain_id]
        for child in children:
            self._register_birth(child.chain_id)

    def fuse(self, fuse: FuseSpec) -> None:
        left, right = fuse.left.encode(), fuse.right.encode()
        if left not in self.eco.chains or right not in self.eco.chains:
            self.eco._log(f"fusion {fuse.left}+{fuse.right} skipped:"
                          f" not both live")
            return
        merged_id = fuse.merged.encode() if fuse.merged else None
        merged = self.eco.fuse_chains(left, right, merged_id=merged_id)
        for cid in (left, right):
            self.meta.pop(cid, None)
        self._register_birth(merged.chain_id)
        self._maybe_divide(merged.chain_id)

    # -- main loop --

    def run(self) -> MetricsReport:
        self.create_chains()
        self.apply_faults()
        self.sample()

        actions = []
        join = self.spec.join
        if join is not None:
            for i in range(join.arrivals):
                actions.append(((i + 1) * join.interval, 0, i, "arrival", None))
        for k, fuse in enumerate(self.spec.fuses):
            actions.append((fuse.at, 1, k, "fuse", fuse))
        actions.sort(key=lambda a: a[:3])

        for time, _, _, kind, payload in actions:
            if self.spec.horizon and time > self.spec.horizon:
                break
            self.eco.network.sched.run_until(time)
            try:
                if kind == "arrival":
                    self.arrival()
                else:
                    self.fuse(payload)
            except StateDivergence as exc:
                self.safety_violations.append(str(exc))
                self.eco._log(f"SAFETY VIOLATION: {exc}")
                break
            self.sample()
        self.eco.network.run_until_idle()

        final = tuple(
            (cid, len(sim.validators), self.eco.chain_fault_count(sim))
            for cid, sim in sorted(self.eco.chains.items()))
        lineage = tuple(
            (_name(cid), _name(parent), side, height)
            for cid, parent, side, height in self.eco.registry.lineage_rows())
        return MetricsReport(
            metrics=tuple(self.metrics),
            lineage=lineage,
            events=tuple(self.eco.events),
            divisions=tuple(self.eco.divisions),
            doublings=tuple(self.doublings),
            bound_violations=tuple(self.eco.violations),
            safety_violations=tuple(self.safety_violations),
            messages_total=self.eco.network.messages_sent,
            final_chains=final,
        )


def run_scenario(spec, seed=None) -> MetricsReport:
    """Execute a parsed scenario (or scenario source text) deterministically.

    ``seed`` overrides the file's own seed; every run with the same
    (scenario, seed) pair yields an identical report.
    """
    if isinstance(spec, str):
        spec = parse_scenario(spec)
    if not isinstance(spec, ScenarioSpec):
        raise ConfigError("run_scenario expects scenario text or a parsed spec")
    return _Driver(spec, spec.seed if seed is None else seed).run()
