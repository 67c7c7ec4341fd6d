"""Deterministic synchronous-round execution core.

A round works in two phases, both computed from the configuration at the
start of the round:

1. every node emits its outgoing messages (atomic exchange: no message may
   depend on another message of the same round), then
2. every node applies its transition to the messages it received.

Byzantine nodes are driven by a pluggable strategy instead of the protocol.
The strategy only ever sees messages from strictly earlier rounds, so a
non-rushing adversary falls out of the engine by construction.

Runs are single-threaded and fully reproducible: the same protocol, initial
configuration, seed and Byzantine spec yield a bit-identical trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .randomness import BitSource, RandMeter, RandWord, draw


class ProtocolError(ValueError):
    """A protocol contract was violated (malformed message, missing coin, ...)."""


class SimulationFault(RuntimeError):
    """A node transition failed mid-run.

    The partial trace up to the failing round is attached as ``trace``.
    """

    def __init__(self, message: str, trace: Optional["ExecutionTrace"] = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Topology:
    """Communication graph: a bidirectional ring or a complete graph.

    Node ids are dense integers in [0, n). On the ring, node i's left
    neighbor is (i-1) mod n and its right neighbor is (i+1) mod n.
    """

    kind: str
    n: int

    def __post_init__(self) -> None:
        if self.kind not in ("ring", "complete"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.kind == "ring" and self.n < 3:
            raise ValueError("ring topology needs n >= 3")
        if self.kind == "complete" and self.n < 1:
            raise ValueError("complete topology needs n >= 1")

    def neighbors(self, node: int) -> Tuple[int, ...]:
        n = self.n
        if self.kind == "ring":
            return ((node - 1) % n, (node + 1) % n)
        return tuple(j for j in range(n) if j != node)

    def left(self, node: int) -> int:
        return (node - 1) % self.n

    def right(self, node: int) -> int:
        return (node + 1) % self.n


def ring(n: int) -> Topology:
    return Topology("ring", n)


def complete(n: int) -> Topology:
    return Topology("complete", n)


def diameter(topology: Topology) -> int:
    """Hop diameter: floor(n/2) on a ring, 1 on a complete graph (0 for n=1)."""
    if topology.kind == "ring":
        return topology.n // 2
    return 1 if topology.n >= 2 else 0


@dataclass(frozen=True)
class Configuration:
    """System state at a round boundary: one opaque state per node."""

    round: int
    states: Tuple[Any, ...]

    def __post_init__(self) -> None:
        if self.round < 0:
            raise ValueError("round index must be non-negative")


class ByzantineStrategy:
    """Adversary hook. Subclasses fabricate one outgoing message per receiver.

    ``view`` exposes only messages from rounds strictly before the current
    one; returning ``None`` means the node stays silent toward that receiver.
    """

    name = "byzantine"

    def message(self, rnd: int, sender: int, receiver: int, view: "MessageView") -> Any:
        raise NotImplementedError

    def state(self, rnd: int, sender: int, view: "MessageView") -> Any:
        # Whatever a Byzantine node stores is invisible to correct nodes;
        # a tagged marker keeps traces readable.
        return ("byzantine", self.name, rnd)


@dataclass(frozen=True)
class ByzantineSpec:
    """Byzantine membership and behaviour.

    ``f`` is the tolerated bound; the actual members may number fewer.
    The n >= 3f+1 requirement is checked against the protocol's topology
    when a run starts.
    """

    members: frozenset
    f: int
    strategy: ByzantineStrategy

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(self.members))
        if self.f < 0:
            raise ValueError("f must be non-negative")
        if len(self.members) > self.f:
            raise ValueError(f"{len(self.members)} Byzantine members exceed bound f={self.f}")

    def validate(self, topology: Topology) -> None:
        if topology.kind != "complete":
            raise ValueError("Byzantine runs require a complete topology")
        if topology.n < 3 * self.f + 1:
            raise ValueError(f"n={topology.n} violates n >= 3f+1 for f={self.f}")
        for m in self.members:
            if not 0 <= m < topology.n:
                raise ValueError(f"Byzantine member {m} outside node range")


class MessageView:
    """Read-only window onto the messages of rounds strictly before ``rounds``."""

    __slots__ = ("_log",)

    def __init__(self, log: Tuple[Mapping[Tuple[int, int], Any], ...]):
        self._log = log

    @property
    def rounds(self) -> int:
        return len(self._log)

    def sent(self, rnd: int) -> Mapping[Tuple[int, int], Any]:
        """All (sender, receiver) -> message pairs of round ``rnd``."""
        return self._log[rnd]

    def last_message(self, sender: int, receiver: int) -> Any:
        """Most recent message from sender to receiver, or None."""
        for entry in reversed(self._log):
            msg = entry.get((sender, receiver))
            if msg is not None:
                return msg
        return None


_EMPTY_VIEW = MessageView(())


@dataclass(frozen=True)
class RoundContext:
    """Per-node inputs the engine supplies for one round.

    ``word`` carries the pre-drawn random word for protocols that declare a
    fixed ``word_width``; detector-gated protocols draw from ``source`` and
    account in ``meter`` themselves.
    """

    round: int
    topology: Topology
    word: Optional[RandWord] = None
    source: Optional[BitSource] = None
    meter: Optional[RandMeter] = None


class Protocol:
    """Per-node behaviour of one algorithm.

    ``messages`` and ``transition`` must be pure functions of their
    arguments; the engine may recompute them. ``word_width`` > 0 asks the
    engine to draw (and meter) that many bits per node per round and pass
    them as ``ctx.word``.
    """

    word_width: int = 0
    topology: Topology

    def messages(self, node: int, state: Any, ctx: RoundContext) -> Mapping[int, Any]:
        """Outgoing messages, keyed by receiver. Computed at the pulse."""
        raise NotImplementedError

    def transition(self, node: int, state: Any, inbox: Mapping[int, Any], ctx: RoundContext) -> Any:
        """Next state from the round-start state and the received messages."""
        raise NotImplementedError

    def summarize(self, config: Configuration) -> Dict[str, Any]:
        """Protocol-specific observables for trace events (verdicts, tokens, ...)."""
        return {}


@dataclass(frozen=True)
class RoundEvent:
    """Record of one executed round.

    ``meter`` is the cumulative per-node bit count after the round's draws;
    ``summary`` holds protocol observables extracted from the post-round
    configuration (detector verdicts computed during this round live there).
    """

    round: int
    bits_drawn: Tuple[int, ...]
    meter: Tuple[int, ...]
    messages_sent: int
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExecutionTrace:
    """Finite execution prefix: rounds+1 configurations and one event per round."""

    topology: Topology
    configurations: List[Configuration]
    events: List[RoundEvent]
    seed: Optional[int] = None
    fault: Optional[str] = None

    @property
    def final(self) -> Configuration:
        return self.configurations[-1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExecutionTrace):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.configurations == other.configurations
            and self.events == other.events
            and self.fault == other.fault
        )


def _derive_sources(seed: int, n: int) -> List[BitSource]:
    master = random.Random(seed)
    return [BitSource(master.getrandbits(64)) for _ in range(n)]


class Simulation:
    """Stepwise driver for one run; ``run`` is a convenience wrapper.

    Owns the per-node bit sources, the meter and the message log used to
    build adversary views. ``advance`` executes exactly one round.
    """

    def __init__(
        self,
        protocol: Protocol,
        initial: Configuration,
        seed: int = 0,
        byz: Optional[ByzantineSpec] = None,
        sources: Optional[List[BitSource]] = None,
    ):
        topo = protocol.topology
        if len(initial.states) != topo.n:
            raise ValueError("initial configuration does not match topology size")
        if byz is not None:
            byz.validate(topo)
        self.protocol = protocol
        self.topology = topo
        self.byz = byz
        self.seed = seed
        self.config = initial
        self.meter = RandMeter(topo.n)
        self.sources = sources if sources is not None else _derive_sources(seed, topo.n)
        if len(self.sources) != topo.n:
            raise ValueError("need one bit source per node")
        self._log: List[Mapping[Tuple[int, int], Any]] = []

    def advance(self) -> Tuple[Configuration, RoundEvent]:
        """Execute one round; returns the new configuration and its event."""
        before = self.meter.snapshot()
        view = MessageView(tuple(self._log)) if self.byz is not None else _EMPTY_VIEW
        config, sent_count, sent = _exchange_and_step(
            self.protocol, self.config, self.byz, view, self.sources, self.meter
        )
        if self.byz is not None:
            self._log.append(sent)
        after = self.meter.snapshot()
        event = RoundEvent(
            round=self.config.round,
            bits_drawn=tuple(a - b for a, b in zip(after, before)),
            meter=after,
            messages_sent=sent_count,
            summary=self.protocol.summarize(config),
        )
        self.config = config
        return config, event


def _exchange_and_step(
    protocol: Protocol,
    config: Configuration,
    byz: Optional[ByzantineSpec],
    view: MessageView,
    sources: Optional[List[BitSource]],
    meter: Optional[RandMeter],
    rand_inputs: Optional[Mapping[int, RandWord]] = None,
) -> Tuple[Configuration, int, Dict[Tuple[int, int], Any]]:
    topo = protocol.topology
    n = topo.n
    rnd = config.round
    states = config.states
    members = byz.members if byz is not None else frozenset()

    contexts: List[RoundContext] = []
    for node in range(n):
        word = None
        source = sources[node] if sources is not None else None
        if node not in members:
            if rand_inputs is not None:
                word = rand_inputs.get(node)
            elif protocol.word_width > 0 and source is not None and meter is not None:
                word = draw(source, protocol.word_width, meter, node)
        contexts.append(RoundContext(rnd, topo, word, source, meter))

    # Phase 1: all messages from round-start states, before any transition.
    inboxes: List[Dict[int, Any]] = [{} for _ in range(n)]
    sent: Dict[Tuple[int, int], Any] = {}
    count = 0
    for sender in range(n):
        if sender in members:
            for receiver in topo.neighbors(sender):
                msg = byz.strategy.message(rnd, sender, receiver, view)
                if msg is None:
                    continue
                inboxes[receiver][sender] = msg
                sent[(sender, receiver)] = msg
                count += 1
        else:
            out = protocol.messages(sender, states[sender], contexts[sender])
            for receiver, msg in out.items():
                inboxes[receiver][sender] = msg
                sent[(sender, receiver)] = msg
                count += 1

    # Phase 2: transitions, Byzantine states replaced wholesale.
    new_states: List[Any] = []
    for node in range(n):
        if node in members:
            new_states.append(byz.strategy.state(rnd, node, view))
        else:
            new_states.append(protocol.transition(node, states[node], inboxes[node], contexts[node]))
    return Configuration(rnd + 1, tuple(new_states)), count, sent


def step(
    protocol: Protocol,
    config: Configuration,
    rand_inputs: Optional[Mapping[int, RandWord]] = None,
    byz: Optional[ByzantineSpec] = None,
) -> Configuration:
    """One synchronous round with explicitly supplied random words.

    Messages are exchanged atomically from the round-start configuration,
    then every correct node transitions; Byzantine nodes' states are
    replaced by their strategy. The returned round index is ``config.round + 1``.
    """
    if byz is not None:
        byz.validate(protocol.topology)
    new_config, _, _ = _exchange_and_step(
        protocol, config, byz, _EMPTY_VIEW, None, None, rand_inputs or {}
    )
    return new_config


def run(
    protocol: Protocol,
    initial: Configuration,
    rounds: int,
    seed: int = 0,
    byz: Optional[ByzantineSpec] = None,
    sources: Optional[List[BitSource]] = None,
) -> ExecutionTrace:
    """Execute ``rounds`` rounds and record the full trace.

    A transition failure raises :class:`SimulationFault` with the partial
    trace attached.
    """
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    sim = Simulation(protocol, initial, seed=seed, byz=byz, sources=sources)
    trace = ExecutionTrace(protocol.topology, [initial], [], seed=seed)
    for _ in range(rounds):
        try:
            config, event = sim.advance()
        except ProtocolError as exc:
            trace.fault = f"round {sim.config.round}: {exc}"
            raise SimulationFault(trace.fault, trace) from exc
        trace.configurations.append(config)
        trace.events.append(event)
    return trace
