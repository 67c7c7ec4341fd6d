"""Brute-force and sweep verification of the core guarantees.

Each suite is an exhaustive or seeded oracle for one family of properties:

- parity: token count stays odd and never increases along seeded runs
- closure: safe 5-rings stay safe under every coin sequence, transitions legal
- history: the collector is correct at depth d from round d on, and a
  constructed corruption still poisons the deepest slot at round d-1
- xor: the surrogate combination is a bijection in the honest word for every
  adversary contribution and bottom pattern (exhaustive at width 8)
- tally: minority-side tallies stay below threshold for all sizes and splits
  under the echoing adversary; agreement turns every correct verdict true
- aggregate: the constant-size token digest reproduces the full detector's
  verdict at every node of every round across seeded runs

The sweep helpers at the bottom drive the composed protocols with early
stopping and are shared by the acceptance tests and the CLI.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .clocksync import (
    AdaptiveClockProtocol,
    ClockNodeState,
    STRATEGY_NAMES,
    clock_detect,
    make_strategy,
    minority_tally_bound,
    tally_report,
)
from .engine import ByzantineSpec, Configuration, RoundEvent, Simulation
from .herman import (
    AdaptiveHermanProtocol,
    RingBits,
    _token_mask,
    herman_step,
    is_safe_tc,
    legal_transition,
    step_word,
)
from .history import HistoryArray
from .randomness import BOTTOM, RandWord, xor_combine


@dataclass
class SuiteResult:
    name: str
    ok: bool
    checked: int
    seconds: float
    counterexample: Optional[str] = None

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        msg = f"{status} {self.name}: {self.checked} checks in {self.seconds:.2f}s"
        if self.counterexample:
            msg += f"\n  counterexample: {self.counterexample}"
        return msg


def suite_parity(runs: int = 10_000, sizes: Sequence[int] = (3, 5, 7, 9, 11),
                 rounds: int = 100, seed0: int = 0) -> SuiteResult:
    """Token count is odd and non-increasing along every seeded run."""
    t0 = time.perf_counter()
    checked = 0
    per_size = runs // len(sizes)
    for n in sizes:
        mask = (1 << n) - 1
        for idx in range(per_size):
            rng = random.Random(seed0 * 1_000_003 + n * 10_007 + idx)
            word = rng.getrandbits(n)
            count = (_token_mask(word, n)).bit_count()
            for r in range(rounds):
                word = step_word(word, n, rng.getrandbits(n) & mask)
                new_count = (_token_mask(word, n)).bit_count()
                checked += 1
                if new_count % 2 == 0 or new_count > count:
                    return SuiteResult(
                        "parity", False, checked, time.perf_counter() - t0,
                        f"n={n} seed_idx={idx} round={r}: {count} -> {new_count} tokens",
                    )
                count = new_count
    return SuiteResult("parity", True, checked, time.perf_counter() - t0)


def suite_closure(n: int = 5, seq_len: int = 6) -> SuiteResult:
    """Every safe n-ring stays safe under every coin sequence, legally."""
    t0 = time.perf_counter()
    checked = 0
    safe_words = [w for w in range(1 << n) if (_token_mask(w, n)).bit_count() == 1]
    for word in safe_words:
        for coins in itertools.product((0, 1), repeat=seq_len):
            state = RingBits(n, word)
            for coin in coins:
                holder = next(iter_tokens(state))
                after = herman_step(state, {holder: coin})
                checked += 1
                if not is_safe_tc(after) or not legal_transition(state, after):
                    return SuiteResult(
                        "closure", False, checked, time.perf_counter() - t0,
                        f"word={word:0{n}b} coins={coins}: unsafe or illegal move",
                    )
                state = after
    return SuiteResult("closure", True, checked, time.perf_counter() - t0)


def iter_tokens(state: RingBits):
    t = _token_mask(state.word, state.n)
    while t:
        yield (t & -t).bit_length() - 1
        t &= t - 1


def corrupted_histories(n: int, depth: int, fake_bits: Sequence[int]) -> List[HistoryArray]:
    """Fully corrupted initial histories: every slot a full map of fake bits."""
    fake = {p: fake_bits[p] for p in range(n)}
    return [HistoryArray(tuple(dict(fake) for _ in range(depth + 1))) for _ in range(n)]


def suite_history(sizes: Sequence[int] = (3, 5, 7, 9), seed0: int = 17) -> SuiteResult:
    """The deepest slot is the true d-rounds-back configuration from round d on.

    Also pins down that d is tight: with fabricated full histories, the
    deepest slot still holds the fabrication at the end of round d-1.
    """
    t0 = time.perf_counter()
    checked = 0
    for n in sizes:
        d = n // 2
        rng = random.Random(seed0 + n)
        bits = [rng.getrandbits(1) for _ in range(n)]
        fake_bits = [1 - b for b in bits]
        fake_map = {p: fake_bits[p] for p in range(n)}
        protocol = AdaptiveHermanProtocol(n)
        initial = protocol.initial_configuration(bits, corrupted_histories(n, d, fake_bits))
        sim = Simulation(protocol, initial, seed=seed0 + n)
        configs = [initial]
        total = 3 * d + 6
        for _ in range(total):
            config, _ = sim.advance()
            configs.append(config)
        # End of round d-1 (config index d): fabricated data still occupies slot d.
        for node in range(n):
            deepest = configs[d].states[node].history.slots[-1]
            checked += 1
            if deepest != fake_map:
                return SuiteResult(
                    "history", False, checked, time.perf_counter() - t0,
                    f"n={n} node={node}: corruption gone from slot {d} at round {d - 1}",
                )
        # From round d on: slot d == true configuration d rounds back, at all nodes.
        for r in range(d, total):
            truth = {p: configs[r - d].states[p].bit for p in range(n)}
            for node in range(n):
                deepest = configs[r + 1].states[node].history.slots[-1]
                checked += 1
                if deepest != truth:
                    return SuiteResult(
                        "history", False, checked, time.perf_counter() - t0,
                        f"n={n} node={node} round={r}: slot {d} != configuration {r - d}",
                    )
    return SuiteResult("history", True, checked, time.perf_counter() - t0)


def suite_xor(width: int = 8, slots: int = 4) -> SuiteResult:
    """u -> xor(u, contributions) permutes {0,1}^width for every contribution.

    Contributions cover every adversary vector in every non-bottom slot of
    every bottom pattern over ``slots`` co-senders.
    """
    t0 = time.perf_counter()
    checked = 0
    space = 1 << width
    u_words = [RandWord(width, u) for u in range(space)]
    full = frozenset(range(space))
    for a in range(space):
        a_word = RandWord(width, a)
        for pattern in range(1 << slots):
            fixed = tuple(
                BOTTOM if (pattern >> s) & 1 else a_word for s in range(slots)
            )
            image = {xor_combine((u, *fixed), width).value for u in u_words}
            checked += 1
            if image != full:
                return SuiteResult(
                    "xor", False, checked, time.perf_counter() - t0,
                    f"a={a:0{width}b} pattern={pattern:0{slots}b}: image size {len(image)}",
                )
    return SuiteResult("xor", True, checked, time.perf_counter() - t0)


def suite_tally(min_n: int = 4, max_n: int = 10) -> SuiteResult:
    """Split tallies fall below threshold; agreement satisfies every detector.

    The split half enumerates every size, Byzantine head count and two-group
    partition of the correct nodes under the per-receiver echo adversary.
    The agreement half runs every shipped strategy against synchronized
    clocks and demands a true verdict at every correct node, every round.
    """
    t0 = time.perf_counter()
    checked = 0
    for n in range(min_n, max_n + 1):
        f = (n - 1) // 3
        for f_present in range(f + 1):
            correct = n - f_present
            if not minority_tally_bound(n, f, f_present):
                return SuiteResult(
                    "tally", False, checked, time.perf_counter() - t0,
                    f"n={n} f={f} f'={f_present}: tally bound arithmetic fails",
                )
            for p_size in range(1, correct // 2 + 1):
                # Receiver on the smaller (or equal) side, echoes inflating it.
                received: Dict[int, Optional[int]] = {}
                peer = 1
                for _ in range(p_size - 1):
                    received[peer] = 0
                    peer += 1
                for _ in range(correct - p_size):
                    received[peer] = 1
                    peer += 1
                for _ in range(f_present):
                    received[peer] = 0  # echo of the receiver's own value
                    peer += 1
                report = tally_report(0, 0, received, n, f)
                checked += 1
                if report.tally != p_size + f_present:
                    return SuiteResult(
                        "tally", False, checked, time.perf_counter() - t0,
                        f"n={n} f'={f_present} |P|={p_size}: tally {report.tally}",
                    )
                bound = (n - f_present) // 2 + f_present
                if report.tally > bound or bound > n - f - 1 or report.verdict:
                    return SuiteResult(
                        "tally", False, checked, time.perf_counter() - t0,
                        f"n={n} f'={f_present} |P|={p_size}: verdict true below threshold",
                    )
    # Agreement: every correct node's verdict is true under every strategy.
    for n in (4, 7, 10):
        f = (n - 1) // 3
        members = frozenset(range(n - f, n))
        protocol = AdaptiveClockProtocol(n, f)
        for name in STRATEGY_NAMES:
            byz = ByzantineSpec(members, f, make_strategy(name, seed=5, k=2))
            sim = Simulation(protocol, protocol.initial_configuration([1] * n), seed=11, byz=byz)
            for r in range(3):
                config, event = sim.advance()
                for node in range(n):
                    if node in members:
                        continue
                    checked += 1
                    if event.summary["verdicts"][node] is not True:
                        return SuiteResult(
                            "tally", False, checked, time.perf_counter() - t0,
                            f"n={n} strategy={name} round={r}: verdict false at {node} in agreement",
                        )
    return SuiteResult("tally", True, checked, time.perf_counter() - t0)


def suite_aggregate(runs: int = 1000, sizes: Sequence[int] = (3, 5, 7, 9),
                    seed0: int = 100, cap: int = 400) -> SuiteResult:
    """The arc digest's verdict equals the full detector's, everywhere, always."""
    t0 = time.perf_counter()
    checked = 0
    per_size = runs // len(sizes)
    for n in sizes:
        protocol = AdaptiveHermanProtocol(n, with_aggregate=True)
        for idx in range(per_size):
            seed = seed0 * 1_000_003 + n * 101 + idx
            rng = random.Random(seed)
            bits = [rng.getrandbits(1) for _ in range(n)]
            events = drive_adaptive_herman(protocol, bits, seed, cap=cap,
                                           post_window=2 * (n // 2) + 4)[1]
            for event in events:
                checked += 1
                if event.summary["verdicts"] != event.summary["agg_verdicts"]:
                    return SuiteResult(
                        "aggregate", False, checked, time.perf_counter() - t0,
                        f"n={n} seed={seed} round={event.round}: "
                        f"{event.summary['verdicts']} != {event.summary['agg_verdicts']}",
                    )
    return SuiteResult("aggregate", True, checked, time.perf_counter() - t0)


SUITES = {
    "parity": suite_parity,
    "closure": suite_closure,
    "history": suite_history,
    "xor": suite_xor,
    "tally": suite_tally,
    "aggregate": suite_aggregate,
}


# ---------------------------------------------------------------------------
# Sweep drivers shared by the acceptance tests and the CLI
# ---------------------------------------------------------------------------

def drive_adaptive_herman(
    protocol: AdaptiveHermanProtocol,
    bits: Sequence[int],
    seed: int,
    cap: int = 500,
    post_window: int = 12,
    histories=None,
) -> Tuple[List[Configuration], List[RoundEvent], Optional[int]]:
    """Run until ``post_window`` rounds past first all-true detection, or ``cap``.

    Returns (configurations, events, detection_round); detection_round is
    None if the detector never turned all-true within the cap.
    """
    initial = protocol.initial_configuration(bits, histories)
    sim = Simulation(protocol, initial, seed=seed)
    configs = [initial]
    events: List[RoundEvent] = []
    detection: Optional[int] = None
    r = 0
    while r < cap:
        config, event = sim.advance()
        configs.append(config)
        events.append(event)
        if detection is None and all(v is True for v in event.summary["verdicts"]):
            detection = r
        r += 1
        if detection is not None and r >= detection + post_window:
            break
    return configs, events, detection


def drive_clock(
    protocol: AdaptiveClockProtocol,
    clocks: Sequence[int],
    seed: int,
    rounds: int,
    byz: Optional[ByzantineSpec] = None,
    stop_on_agreement: bool = False,
) -> Tuple[List[Configuration], List[RoundEvent], Optional[int]]:
    """Run the clock testbed; optionally stop at first correct-node agreement.

    Returns (configurations, events, agreement_round) where agreement_round
    is the first configuration index whose correct clocks are all equal.
    """
    members = byz.members if byz is not None else frozenset()
    initial = protocol.initial_configuration(clocks)
    sim = Simulation(protocol, initial, seed=seed, byz=byz)
    configs = [initial]
    events: List[RoundEvent] = []
    agreement: Optional[int] = None

    def correct_clocks(config: Configuration) -> set:
        return {
            s.clock
            for node, s in enumerate(config.states)
            if node not in members and isinstance(s, ClockNodeState)
        }

    if len(correct_clocks(initial)) == 1:
        agreement = 0
    for r in range(rounds):
        config, event = sim.advance()
        configs.append(config)
        events.append(event)
        if agreement is None and len(correct_clocks(config)) == 1:
            agreement = r + 1
        if stop_on_agreement and agreement is not None:
            break
    return configs, events, agreement
