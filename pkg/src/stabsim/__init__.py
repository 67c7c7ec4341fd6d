"""stabsim: deterministic simulator for randomization-adaptive protocols.

A synchronous-round message-passing simulator with two instrumented case
studies: token circulation on an odd ring whose coin flips stop once a
history-based detector sees convergence, and a Byzantine clock testbed
whose random inputs come from XOR-combined surrogate words gated by a
tally detector.
"""

from .engine import (
    ByzantineSpec,
    ByzantineStrategy,
    Configuration,
    ExecutionTrace,
    MessageView,
    Protocol,
    ProtocolError,
    RoundContext,
    RoundEvent,
    Simulation,
    SimulationFault,
    Topology,
    complete,
    diameter,
    ring,
    run,
    step,
)
from .randomness import (
    BOTTOM,
    BitSource,
    InputPolicy,
    POLICIES,
    Pipeline,
    RandMeter,
    RandWord,
    draw,
    gated_word,
    surrogate_round,
    xor_combine,
)
from .history import (
    HistoryArray,
    PartialConfiguration,
    RandStore,
    TokenAggregate,
    agg_merge,
    empty_history,
    hist_detect,
    merge,
    shift_insert,
    weak_rand,
)
from .herman import (
    AdaptiveHermanProtocol,
    HermanProtocol,
    RingBits,
    herman_step,
    is_safe_tc,
    leader,
    legal_transition,
    tokens,
)
from .clocksync import (
    AdaptiveClockProtocol,
    TallyReport,
    clock_detect,
    make_strategy,
    minority_tally_bound,
    tally,
    toy_clock_step,
)

__version__ = "0.1.0"
