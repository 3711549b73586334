"""uclab: universal communication over unknown causal channels with feedback.

Channel models, reference-system (iterated/arbitrary block) evaluation,
capacity machinery, the epoch/super-symbol adaptive scheme, and an
experiment harness.
"""

from .core import (
    Alphabet,
    Dist,
    RandomSource,
    Transcript,
    l1_distance,
    tuple_codec,
    validate_dist,
)
from .capacity import (
    CapacityResult,
    Dmc,
    averaged_channel,
    binary_entropy,
    blahut_arimoto,
    entropy_bits,
    hb_mono,
    mix_channels,
    mixing_bounds,
    mutual_information,
    pessimistic_capacity,
)
from .channels import (
    CausalChannel,
    DmcChannel,
    ExplicitNoise,
    FsmChannel,
    ModuloAdditiveChannel,
    PasswordChannel,
    PeriodicNoise,
    SeededNoise,
    block_conditional,
    channel_from_config,
    fading_memory_gap,
    load_channel,
    prop3_bound,
    super_symbol_view,
)
from .reference import (
    AlignmentSummary,
    BlockCode,
    CollapsedChannel,
    afb_error,
    alignment,
    block_code_error,
    collapsed_channel,
    delta1,
    delta2_bound,
    fano_lower_bound,
    ifb_error,
    ifb_error_exact,
    random_block_code,
)
from .universal import (
    AdaptiveResult,
    EpochSchedule,
    FeedbackLink,
    UniversalResult,
    build_schedule,
    delta_c,
    inner_scheme_run,
    summation_check,
    universal_run,
    weighted_rate,
)

__version__ = "0.1.0"
