"""mlonsim: distributed gradient descent co-simulated with a slotted-ALOHA
uplink, with cost-aware stopping rules."""

from .aloha import AlohaNetwork, QueuedPacket, SlotEvent, SlotOutcome
from .config import MnistSpec, SimConfig, SynthSpec
from .errors import ConfigurationError, DatasetNotFoundError, IdxFormatError
from .model import (
    GradientVector,
    WorkerShard,
    default_step_size,
    global_gradient,
    global_loss,
    local_gradient,
    local_loss,
    partition_dataset,
)
from .solver import (
    IterationRecord,
    LatencyBreakdown,
    RunResult,
    StoppingResult,
    check_prop_bounds,
    gd_step,
    run_batch,
    run_minibatch,
    run_simulation,
)
from .stopping import (
    StoppingComparison,
    causal_should_stop,
    causal_stop_index,
    combined_objective,
    compare_stops,
    is_discretely_convex,
    noncausal_stop_index,
    threshold_stop_index,
)

__version__ = "0.1.0"
