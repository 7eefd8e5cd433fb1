"""Co-evolving tweet/retweet/follow network simulator and analysis toolkit."""

__version__ = "0.1.0"

from .errors import TrfsimError
from .events import Event, Snapshot
from .graph import TemporalDigraph
from .inference import (
    FitRow,
    LogisticModel,
    TrfModelParams,
    fit_pq,
    logistic_fit,
    odds_ratios,
    trf_probability,
)
from .detect import (
    RetweetGroup,
    TrEvent,
    TrfDetection,
    detect_from_snapshots,
    detect_trf,
    estimate_p_endo,
    estimate_p_exo,
    estimate_p_trf,
    extract_tr_events,
    group_retweets,
    latency_histograms,
)
from .simulate import (
    GroundTruthTrf,
    SimConfig,
    SimResult,
    run_simulation,
    snapshot_observer,
    synth_graph,
)
from .structure import (
    SccResult,
    is_trf_equilibrium,
    random_walk_sample,
    reachable_followees,
    scc_fraction_curve,
    snowball_sample,
    tarjan_scc,
    trf_closure,
)

__all__ = [
    "Event",
    "FitRow",
    "GroundTruthTrf",
    "LogisticModel",
    "RetweetGroup",
    "SccResult",
    "SimConfig",
    "SimResult",
    "Snapshot",
    "TemporalDigraph",
    "TrEvent",
    "TrfDetection",
    "TrfModelParams",
    "TrfsimError",
    "detect_from_snapshots",
    "detect_trf",
    "estimate_p_endo",
    "estimate_p_exo",
    "estimate_p_trf",
    "extract_tr_events",
    "fit_pq",
    "group_retweets",
    "is_trf_equilibrium",
    "latency_histograms",
    "logistic_fit",
    "odds_ratios",
    "random_walk_sample",
    "reachable_followees",
    "run_simulation",
    "scc_fraction_curve",
    "snapshot_observer",
    "snowball_sample",
    "synth_graph",
    "tarjan_scc",
    "trf_closure",
    "trf_probability",
]
