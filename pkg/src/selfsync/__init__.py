"""Self-synchronizing coupled integrators over directed sensor networks.

Simulation, closed-form rate prediction, and two-step debiased estimation
for networks of integrators that couple through delayed, one-directional
links.  See the module docstrings for conventions; the hearing orientation
(``Edge(dst, src, ...)`` means ``dst`` hears ``src``) is used throughout.
"""
from .consensus import (
    ClusterPrediction,
    ConsensusPrediction,
    DebiasError,
    DebiasMode,
    DebiasResult,
    DecisionRule,
    DecisionStatistic,
    DegenerateDebiasError,
    apply_decision,
    centralized_ml,
    debias_two_step,
    ml_setup,
    predict,
)
from .digraph import (
    ConnectivityClass,
    ConnectivityReport,
    Digraph,
    Edge,
    GraphFormatError,
    NullSpaceError,
    classify,
    laplacian,
    left_null_vector,
    load_graph,
    save_graph,
    scc_decompose,
)
from .dynamics import (
    ConsensusVerdict,
    DelayQuantization,
    DerivativeGroup,
    InitialCondition,
    NodeParams,
    SimConfig,
    SimulationDiverged,
    StepSizeWarning,
    Trajectory,
    VerdictKind,
    detect_consensus,
    quantize_delays,
    simulate,
)
from .experiments import (
    PRESETS,
    EstimationConfig,
    McSummary,
    TopologyStudyResult,
    preset_network,
    run_estimation_study,
    run_topology_study,
)
from .netgen import (
    Fading,
    GeneratedNetwork,
    GenerationBudgetError,
    RadioConfig,
    build_channel,
    ensure_connectivity,
    place_nodes,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterPrediction",
    "ConnectivityClass",
    "ConnectivityReport",
    "ConsensusPrediction",
    "ConsensusVerdict",
    "DebiasError",
    "DebiasMode",
    "DebiasResult",
    "DecisionRule",
    "DecisionStatistic",
    "DegenerateDebiasError",
    "DelayQuantization",
    "DerivativeGroup",
    "Digraph",
    "Edge",
    "EstimationConfig",
    "Fading",
    "GeneratedNetwork",
    "GenerationBudgetError",
    "GraphFormatError",
    "InitialCondition",
    "McSummary",
    "NodeParams",
    "NullSpaceError",
    "PRESETS",
    "RadioConfig",
    "SimConfig",
    "SimulationDiverged",
    "StepSizeWarning",
    "TopologyStudyResult",
    "Trajectory",
    "VerdictKind",
    "apply_decision",
    "build_channel",
    "centralized_ml",
    "classify",
    "debias_two_step",
    "detect_consensus",
    "ensure_connectivity",
    "laplacian",
    "left_null_vector",
    "load_graph",
    "ml_setup",
    "place_nodes",
    "predict",
    "preset_network",
    "quantize_delays",
    "run_estimation_study",
    "run_topology_study",
    "save_graph",
    "scc_decompose",
    "simulate",
]
