from .context import (
    Mode, ContextError, ProposerContext, build_context, fit_to_budget, serialize_graph_mode,
    serialize_mixed, serialize_text, token_estimate,
)
from .proposers import (
    FAULT_KINDS, REPAIRABLE_FAULTS, CorruptingProposer, FaultPlan, ManifestProposer, Proposal,
    ProposerFailure, RandomProposer, ReplayProposer, corrupt, parse_proposal,
)
from .http import API_KEY_ENV, HttpProposer, context_parts
from .optimize import OptimizeResult, optimize_params, optimize_params_ex
from .repair import RepairAction, Repaired, Unrepairable, repair
from .tree import (
    Status, StepEvent, SynthConfig, SynthError, SynthesisTree, SynthResult, SynthStats,
    backtrack_count, single_shot, synthesize,
)

__all__ = [
    "Mode", "ContextError", "ProposerContext", "build_context", "fit_to_budget",
    "serialize_graph_mode", "serialize_mixed", "serialize_text", "token_estimate",
    "FAULT_KINDS", "REPAIRABLE_FAULTS", "CorruptingProposer", "FaultPlan", "ManifestProposer",
    "Proposal", "ProposerFailure", "RandomProposer", "ReplayProposer", "corrupt",
    "parse_proposal", "RepairAction", "Repaired", "Unrepairable", "repair", "Status",
    "StepEvent", "SynthConfig", "SynthError", "SynthesisTree", "SynthResult", "SynthStats",
    "backtrack_count", "single_shot", "synthesize", "API_KEY_ENV", "HttpProposer",
    "context_parts", "OptimizeResult", "optimize_params", "optimize_params_ex",
]
