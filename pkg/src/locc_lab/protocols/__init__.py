from .common import KnowledgeViolation, ProtocolReport, REPORT_FIELDS, SignalSpec
from .randomize import pauli_randomize
from .remote import (
    folded_ensemble_entropy,
    qutrit_signal,
    remote_prep_blocks,
    remote_prep_phase,
    remote_prep_qutrit,
    remote_prep_segmented,
    remote_prep_two_block,
    segment_of,
)
from .teleport import dilute_baseline, dilute_step1_only, teleport_d_dim, teleport_two_stage

__all__ = [
    "KnowledgeViolation",
    "ProtocolReport",
    "REPORT_FIELDS",
    "SignalSpec",
    "dilute_baseline",
    "dilute_step1_only",
    "folded_ensemble_entropy",
    "pauli_randomize",
    "qutrit_signal",
    "remote_prep_blocks",
    "remote_prep_phase",
    "remote_prep_qutrit",
    "remote_prep_segmented",
    "remote_prep_two_block",
    "segment_of",
    "teleport_d_dim",
    "teleport_two_stage",
]
