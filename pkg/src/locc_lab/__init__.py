"""Two-party quantum protocol simulator with metered classical communication."""
from .locc import LoccSession, Party, new_session, run_exhaustive
from .qcore import DensityMatrix, PureState, Unitary
from .typspace import BlockPartition, Codebook, build_codebook, position_partition, typical_set, typical_weight

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "Codebook",
    "DensityMatrix",
    "LoccSession",
    "Party",
    "PureState",
    "Unitary",
    "build_codebook",
    "new_session",
    "position_partition",
    "run_exhaustive",
    "typical_set",
    "typical_weight",
]
