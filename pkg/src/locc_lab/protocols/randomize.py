"""Averaging a qubit over a set of Pauli operators."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import qcore
from ..qcore import DensityMatrix, PureState

_PAULIS = {
    "I": qcore.identity(2),
    "X": qcore.pauli_x(),
    "Y": qcore.pauli_y(),
    "Z": qcore.pauli_z(),
}


def pauli_randomize(state: PureState, paulis: Sequence[str] = ("I", "X", "Y", "Z")) -> DensityMatrix:
    """Uniform mixture of P|psi><psi|P over the chosen Paulis.

    With all four the output is I/2 for any input; two of them (a one-bit
    key) are not enough.
    """
    if state.dims != (2,):
        raise qcore.DimensionError("pauli_randomize acts on a single qubit")
    if not paulis:
        raise ValueError("need at least one Pauli")
    rho = np.zeros((2, 2), dtype=complex)
    for name in paulis:
        v = _PAULIS[name.upper()].matrix @ state.amps
        rho += np.outer(v, v.conj())
    return DensityMatrix(rho / len(paulis))
