"""Teleportation split into an entangling step and a disentangling step.

Step 1 (generalized XOR, measure, one message, bi-local relabel) turns an
unknown ``sum_x psi_x |x>`` into the shared ``sum_x psi_x |x>_A |x>_B``.
Step 2 (Fourier on Alice's half, measure, one message, Bob's phase fix)
moves it entirely to Bob. Each step sends log2(D) bits.
"""
from __future__ import annotations

import numpy as np

from .. import qcore
from ..locc import LoccSession, Party
from ..qcore import PureState
from .common import RunResult, build_report, check_normalized, execute

ALICE, BOB = Party.ALICE, Party.BOB


def _negate_shift(dim: int, m: int):
    """z -> (m - z) mod dim; undoes the label shift left by step 1."""
    return qcore.permutation([(m - z) % dim for z in range(dim)])


def teleport_step1(session: LoccSession, q, a_half, b_half) -> int:
    dim = q.dim
    session.local_unitary(ALICE, [a_half, q], qcore.generalized_xor(dim))
    m = session.local_measure(ALICE, [q])
    msg = session.send(ALICE, BOB, m, dim)
    fix = _negate_shift(dim, msg.value)
    if not np.allclose(fix.matrix, np.eye(dim)):
        session.local_unitary(ALICE, [a_half], fix)
        session.local_unitary(BOB, [b_half], fix)
    session.discard([q])
    return m


def teleport_step2(session: LoccSession, a_half, b_half) -> int:
    dim = a_half.dim
    session.local_unitary(ALICE, [a_half], qcore.fourier(dim))
    k = session.local_measure(ALICE, [a_half])
    msg = session.send(ALICE, BOB, k, dim)
    if msg.value:
        session.local_unitary(BOB, [b_half], qcore.phase_correction(dim, msg.value))
    session.discard([a_half])
    return k


def _shared_copy(state: PureState) -> PureState:
    """sum psi_{x,r} |x>|r>  ->  sum psi_{x,r} |x>|x>|r> (first subsystem copied)."""
    dim, rest = state.dims[0], state.dims[1:]
    psi = state.amps.reshape(dim, -1)
    out = np.zeros((dim, dim, psi.shape[1]), dtype=complex)
    out[np.arange(dim), np.arange(dim)] = psi
    return PureState((dim, dim) + rest, out.ravel())


def _teleport(input_state: PureState, stop_after_step1: bool):
    dim = input_state.dims[0]

    def run(session: LoccSession) -> RunResult:
        a_half, b_half = session.add_entangled_pair([1 / dim] * dim, dim, names=("A", "B"))
        names = ["q"] + [f"R{i}" for i in range(len(input_state.dims) - 1)]
        q, *ref = session.add_local_state(ALICE, input_state, names)
        teleport_step1(session, q, a_half, b_half)
        if stop_after_step1:
            return RunResult(session.fidelity([a_half, b_half, *ref], _shared_copy(input_state)))
        teleport_step2(session, a_half, b_half)
        return RunResult(session.fidelity([b_half, *ref], input_state))

    return run


def _input_params(state: PureState) -> dict:
    return {"dims": list(state.dims), "amps": state.amps}


def teleport_two_stage(input_state: PureState, *, stop_after_step1: bool = False, evaluation: str = "exhaustive",
                       runs: int = 1, seed: int = 0):
    """Teleport a qubit (optionally entangled with reference subsystems) to Bob.

    The first subsystem of ``input_state`` is the qubit Alice sends; any
    further subsystems are an untouched reference held on Alice's side.
    """
    if input_state.dims[0] != 2:
        raise ValueError("teleport_two_stage moves a qubit; use teleport_d_dim")
    branches = execute(_teleport(input_state, stop_after_step1), evaluation=evaluation, runs=runs, seed=seed)
    name = "teleport_step1" if stop_after_step1 else "teleport_two_stage"
    params = {"D": 2, "N": 1, "stop_after_step1": stop_after_step1, **_input_params(input_state)}
    return build_report(name, params, branches, seed=seed)


def teleport_d_dim(input_state: PureState, dim: int | None = None, *, evaluation: str = "exhaustive",
                   runs: int = 1, seed: int = 0):
    dim = input_state.dims[0] if dim is None else dim
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if input_state.dims[0] != dim:
        raise qcore.DimensionError(f"input has dimension {input_state.dims[0]}, expected {dim}")
    branches = execute(_teleport(input_state, False), evaluation=evaluation, runs=runs, seed=seed)
    params = {"D": dim, "N": 1, **_input_params(input_state)}
    return build_report("teleport_d_dim", params, branches, seed=seed)


def _target_pair(a: complex, b: complex) -> PureState:
    return PureState.from_amplitudes([a, 0, 0, b], (2, 2))


def _dilute(a: complex, b: complex, baseline: bool):
    def run(session: LoccSession) -> RunResult:
        a_half, b_half = session.add_entangled_pair([0.5, 0.5], 2, names=("A", "B"))
        if baseline:
            keep, q = session.add_local_state(ALICE, _target_pair(a, b), ["A'", "q"])
            teleport_step1(session, q, a_half, b_half)
            teleport_step2(session, a_half, b_half)
            return RunResult(session.fidelity([keep, b_half], _target_pair(a, b)))
        (q,) = session.add_local_state(ALICE, PureState.from_amplitudes([a, b]), ["q"])
        teleport_step1(session, q, a_half, b_half)
        return RunResult(session.fidelity([a_half, b_half], _target_pair(a, b)))

    return run


def dilute_step1_only(a: complex, b: complex, *, evaluation: str = "exhaustive", runs: int = 1, seed: int = 0):
    """Turn one EPR pair into a|00> + b|11> with a single bit."""
    check_normalized([a, b], "(a, b)")
    branches = execute(_dilute(a, b, False), evaluation=evaluation, runs=runs, seed=seed)
    base = dilute_baseline(a, b, evaluation=evaluation, runs=runs, seed=seed)
    params = {"a": complex(a), "b": complex(b), "D": 2, "N": 1}
    return build_report("dilute_step1_only", params, branches, seed=seed, details={
        "baseline_bits": base.bits_exact,
        "baseline_fidelity": base.fidelity_expected,
        "target_ebits": qcore.binary_entropy(abs(a) ** 2),
    })


def dilute_baseline(a: complex, b: complex, *, evaluation: str = "exhaustive", runs: int = 1, seed: int = 0):
    """Reference path: prepare the pair locally and teleport one half (2 bits)."""
    check_normalized([a, b], "(a, b)")
    branches = execute(_dilute(a, b, True), evaluation=evaluation, runs=runs, seed=seed)
    params = {"a": complex(a), "b": complex(b), "D": 2, "N": 1}
    return build_report("dilute_baseline", params, branches, seed=seed)
