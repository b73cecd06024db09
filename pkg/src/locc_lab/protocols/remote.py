"""Remote preparation of constrained ensembles.

Every construction here has the same two-step skeleton:

1. Reach the shared state ``sum_l a_l |l>_A |l>_B`` from a pre-shared
   resource whose Schmidt weights match the ensemble's fixed block weights.
   Depending on the ensemble this costs nothing (a local phase), one bit, or
   ``log2(d)`` bits for an ancilla of dimension ``d``.
2. Both parties compress their halves onto the same codebook, Alice
   Fourier-measures her compressed register and sends the outcome, Bob
   fixes the phases and decompresses.

Bob's side only ever reads shared constants through its ``SpecView``.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import integrate

from .. import qcore
from ..locc import LoccSession, Party, Register
from ..qcore import PureState
from ..typspace import (
    BlockPartition,
    build_codebook,
    count_window,
    lcm_of_block_sizes,
    position_partition,
    schumacher_compress,
    schumacher_decompress,
)
from ..formulas import phase_ensemble_entropy
from .common import RunResult, SignalSpec, build_report, execute, product_state

ALICE, BOB = Party.ALICE, Party.BOB


# -- step 2: compressed teleportation of the shared state ----------------------


def compressed_step2(session: LoccSession, alice_regs: Sequence[Register], bob_regs: Sequence[Register],
                     probs: Sequence[float], delta: float | None, details: dict) -> list[Register] | None:
    """Move ``sum_x c_x |x>_A |x>_B`` (n registers a side) into Bob's hands.

    Returns Bob's decompressed registers, or ``None`` if compression aborted.
    The message schedule is fixed: an aborting Alice still sends one symbol.
    """
    codebook = build_codebook(probs, len(alice_regs), delta)
    dim = codebook.register_dim
    details["codebook_size"] = codebook.D
    mark = len(session.transcript)
    ok, ca = schumacher_compress(session, ALICE, alice_regs, codebook, name="CA")
    event = session.transcript[mark]
    details["compression_success_prob"] = event.prob if event.outcome == 0 else 1.0 - event.prob
    if not ok:
        session.send(ALICE, BOB, 0, dim)
        details["aborted"] = True
        return None
    ok, cb = schumacher_compress(session, BOB, bob_regs, codebook, name="CB")
    if not ok:  # unreachable once Alice's projection succeeded
        details["aborted"] = True
        return None
    session.local_unitary(ALICE, [ca], qcore.fourier(dim))
    k = session.local_measure(ALICE, [ca])
    msg = session.send(ALICE, BOB, k, dim)
    if msg.value:
        session.local_unitary(BOB, [cb], qcore.phase_correction(dim, msg.value))
    session.discard([ca])
    details["aborted"] = False
    return schumacher_decompress(session, BOB, cb, codebook, names=[f"out{i}" for i in range(len(bob_regs))])


def _final_fidelity(session, regs, target) -> float:
    return 0.0 if regs is None else session.fidelity(regs, target)


def _validate_moduli(a: float, b: float) -> tuple[float, float]:
    a, b = float(a), float(b)
    if a < 0 or b < 0 or abs(a * a + b * b - 1) > qcore.ATOL:
        raise ValueError("a, b must be nonnegative with a^2 + b^2 = 1")
    return a, b


def _resolve_thetas(thetas, n, seed):
    if thetas is None:
        if n is None:
            raise ValueError("give thetas or N")
        thetas = np.random.default_rng(seed).uniform(0, 2 * np.pi, size=n)
    return [float(t) for t in thetas]


# -- fixed-modulus phase ensembles -------------------------------------------


def _phase_run(spec: SignalSpec, delta, unfold: bool = False):
    def run(session: LoccSession) -> RunResult:
        alice, bob = spec.view(ALICE), spec.view(BOB)
        a2 = bob["a2"]
        n = bob["N"]
        pairs = [session.add_entangled_pair([a2, 1 - a2], 2, names=(f"A{i}", f"B{i}")) for i in range(n)]
        details: dict = {}
        _alice_phases(session, alice, [p[0] for p in pairs])
        bob_out = compressed_step2(session, [p[0] for p in pairs], [p[1] for p in pairs], [a2, 1 - a2],
                                   delta, details)
        if bob_out is not None and unfold:
            _bob_unfold(session, bob, bob_out)
        return RunResult(_final_fidelity(session, bob_out, _phase_target(spec)), details)

    return run


def _alice_phases(session, alice, regs):
    for reg, theta in zip(regs, alice["thetas"]):
        session.local_unitary(ALICE, [reg], qcore.phase(theta))


def _phase_target(spec: SignalSpec) -> PureState:
    a, b = math.sqrt(spec["a2"]), math.sqrt(1 - spec["a2"])
    thetas = spec["true_thetas"] if "true_thetas" in spec.private else spec["thetas"]
    return product_state([[a, b * np.exp(1j * t)] for t in thetas])


def remote_prep_phase(a: float, b: float, thetas: Sequence[float] | None = None, *, N: int | None = None,
                      delta: float | None = None, evaluation: str = "exhaustive", runs: int = 1, seed: int = 0,
                      max_amplitudes: int = qcore.MAX_AMPLITUDES):
    """Prepare ``a|0> + b e^{i theta_k}|1>`` at Bob for each k.

    ``a`` and ``b`` are shared; the phases are Alice's alone. The shared
    pairs already carry the right Schmidt weights, so step 1 is a local
    phase on Alice's half. ``delta=None`` runs in exact mode.
    """
    a, b = _validate_moduli(a, b)
    thetas = _resolve_thetas(thetas, N, seed)
    spec = SignalSpec({"a2": a * a, "N": len(thetas)}, {"thetas": thetas})
    branches = execute(_phase_run(spec, delta), evaluation=evaluation, runs=runs, seed=seed,
                       max_amplitudes=max_amplitudes)
    params = {"a": a, "b": b, "a2": a * a, "N": len(thetas), "thetas": thetas, "delta": delta}
    report = build_report("remote_prep_phase", params, branches, seed=seed, delta=delta)
    report.details["entropy"] = phase_ensemble_entropy(a * a)
    report.details["spec"] = spec
    return report


# -- segmented phases: trade ebits for bits ------------------------------------


def segment_of(theta: float, segments: int = 2) -> int:
    """Half-open arcs [2 pi j / k, 2 pi (j+1) / k)."""
    t = float(theta) % (2 * np.pi)
    return min(int(t // (2 * np.pi / segments)), segments - 1)


def folded_ensemble_entropy(a2: float, segments: int = 2) -> float:
    """Entropy of the average state with theta uniform on one arc of width 2 pi / k."""
    width = 2 * np.pi / segments
    re = integrate.quad(np.cos, 0.0, width, epsabs=1e-13, epsrel=1e-13)[0] / width
    im = integrate.quad(np.sin, 0.0, width, epsabs=1e-13, epsrel=1e-13)[0] / width
    off = math.sqrt(a2 * (1 - a2)) * complex(re, -im)
    rho = np.array([[a2, off], [np.conj(off), 1 - a2]])
    return qcore.von_neumann_entropy(qcore.DensityMatrix(rho))


def _bob_unfold(session, bob, regs):
    k = bob["segments"]
    for reg, flag in zip(regs, bob["flags_received"]):
        if flag:
            session.local_unitary(BOB, [reg], qcore.phase(2 * np.pi * flag / k))


def remote_prep_segmented(a: float, b: float, thetas: Sequence[float] | None = None, *, N: int | None = None,
                          segments: int = 2, delta: float | None = None, evaluation: str = "exhaustive",
                          runs: int = 1, seed: int = 0):
    """Fold every phase into the first arc, send the arc index classically.

    Alice prepares ``a|0> + b e^{i(theta - 2 pi j/k)}|1>`` through the
    phase-ensemble protocol plus a flag per signal; Bob rotates back. The
    reported ebit figure is the folded ensemble's entropy per signal.
    """
    a, b = _validate_moduli(a, b)
    thetas = _resolve_thetas(thetas, N, seed)
    width = 2 * np.pi / segments
    flags = [segment_of(t, segments) for t in thetas]
    folded = [(t % (2 * np.pi)) - width * j for t, j in zip(thetas, flags)]
    received: list[int] = []
    spec = SignalSpec(
        {"a2": a * a, "N": len(thetas), "segments": segments, "flags_received": received},
        {"thetas": folded, "true_thetas": thetas, "flags": flags},
    )
    inner = _phase_run(spec, delta, unfold=True)

    def run(session: LoccSession) -> RunResult:
        received.clear()
        for j in spec.view(ALICE)["flags"]:
            received.append(session.send(ALICE, BOB, j, segments).value)
        return inner(session)

    branches = execute(run, evaluation=evaluation, runs=runs, seed=seed)
    s_full = phase_ensemble_entropy(a * a)
    s_fold = folded_ensemble_entropy(a * a, segments)
    n = len(thetas)
    params = {"a": a, "b": b, "a2": a * a, "N": n, "thetas": thetas, "segments": segments, "delta": delta}
    return build_report("remote_prep_segmented", params, branches, seed=seed, delta=delta, ebits=n * s_fold,
                        details={"entropy": s_full, "folded_entropy": s_fold, "flags": flags,
                                 "provisioned_ebits": branches[0][2].ebits_consumed})


# -- block-constrained ensembles ----------------------------------------------


def _block_step1_unitary(block_local, weights, d, amps, L):
    """Ancilla coupling: |0>_anc |k_r> -> (sum_s a_{k_(r+s)} |s>/sqrt(c))(sum_t |t>/sqrt(T)) |k_r>.

    The ancilla label packs the per-block double index as j = s*T + t.
    """
    prescribed = {}
    for block, c in zip(block_local, weights):
        r_size = len(block)
        t_size = d // r_size
        for r, k in enumerate(block):
            col = np.zeros(d * L, dtype=complex)
            for s in range(r_size):
                amp = amps[block[(r + s) % r_size]] / math.sqrt(c)
                for t in range(t_size):
                    col[(s * t_size + t) * L + k] = amp / math.sqrt(t_size)
            prescribed[k] = col
    return qcore.complete_to_unitary(d * L, prescribed)


def _block_shift(block_local, d, j, L):
    perm = list(range(L))
    for block in block_local:
        r_size = len(block)
        s = j // (d // r_size)
        for v, k in enumerate(block):
            perm[k] = block[(v + s) % r_size]
    return perm


def _blocks_run(spec: SignalSpec, delta, embed=None):
    def run(session: LoccSession) -> RunResult:
        alice, bob = spec.view(ALICE), spec.view(BOB)
        blocks, weights, d, L = bob["blocks_local"], bob["weights"], bob["d"], bob["L"]
        n = bob["N"]
        lam = np.zeros(L)
        for block, c in zip(blocks, weights):
            lam[list(block)] = c / len(block)
        pairs = [session.add_entangled_pair(lam, L, names=(f"A{i}", f"B{i}")) for i in range(n)]
        details: dict = {"d": d, "L": L}
        outcomes = []
        for i, (ra, rb) in enumerate(pairs):
            if d == 1:
                diag = np.ones(L, dtype=complex)
                for block, c in zip(blocks, weights):
                    for k in block:
                        diag[k] = alice["signals"][i][k] / math.sqrt(c)
                session.local_unitary(ALICE, [ra], qcore.Unitary(np.diag(diag)))
                continue
            anc = session.add_ancilla(ALICE, d, 0, name=f"anc{i}")
            u = _block_step1_unitary(blocks, weights, d, alice["signals"][i], L)
            session.local_unitary(ALICE, [anc, ra], u)
            j = session.local_measure(ALICE, [anc])
            msg = session.send(ALICE, BOB, j, d)
            outcomes.append(msg.value)
            perm = _block_shift(bob["blocks_local"], bob["d"], msg.value, L)
            if perm != list(range(L)):
                session.local_unitary(ALICE, [ra], qcore.permutation(perm))
                session.local_unitary(BOB, [rb], qcore.permutation(perm))
            session.discard([anc])
        details["step1_outcomes"] = outcomes
        details["step1_fidelity"] = session.fidelity(
            [p[0] for p in pairs] + [p[1] for p in pairs], _shared_target(spec["signals"], L))
        bob_out = compressed_step2(session, [p[0] for p in pairs], [p[1] for p in pairs], lam, delta, details)
        if bob_out is not None and embed is not None:
            bob_out = embed(session, bob, bob_out)
        return RunResult(_final_fidelity(session, bob_out, spec["target"]), details)

    return run


def _shared_target(signals, L) -> PureState:
    """prod_i sum_l a_il |l>_{A_i}, then the B copies: registers ordered A..., B..."""
    n = len(signals)
    amps = np.zeros((L**n, L**n), dtype=complex)
    prod = product_state(signals).amps
    idx = np.arange(L**n)
    amps[idx, idx] = prod
    return PureState((L,) * (2 * n), amps.ravel())


def _local_blocks(partition: BlockPartition):
    part = partition.nonzero()
    covered = part.covered
    local = {k: i for i, k in enumerate(covered)}
    blocks = [tuple(local[k] for k in b) for b in part.blocks]
    return part, covered, blocks


def _check_block_signals(partition: BlockPartition, signals) -> np.ndarray:
    signals = np.asarray(signals, dtype=complex)
    if signals.ndim != 2 or signals.shape[1] != partition.universe:
        raise ValueError(f"signals must be an (N, {partition.universe}) array")
    inside = np.zeros(partition.universe, dtype=bool)
    for block, c in zip(partition.blocks, partition.weights):
        w = np.sum(np.abs(signals[:, list(block)]) ** 2, axis=1)
        if np.any(np.abs(w - c) > qcore.ATOL):
            raise ValueError(f"block {list(block)} weight deviates from {c}")
        inside[list(block)] = True
    if np.any(np.abs(signals[:, ~inside]) > qcore.ATOL):
        raise ValueError("signal has amplitude outside the partition")
    if np.any(np.abs(np.sum(np.abs(signals) ** 2, axis=1) - 1) > qcore.ATOL):
        raise ValueError("signals must be normalized")
    return signals


def _blocks_spec(partition: BlockPartition, signals, extra_shared=None, extra_private=None):
    signals = _check_block_signals(partition, signals)
    part, covered, blocks = _local_blocks(partition)
    L = len(covered)
    if L < 2:
        raise ValueError("signals live in a one-dimensional space; nothing to prepare")
    local_signals = signals[:, list(covered)]
    shared = {
        "blocks_local": blocks,
        "weights": list(part.weights),
        "d": lcm_of_block_sizes(part),
        "L": L,
        "N": len(signals),
        "covered": list(covered),
        **(extra_shared or {}),
    }
    private = {"signals": local_signals, **(extra_private or {})}
    if "target" not in private:
        private["target"] = product_state(local_signals)
    return SignalSpec(shared, private), part


def remote_prep_blocks(partition: BlockPartition, signals, *, delta: float | None = None,
                       evaluation: str = "exhaustive", runs: int = 1, seed: int = 0,
                       max_paths: int = 2**16, max_amplitudes: int = qcore.MAX_AMPLITUDES):
    """Remote preparation when each block of basis labels has a fixed weight.

    ``signals`` is an ``(N, universe)`` array; row i must put weight
    ``partition.weights[m]`` on block m. Zero-weight blocks are dropped
    before the ancilla dimension d = lcm(block sizes) is chosen.
    """
    spec, part = _blocks_spec(partition, signals)
    branches = execute(_blocks_run(spec, delta), evaluation=evaluation, runs=runs, seed=seed,
                       max_paths=max_paths, max_amplitudes=max_amplitudes)
    params = {"blocks": [list(b) for b in part.blocks], "weights": list(part.weights), "N": len(signals),
              "universe": partition.universe, "delta": delta}
    report = build_report("remote_prep_blocks", params, branches, seed=seed, delta=delta)
    report.details["spec"] = spec
    report.details["step1_bits_per_signal"] = math.log2(spec["d"])
    report.details["step1_s_only_bits_per_signal"] = max(math.log2(len(b)) for b in spec["blocks_local"])
    return report


def _two_block_partition(e2: float) -> BlockPartition:
    return BlockPartition(4, [(0, 1), (2, 3)], [2 * e2, 1 - 2 * e2])


def _check_two_block(e2: float, signals) -> np.ndarray:
    if not 0 < e2 <= 0.5:
        raise ValueError("e^2 must lie in (0, 1/2]")
    signals = np.asarray(signals, dtype=complex)
    if signals.ndim != 2 or signals.shape[1] != 4:
        raise ValueError("signals must be an (N, 4) array of (a, b, c, d)")
    w = np.sum(np.abs(signals[:, :2]) ** 2, axis=1)
    if np.any(np.abs(w - 2 * e2) > qcore.ATOL):
        raise ValueError("constraint |a|^2 + |b|^2 = 2 e^2 violated")
    if np.any(np.abs(np.sum(np.abs(signals) ** 2, axis=1) - 1) > qcore.ATOL):
        raise ValueError("signals must be normalized")
    return signals


def _two_block_unitary(e2: float, sig) -> qcore.Unitary:
    """Ancilla coupling on (ancilla, A): e|0>|0> -> (a|0> + b|1>)|0>, and so on, normalized."""
    a, b, c, d = sig
    f2 = 0.5 - e2
    images = {0: (a, b), 1: (b, a)}
    scale = {0: math.sqrt(2 * e2), 1: math.sqrt(2 * e2)}
    if f2 > 1e-15:
        images.update({2: (c, d), 3: (d, c)})
        scale.update({2: math.sqrt(2 * f2), 3: math.sqrt(2 * f2)})
    prescribed = {}
    for k, (x0, x1) in images.items():
        col = np.zeros(8, dtype=complex)
        col[0 * 4 + k] = x0 / scale[k]
        col[1 * 4 + k] = x1 / scale[k]
        prescribed[k] = col
    return qcore.complete_to_unitary(8, prescribed)


_SWAP_PAIRS = qcore.permutation([1, 0, 3, 2])


def _two_block_run(spec: SignalSpec, delta):
    def run(session: LoccSession) -> RunResult:
        alice, bob = spec.view(ALICE), spec.view(BOB)
        e2, n = bob["e2"], bob["N"]
        f2 = 0.5 - e2
        lam = [e2, e2, f2, f2]
        pairs = [session.add_entangled_pair(lam, 4, names=(f"A{i}", f"B{i}")) for i in range(n)]
        details: dict = {"d": 2, "L": 4}
        outcomes = []
        for i, (ra, rb) in enumerate(pairs):
            anc = session.add_ancilla(ALICE, 2, 0, name=f"anc{i}")
            session.local_unitary(ALICE, [anc, ra], _two_block_unitary(e2, alice["signals"][i]))
            m = session.local_measure(ALICE, [anc])
            msg = session.send(ALICE, BOB, m, 2)
            outcomes.append(msg.value)
            if msg.value:
                session.local_unitary(ALICE, [ra], _SWAP_PAIRS)
                session.local_unitary(BOB, [rb], _SWAP_PAIRS)
            session.discard([anc])
        details["step1_outcomes"] = outcomes
        details["step1_fidelity"] = session.fidelity(
            [p[0] for p in pairs] + [p[1] for p in pairs], _shared_target(spec["signals"], 4))
        bob_out = compressed_step2(session, [p[0] for p in pairs], [p[1] for p in pairs], lam, delta, details)
        return RunResult(_final_fidelity(session, bob_out, spec["target"]), details)

    return run


def remote_prep_two_block(e2: float, signals, *, delta: float | None = None, evaluation: str = "exhaustive",
                          runs: int = 1, seed: int = 0, max_paths: int = 2**16):
    """Four-level signals (a, b, c, d) with |a|^2 + |b|^2 = 2 e^2 fixed.

    Step 1 costs one bit per signal: a two-level ancilla is coupled, measured,
    and an outcome of 1 is undone by swapping 0<->1 and 2<->3 on both halves.
    """
    signals = _check_two_block(e2, signals)
    spec = SignalSpec({"e2": float(e2), "N": len(signals)},
                      {"signals": signals, "target": product_state(signals)})
    branches = execute(_two_block_run(spec, delta), evaluation=evaluation, runs=runs, seed=seed,
                       max_paths=max_paths)
    params = {"e2": float(e2), "N": len(signals), "signals": signals, "delta": delta}
    report = build_report("remote_prep_two_block", params, branches, seed=seed, delta=delta)
    report.details["spec"] = spec
    return report


# -- qutrit signals with a fixed weight on |2> ---------------------------------


def qutrit_signal(a: complex, b: complex, c: float, theta: float) -> np.ndarray:
    return np.array([a, b, c * np.exp(1j * theta)], dtype=complex)


def _embed_into_qutrits(covered, n1):
    pairs = np.column_stack([np.arange(len(covered)), covered])

    def embed(session, bob, regs):
        out = []
        for i, reg in enumerate(regs):
            out += session.local_relabel(BOB, [reg], [3] * n1, pairs, names=[f"out{i}_{j}" for j in range(n1)])
        return out

    return embed


def remote_prep_qutrit(c2: float, signals, n1: int, *, delta: float | None = None, evaluation: str = "exhaustive",
                       runs: int = 1, seed: int = 0, max_paths: int = 2**16,
                       max_amplitudes: int = qcore.MAX_AMPLITUDES):
    """Signals a_i|0> + b_i|1> + c e^{i theta_i}|2> with c shared.

    Signals are grouped n1 at a time. Within a group, basis strings are
    blocked by the positions of their 2's; with ``delta`` set, only blocks
    whose count of 2's lies in the (outward-rounded) typical window are
    kept, Alice prepares the truncated group state, and the block
    construction runs on that subspace.
    """
    signals = np.asarray(signals, dtype=complex)
    if signals.ndim != 2 or signals.shape[1] != 3:
        raise ValueError("signals must be an (N_tot, 3) array")
    n_tot = len(signals)
    if n1 < 1 or n_tot % n1:
        raise ValueError("N_tot must be a positive multiple of n1")
    if np.any(np.abs(np.abs(signals[:, 2]) ** 2 - c2) > qcore.ATOL):
        raise ValueError("every signal must carry weight c^2 on |2>")
    if np.any(np.abs(np.sum(np.abs(signals) ** 2, axis=1) - 1) > qcore.ATOL):
        raise ValueError("signals must be normalized")
    partition = position_partition(n1, c2, delta=delta)
    kept = partition.total_weight()
    groups = []
    for g in range(n_tot // n1):
        composite = product_state(signals[g * n1:(g + 1) * n1]).amps
        mask = np.zeros(composite.size, dtype=bool)
        mask[list(partition.covered)] = True
        truncated = np.where(mask, composite, 0.0) / math.sqrt(kept)
        groups.append(truncated)
    scaled = BlockPartition(partition.universe, partition.blocks, [w / kept for w in partition.weights])
    spec, part = _blocks_spec(scaled, groups, extra_private={"target": product_state(signals)})
    embed = _embed_into_qutrits(spec["covered"], n1)
    branches = execute(_blocks_run(spec, None, embed=embed), evaluation=evaluation, runs=runs, seed=seed,
                       max_paths=max_paths, max_amplitudes=max_amplitudes)
    params = {"c2": float(c2), "N_tot": n_tot, "n1": n1, "delta": delta, "signals": signals}
    report = build_report("remote_prep_qutrit", params, branches, seed=seed, delta=delta)
    d, L = spec["d"], spec["L"]
    report.details.update({
        "spec": spec,
        "partition": partition,
        "kept_weight": kept,
        "counts": count_window(n1, c2, delta),
        "bits_per_signal": report.bits_exact / n_tot,
        "step1_bits_per_signal": math.log2(d) / n1,
        "step2_bits_per_signal": math.log2(L) / n1 if L > 1 else 0.0,
    })
    return report
