"""Two-party session runtime with locality enforcement and cost ledgers.

A :class:`LoccSession` owns the joint pure state of every live register,
records each local action in a transcript and meters classical messages.
Measurement outcomes come either from a seeded RNG (sampled runs) or from a
scripted outcome sequence, which is how :func:`run_exhaustive` walks every
branch of a protocol.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from . import qcore
from .qcore import PureState, Unitary

BRANCH_CAP = 2**16


class Party(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"


class LocalityViolation(RuntimeError):
    """A party touched a register it does not own."""


class NotProduct(RuntimeError):
    """Registers to discard are still entangled with the rest."""


class BranchLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Register:
    id: int
    name: str
    dim: int
    owner: Party

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"register {self.name!r} needs dim >= 2, got {self.dim}")


@dataclass(frozen=True)
class Message:
    sender: Party
    receiver: Party
    value: int
    domain: int

    @property
    def bit_cost(self) -> float:
        return math.log2(self.domain)

    @property
    def bit_ceiling(self) -> int:
        return math.ceil(math.log2(self.domain) - 1e-12)


@dataclass
class Event:
    type: str
    party: str
    registers: list[int]
    outcome: int | None = None
    value: int | None = None
    domain: int | None = None
    bits: float | None = None
    # Born probability of the recorded outcome; kept out of the export
    prob: float | None = field(default=None, repr=False)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"type": self.type, "party": self.party, "registers": list(self.registers)}
        for key in ("outcome", "value", "domain", "bits"):
            val = getattr(self, key)
            if val is not None:
                doc[key] = val
        return doc


@dataclass(frozen=True)
class EntangledResource:
    schmidt_coeffs: tuple[float, ...]
    registers: tuple[int, int]

    @property
    def ebits(self) -> float:
        return qcore.shannon_entropy(self.schmidt_coeffs)


@dataclass
class CostSummary:
    bits_a_to_b: float
    bits_b_to_a: float
    ceiling_a_to_b: int
    ceiling_b_to_a: int
    ebits_consumed: float
    transcript_length: int


class ReplayMemo:
    """Results of state updates keyed by (operation index, outcomes so far).

    In a protocol whose only nondeterminism is its measurement outcomes,
    that key fixes the state, so replays of a shared prefix reuse it.
    """

    def __init__(self, budget: int = 2**24):
        self.budget = budget
        self._store: dict = {}

    def get(self, key, compute):
        if key in self._store:
            return self._store[key]
        value = compute()
        size = sum(x.size for x in (value if isinstance(value, tuple) else (value,)) if isinstance(x, PureState))
        if size <= self.budget:
            self.budget -= size
            self._store[key] = value
        return value


class LoccSession:
    def __init__(self, seed: int = 0, *, max_amplitudes: int = qcore.MAX_AMPLITUDES, script=None,
                 memo: ReplayMemo | None = None):
        self.seed = seed
        self.max_amplitudes = max_amplitudes
        self.registers: list[Register] = []
        self.state = PureState.empty()
        self.transcript: list[Event] = []
        self.resources: list[EntangledResource] = []
        self.bits_a_to_b = 0.0
        self.bits_b_to_a = 0.0
        self.ceiling_a_to_b = 0
        self.ceiling_b_to_a = 0
        self.ebits_consumed = 0.0
        self._rng = np.random.default_rng(seed)
        self._next_id = 0
        self._measured: set[int] = set()
        # scripted outcomes for exhaustive evaluation; see run_exhaustive
        self._script = None if script is None else list(script)
        self.trace: list[tuple[int, float, list[int]]] = []
        self._memo = memo
        self._op = 0

    # -- bookkeeping ---------------------------------------------------------

    def register(self, reg_id: int) -> Register:
        for r in self.registers:
            if r.id == reg_id:
                return r
        raise KeyError(f"no live register with id {reg_id}")

    def _pos(self, regs: Sequence[Register | int]) -> list[int]:
        ids = [r.id if isinstance(r, Register) else int(r) for r in regs]
        order = [r.id for r in self.registers]
        try:
            return [order.index(i) for i in ids]
        except ValueError:
            raise KeyError(f"register not live: {ids}") from None

    def _ids(self, regs) -> list[int]:
        return [r.id if isinstance(r, Register) else int(r) for r in regs]

    def _check_owner(self, party: Party, regs) -> None:
        for rid in self._ids(regs):
            reg = self.register(rid)
            if reg.owner != party:
                raise LocalityViolation(f"{party.value} cannot act on {reg.owner.value}'s register {reg.name!r}")

    def _new_register(self, name: str, dim: int, owner: Party) -> Register:
        reg = Register(self._next_id, name, dim, Party(owner))
        self._next_id += 1
        self.registers.append(reg)
        return reg

    def _step(self, compute, *extra):
        """Run one state computation, reusing a replay memo when there is one."""
        self._op += 1
        if self._memo is None:
            return compute()
        key = (self._op, tuple(o for o, _, _ in self.trace)) + extra
        return self._memo.get(key, compute)

    def _extend(self, piece: PureState) -> None:
        self.state = self._step(lambda: qcore.tensor(self.state, piece, max_size=self.max_amplitudes))

    def dims(self) -> tuple[int, ...]:
        return self.state.dims

    # -- resources -----------------------------------------------------------

    def add_entangled_pair(self, coeffs: Sequence[float], dim_a: int, dim_b: int | None = None,
                           names: tuple[str, str] = ("A", "B")) -> tuple[Register, Register]:
        """Provision sum_l sqrt(coeffs[l]) |l>_A |l>_B and charge its entanglement."""
        dim_b = dim_a if dim_b is None else dim_b
        lam = np.asarray(coeffs, dtype=float)
        if lam.ndim != 1 or lam.size == 0 or np.any(lam < -qcore.ATOL) or abs(lam.sum() - 1) > qcore.ATOL:
            raise ValueError(f"squared Schmidt coefficients must be nonnegative and sum to 1: {coeffs}")
        if lam.size > min(dim_a, dim_b):
            raise ValueError("more Schmidt coefficients than the smaller register dimension")
        lam = np.clip(lam, 0.0, None)
        amps = np.zeros(dim_a * dim_b, dtype=complex)
        for l, x in enumerate(lam):
            amps[l * dim_b + l] = np.sqrt(x)
        self._extend(PureState.from_amplitudes(amps, (dim_a, dim_b), normalize=True))
        ra = self._new_register(names[0], dim_a, Party.ALICE)
        rb = self._new_register(names[1], dim_b, Party.BOB)
        res = EntangledResource(tuple(float(x) for x in lam), (ra.id, rb.id))
        self.resources.append(res)
        self.ebits_consumed += res.ebits
        return ra, rb

    def add_local_state(self, party: Party, state: PureState, names: Sequence[str] | None = None) -> list[Register]:
        """Append registers prepared locally by ``party`` (no ebit charge)."""
        names = names or [f"{party.value[0].lower()}{self._next_id + i}" for i in range(len(state.dims))]
        self._extend(state)
        regs = [self._new_register(n, d, party) for n, d in zip(names, state.dims)]
        self.transcript.append(Event("ancilla", Party(party).value, [r.id for r in regs]))
        return regs

    def add_ancilla(self, party: Party, dim: int, basis_value: int = 0, name: str = "anc") -> Register:
        if not 0 <= basis_value < dim:
            raise ValueError(f"basis value {basis_value} outside dim {dim}")
        return self.add_local_state(party, PureState.basis((dim,), (basis_value,)), [name])[0]

    # -- local actions -------------------------------------------------------

    def local_unitary(self, party: Party, regs, u: Unitary) -> None:
        self._check_owner(party, regs)
        pos = self._pos(regs)
        self.state = self._step(lambda: qcore.apply_unitary(self.state, u, pos))
        self.transcript.append(Event("unitary", Party(party).value, self._ids(regs)))

    def local_measure(self, party: Party, regs, classes=None) -> int:
        """Measure ``regs``; ``classes`` coarse-grains the basis as in qcore.measure."""
        self._check_owner(party, regs)
        pos = self._pos(regs)
        if self._script is None:
            outcome, prob, post = qcore.measure(self.state, pos, float(self._rng.random()), classes)
        else:
            probs = self._step(lambda: qcore.outcome_probabilities(self.state, pos, classes))
            options = [o for o, p in probs.items() if p > qcore.PRUNE]
            depth = len(self.trace)
            outcome = self._script[depth] if depth < len(self._script) else options[0]
            if outcome not in options:
                raise RuntimeError(f"scripted outcome {outcome} impossible at measurement {depth}")
            prob, post = self._step(lambda: qcore.project(self.state, pos, outcome, classes), outcome)
            self.trace.append((outcome, prob, options))
        self.state = post
        self._measured.update(self._ids(regs))
        self.transcript.append(Event("measure", Party(party).value, self._ids(regs), outcome=outcome, prob=prob))
        return outcome

    def local_relabel(self, party: Party, regs, out_dims: Sequence[int], pairs, names=None) -> list[Register]:
        """Move amplitude from input basis indices to output ones (a local isometry).

        ``pairs`` is a sequence of ``(in_index, out_index)`` with both sides
        injective; the input registers are consumed and fresh output registers
        are appended. All weight must already sit on the mapped inputs.
        """
        self._check_owner(party, regs)
        pos = self._pos(regs)
        rest_dims = tuple(d for i, d in enumerate(self.state.dims) if i not in pos)
        out_dims = tuple(out_dims)

        def compute():
            table = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            mat, _ = qcore._front(self.state, pos)
            out_dim = int(np.prod(out_dims, dtype=np.int64))
            lost = 1.0 - float(np.sum(np.abs(mat[table[:, 0]]) ** 2))
            if lost > qcore.ATOL:
                raise ValueError(f"relabel would discard weight {lost:.3g}")
            if out_dim * int(np.prod(rest_dims, dtype=np.int64)) > self.max_amplitudes:
                raise qcore.CapacityError("relabel output exceeds amplitude cap")
            new = np.zeros((out_dim, mat.shape[1]), dtype=complex)
            new[table[:, 1]] = mat[table[:, 0]]
            # output registers go last, matching id order
            psi = np.moveaxis(new.reshape((out_dim,) + rest_dims), 0, -1).reshape(-1)
            return PureState.from_amplitudes(psi, rest_dims + out_dims, normalize=True)

        self.state = self._step(compute)
        consumed = set(self._ids(regs))
        self.registers = [r for r in self.registers if r.id not in consumed]
        self._measured -= consumed
        names = names or [f"{party.value[0].lower()}{self._next_id + i}" for i in range(len(out_dims))]
        created = [self._new_register(n, d, party) for n, d in zip(names, out_dims)]
        self.transcript.append(Event("unitary", Party(party).value, sorted(consumed) + [r.id for r in created]))
        return created

    def send(self, sender: Party, receiver: Party, value: int, domain: int) -> Message:
        sender, receiver = Party(sender), Party(receiver)
        if sender == receiver:
            raise ValueError("a party cannot message itself")
        if domain < 2:
            raise ValueError("message domain must be at least 2")
        if not 0 <= value < domain:
            raise ValueError(f"value {value} outside domain {domain}")
        msg = Message(sender, receiver, int(value), int(domain))
        if sender == Party.ALICE:
            self.bits_a_to_b += msg.bit_cost
            self.ceiling_a_to_b += msg.bit_ceiling
        else:
            self.bits_b_to_a += msg.bit_cost
            self.ceiling_b_to_a += msg.bit_ceiling
        self.transcript.append(Event("message", sender.value, [], value=msg.value, domain=msg.domain, bits=msg.bit_cost))
        return msg

    def discard(self, regs) -> None:
        ids = self._ids(regs)
        pos = self._pos(ids)
        rest_dims = tuple(r.dim for r in self.registers if r.id not in ids)

        def compute():
            mat, _ = qcore._front(self.state, pos)
            rho = mat @ mat.conj().T
            if np.real(np.vdot(rho, rho)) < 1.0 - qcore.ATOL:
                names = [self.register(i).name for i in ids]
                raise NotProduct(f"registers {names} are entangled with the rest")
            _, vecs = np.linalg.eigh(rho)
            return PureState.from_amplitudes(vecs[:, -1].conj() @ mat, rest_dims, normalize=True)

        self.state = self._step(compute)
        owners = {self.register(i).owner.value for i in ids}
        self.registers = [r for r in self.registers if r.id not in ids]
        self._measured -= set(ids)
        self.transcript.append(Event("discard", owners.pop() if len(owners) == 1 else "both", ids))

    # -- reporting -----------------------------------------------------------

    def cost_summary(self) -> CostSummary:
        return CostSummary(self.bits_a_to_b, self.bits_b_to_a, self.ceiling_a_to_b, self.ceiling_b_to_a,
                           self.ebits_consumed, len(self.transcript))

    def transcript_json(self) -> str:
        return json.dumps([e.to_json() for e in self.transcript])

    def ledger_consistent(self) -> bool:
        sent = {Party.ALICE.value: 0.0, Party.BOB.value: 0.0}
        for e in self.transcript:
            if e.type == "message":
                sent[e.party] += math.log2(e.domain)
        return (math.isclose(sent["Alice"], self.bits_a_to_b, abs_tol=1e-9)
                and math.isclose(sent["Bob"], self.bits_b_to_a, abs_tol=1e-9))

    def fidelity(self, regs, target: PureState) -> float:
        pos = self._pos(regs)
        return self._step(lambda: qcore.fidelity_on(self.state, pos, target))


def new_session(seed: int = 0, **kwargs) -> LoccSession:
    return LoccSession(seed, **kwargs)


@dataclass
class Branch:
    outcomes: tuple[int, ...]
    prob: float
    result: Any
    session: LoccSession


def run_exhaustive(protocol: Callable[[LoccSession], Any], seed: int = 0, max_paths: int = BRANCH_CAP,
                   **session_kwargs) -> list[Branch]:
    """Execute ``protocol`` once per joint measurement-outcome path.

    Each path is replayed from scratch with a scripted outcome prefix, so the
    protocol may be any ordinary function of the session whose only
    nondeterminism is its measurement outcomes.
    """
    done: list[Branch] = []
    stack: list[tuple[int, ...]] = [()]
    memo = ReplayMemo()
    while stack:
        prefix = stack.pop()
        session = LoccSession(seed, script=prefix, memo=memo, **session_kwargs)
        result = protocol(session)
        path = tuple(o for o, _, _ in session.trace)
        for depth in range(len(prefix), len(session.trace)):
            chosen, _, options = session.trace[depth]
            for alt in reversed([o for o in options if o != chosen]):
                stack.append(path[:depth] + (alt,))
        prob = float(np.prod([p for _, p, _ in session.trace])) if session.trace else 1.0
        done.append(Branch(path, prob, result, session))
        if len(done) + len(stack) > max_paths:
            raise BranchLimitExceeded(f"more than {max_paths} outcome paths")
    done.sort(key=lambda b: b.outcomes)
    total = sum(b.prob for b in done)
    if abs(total - 1.0) > 1e-8:
        raise RuntimeError(f"branch probabilities sum to {total}")
    return done
