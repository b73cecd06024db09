from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .. import qcore
from ..formulas import formula, formula_ref
from ..locc import BRANCH_CAP, LoccSession, Party, run_exhaustive

REPORT_FIELDS = (
    "protocol", "params", "bits_exact", "bits_ceiling", "ebits", "fidelity_expected",
    "fidelity_branches", "formula_bits", "formula_ref", "mode", "seed",
)


class KnowledgeViolation(RuntimeError):
    """Bob's side read a value only Alice is given."""


class SignalSpec:
    """Protocol inputs split into shared constants and Alice-only data.

    Parties never read the spec directly; each gets a :class:`SpecView`, and
    every read through a view is logged in ``audit``.
    """

    def __init__(self, shared: Mapping[str, Any], private: Mapping[str, Any]):
        overlap = set(shared) & set(private)
        if overlap:
            raise ValueError(f"keys both shared and private: {sorted(overlap)}")
        self.shared = dict(shared)
        self.private = dict(private)
        self.audit: list[tuple[str, str]] = []

    def view(self, party: Party) -> "SpecView":
        return SpecView(self, Party(party))

    def __getitem__(self, key):
        # referee access, not a party's
        return self.shared[key] if key in self.shared else self.private[key]


class SpecView:
    def __init__(self, spec: SignalSpec, party: Party):
        self._spec = spec
        self._party = party

    def __getitem__(self, key: str):
        self._spec.audit.append((self._party.value, key))
        if key in self._spec.shared:
            return self._spec.shared[key]
        if key in self._spec.private:
            if self._party != Party.ALICE:
                raise KnowledgeViolation(f"{self._party.value} may not read {key!r}")
            return self._spec.private[key]
        raise KeyError(key)


@dataclass
class RunResult:
    fidelity: float
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class ProtocolReport:
    protocol: str
    params: dict[str, Any]
    bits_exact: float
    bits_ceiling: int
    ebits: float
    fidelity_expected: float
    fidelity_branches: list[float]
    formula_bits: float
    formula_ref: str
    mode: str
    seed: int
    branch_probs: list[float] = field(default_factory=list, repr=False)
    details: dict[str, Any] = field(default_factory=dict, repr=False)
    branches: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {k: _jsonable(getattr(self, k)) for k in REPORT_FIELDS}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @property
    def sessions(self) -> list[LoccSession]:
        return [s for _, _, s in self.branches]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def mode_label(delta: float | None) -> str:
    return "exact" if delta is None else f"typical({delta:g})"


def execute(run: Callable[[LoccSession], RunResult], *, evaluation: str = "exhaustive", runs: int = 1,
            seed: int = 0, max_paths: int = BRANCH_CAP, max_amplitudes: int = qcore.MAX_AMPLITUDES):
    """Evaluate ``run`` over all outcome branches, or over seeded samples."""
    if evaluation == "exhaustive":
        branches = run_exhaustive(run, seed=seed, max_paths=max_paths, max_amplitudes=max_amplitudes)
        return [(b.prob, b.result, b.session) for b in branches]
    if evaluation == "sampled":
        if runs < 1:
            raise ValueError("sampled evaluation needs runs >= 1")
        seeds = np.random.SeedSequence(seed).generate_state(runs)
        out = []
        for s in seeds:
            session = LoccSession(int(s), max_amplitudes=max_amplitudes)
            out.append((1.0 / runs, run(session), session))
        return out
    raise ValueError(f"unknown evaluation mode {evaluation!r}")


def build_report(name: str, params: dict[str, Any], branches, *, seed: int, delta: float | None = None,
                 formula_params: Mapping[str, Any] | None = None, ebits: float | None = None,
                 details: dict[str, Any] | None = None) -> ProtocolReport:
    probs = [p for p, _, _ in branches]
    fids = [r.fidelity for _, r, _ in branches]
    bits = [s.bits_a_to_b + s.bits_b_to_a for _, _, s in branches]
    ceilings = [s.ceiling_a_to_b + s.ceiling_b_to_a for _, _, s in branches]
    merged = dict(branches[0][1].details)
    merged.update(details or {})
    fparams = dict(params if formula_params is None else formula_params)
    return ProtocolReport(
        protocol=name,
        params=params,
        bits_exact=float(bits[0] if len(set(bits)) == 1 else math.fsum(p * b for p, b in zip(probs, bits))),
        bits_ceiling=int(max(ceilings)),
        ebits=float(branches[0][2].ebits_consumed if ebits is None else ebits),
        fidelity_expected=float(np.dot(probs, fids)),
        fidelity_branches=[float(f) for f in fids],
        formula_bits=formula(name, fparams),
        formula_ref=formula_ref(name),
        mode=mode_label(delta),
        seed=int(seed),
        branch_probs=[float(p) for p in probs],
        details=merged,
        branches=list(branches),
    )


def product_state(vectors, dims=None) -> qcore.PureState:
    amps = np.ones(1, dtype=complex)
    for v in vectors:
        amps = np.kron(amps, np.asarray(v, dtype=complex))
    dims = dims or tuple(len(v) for v in vectors)
    return qcore.PureState.from_amplitudes(amps, dims, normalize=True)


def check_normalized(vec, what: str = "signal") -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    if abs(np.vdot(vec, vec).real - 1.0) > qcore.ATOL:
        raise ValueError(f"{what} is not normalized")
    return vec


def bits_per(report: ProtocolReport, count: int) -> float:
    return report.bits_exact / count


def ceil_log2(x: int) -> int:
    return math.ceil(math.log2(x) - 1e-12) if x > 1 else 0
