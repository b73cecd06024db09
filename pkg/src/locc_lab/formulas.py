"""Closed-form communication costs for each protocol, in bits."""
from __future__ import annotations

import math
from typing import Any, Callable, Mapping

from .qcore import binary_entropy, shannon_entropy


def phase_ensemble_entropy(a2: float) -> float:
    """Entropy of a|0> + b e^{i theta}|1> with theta uniform: H(|a|^2)."""
    return binary_entropy(a2)


def two_block_entropy(e2: float) -> float:
    """Entropy of the 4-level ensemble with |a|^2 + |b|^2 = 2 e^2."""
    if not 0 <= e2 <= 0.5:
        raise ValueError("e^2 must lie in [0, 1/2]")
    return 1.0 + binary_entropy(2 * e2)


def block_entropy(weights, sizes) -> float:
    """Largest entropy compatible with fixed block weights: spread evenly."""
    return shannon_entropy([w / r for w, r in zip(weights, sizes) for _ in range(r)])


def qutrit_entropy(c2: float) -> float:
    d2 = (1 - c2) / 2
    return shannon_entropy([d2, d2, c2])


def _get(params: Mapping[str, Any], key: str, default=None):
    if key in params:
        return params[key]
    if default is None:
        raise KeyError(f"missing parameter {key!r}")
    return default


def _teleport(p):
    return 2 * _get(p, "N", 1) * math.log2(_get(p, "D", 2))


def _teleport_step1(p):
    return _get(p, "N", 1) * math.log2(_get(p, "D", 2))


def _phase(p):
    return _get(p, "N", 1) * phase_ensemble_entropy(_a2(p))


def _segmented(p):
    k = _get(p, "segments", 2)
    return _get(p, "N", 1) * (phase_ensemble_entropy(_a2(p)) + math.log2(k))


def _two_block(p):
    return _get(p, "N", 1) * (1 + two_block_entropy(_get(p, "e2")))


def _blocks(p):
    sizes = [len(b) for b in p["blocks"]] if "blocks" in p else _get(p, "sizes")
    weights = _get(p, "weights")
    live = [(w, r) for w, r in zip(weights, sizes) if w > 0]
    d = math.lcm(*(r for _, r in live))
    return _get(p, "N", 1) * (math.log2(d) + block_entropy(*zip(*live)))


def _qutrit(p):
    c2 = _get(p, "c2")
    return _get(p, "N_tot", 1) * (qutrit_entropy(c2) + 1 - c2)


def _baseline(p):
    """Plain teleportation of an ensemble of entropy S: 2 S per signal."""
    return 2 * _get(p, "N", 1) * _get(p, "S")


def _a2(p):
    if "a2" in p:
        return p["a2"]
    return abs(complex(_get(p, "a"))) ** 2


FORMULAS: dict[str, tuple[Callable[[Mapping[str, Any]], float], str]] = {
    "teleport_two_stage": (_teleport, "2*N*log2(D)"),
    "teleport_d_dim": (_teleport, "2*N*log2(D)"),
    "teleport_step1": (_teleport_step1, "N*log2(D)"),
    "dilute_step1_only": (_teleport_step1, "N*log2(D)"),
    "dilute_baseline": (_teleport, "2*N*log2(D)"),
    "remote_prep_phase": (_phase, "N*S, S=H(|a|^2)"),
    "remote_prep_segmented": (_segmented, "N*(S+log2(segments))"),
    "remote_prep_two_block": (_two_block, "N*(1+S), S=1+H(2e^2)"),
    "remote_prep_blocks": (_blocks, "N*(log2(d)+S), d=lcm(|I_m|)"),
    "remote_prep_qutrit": (_qutrit, "N_tot*(S+1-c^2)"),
    "teleport_baseline": (_baseline, "2*N*S"),
}


def ensemble_entropy(name: str, params: Mapping[str, Any]) -> float:
    """Per-signal entropy S of the ensemble a protocol prepares or sends."""
    if name.startswith("teleport") or name.startswith("dilute"):
        return math.log2(_get(params, "D", 2))
    if name in ("remote_prep_phase", "remote_prep_segmented"):
        return phase_ensemble_entropy(_a2(params))
    if name == "remote_prep_two_block":
        return two_block_entropy(_get(params, "e2"))
    if name == "remote_prep_blocks":
        sizes = [len(b) for b in params["blocks"]] if "blocks" in params else _get(params, "sizes")
        live = [(w, r) for w, r in zip(_get(params, "weights"), sizes) if w > 0]
        return block_entropy(*zip(*live))
    if name == "remote_prep_qutrit":
        return qutrit_entropy(_get(params, "c2"))
    raise KeyError(f"no ensemble entropy for {name!r}")


def formula(name: str, params: Mapping[str, Any]) -> float:
    try:
        fn, _ = FORMULAS[name]
    except KeyError:
        raise KeyError(f"unknown formula {name!r}; known: {sorted(FORMULAS)}") from None
    return float(fn(params))


def formula_ref(name: str) -> str:
    return FORMULAS[name][1]
