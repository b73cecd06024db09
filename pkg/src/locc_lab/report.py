"""Config-driven runs, parameter sweeps and cost tables."""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import qcore
from .formulas import FORMULAS, ensemble_entropy, formula, formula_ref
from .protocols import (
    ProtocolReport,
    dilute_baseline,
    dilute_step1_only,
    qutrit_signal,
    remote_prep_blocks,
    remote_prep_phase,
    remote_prep_qutrit,
    remote_prep_segmented,
    remote_prep_two_block,
    teleport_d_dim,
    teleport_two_stage,
)
from .typspace import BlockPartition

__all__ = [
    "ConfigError",
    "CostRow",
    "CostTable",
    "InvariantFailure",
    "RunConfig",
    "formula",
    "formula_ref",
    "load_config",
    "random_signals",
    "run",
    "sweep",
]

CSV_HEADER = ("param", "bits_exact", "bits_ceiling", "ebits", "fidelity")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key and line."""


class InvariantFailure(RuntimeError):
    """A finished run broke a ledger, locality or fidelity invariant."""


# -- config ------------------------------------------------------------------

PARAM_SPEC: dict[str, dict[str, tuple[bool, str]]] = {
    # name -> {param: (required, description)}
    "teleport_two_stage": {"amps": (False, "input amplitudes; random if absent"),
                           "dims": (False, "input dims, first must be 2"),
                           "stop_after_step1": (False, "bool")},
    "teleport_d_dim": {"D": (True, "dimension >= 2"), "amps": (False, "input amplitudes; random if absent")},
    "dilute_step1_only": {"a": (True, "amplitude"), "b": (True, "amplitude")},
    "dilute_baseline": {"a": (True, "amplitude"), "b": (True, "amplitude")},
    "remote_prep_phase": {"a": (True, "modulus"), "b": (True, "modulus"), "thetas": (False, "phase list"),
                          "N": (False, "signal count when thetas are generated"), "delta": (False, "typicality")},
    "remote_prep_segmented": {"a": (True, "modulus"), "b": (True, "modulus"), "thetas": (False, "phase list"),
                              "N": (False, "signal count"), "segments": (False, "arc count"),
                              "delta": (False, "typicality")},
    "remote_prep_two_block": {"e2": (True, "|a|^2 + |b|^2 = 2 e2"), "signals": (False, "N x 4 amplitudes"),
                              "N": (False, "signal count"), "delta": (False, "typicality")},
    "remote_prep_blocks": {"blocks": (True, "list of index lists"), "weights": (True, "block weights"),
                           "universe": (False, "signal dimension"), "signals": (False, "N x universe amplitudes"),
                           "N": (False, "signal count"), "delta": (False, "typicality")},
    "remote_prep_qutrit": {"c2": (True, "weight on |2>"), "n1": (True, "group size"),
                           "signals": (False, "N_tot x 3 amplitudes"), "N": (False, "number of groups"),
                           "delta": (False, "count window half-width")},
}


@dataclass
class RunConfig:
    protocol: str
    params: dict[str, Any]
    seed: int = 0
    evaluation: str = "exhaustive"
    runs: int = 1
    out: str | None = None
    max_amplitudes: int = qcore.MAX_AMPLITUDES
    source: str | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], source: str | None = None) -> "RunConfig":
        where = _Locator(source)
        if not isinstance(doc, Mapping):
            raise ConfigError(where("", "config must be a JSON object"))
        unknown = set(doc) - {"protocol", "params", "seed", "evaluation", "runs", "out", "max_amplitudes", "mode"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(where(key, f"unknown config key {key!r}"))
        if "protocol" not in doc:
            raise ConfigError(where("", "missing 'protocol'"))
        params = dict(doc.get("params", {}))
        mode = doc.get("mode")
        if mode is not None:
            if mode == "exact":
                if params.get("delta") is not None:
                    raise ConfigError(where("mode", "exact mode conflicts with params.delta"))
            elif mode != "typical":
                raise ConfigError(where("mode", f"mode must be 'exact' or 'typical', got {mode!r}"))
            elif params.get("delta") is None:
                raise ConfigError(where("mode", "typical mode needs params.delta"))
        cfg = cls(
            protocol=doc["protocol"],
            params=params,
            seed=doc.get("seed", 0),
            evaluation=doc.get("evaluation", "exhaustive"),
            runs=doc.get("runs", 1),
            out=doc.get("out"),
            max_amplitudes=doc.get("max_amplitudes", qcore.MAX_AMPLITUDES),
            source=source,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        where = _Locator(self.source)
        if self.protocol not in PARAM_SPEC:
            raise ConfigError(where("protocol", f"unknown protocol {self.protocol!r}; known: {sorted(PARAM_SPEC)}"))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(where("seed", "seed must be a nonnegative integer"))
        if self.evaluation not in ("exhaustive", "sampled"):
            raise ConfigError(where("evaluation", "evaluation must be 'exhaustive' or 'sampled'"))
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError(where("runs", "runs must be a positive integer"))
        spec = PARAM_SPEC[self.protocol]
        for key in self.params:
            if key not in spec:
                raise ConfigError(where(key, f"{self.protocol} takes no parameter {key!r}; expected {sorted(spec)}"))
        for key, (required, desc) in spec.items():
            if required and key not in self.params:
                raise ConfigError(where("params", f"{self.protocol} needs parameter {key!r} ({desc})"))
        try:
            _check_params(self.protocol, self.params)
        except (TypeError, ValueError) as exc:
            key = getattr(exc, "key", "params")
            raise ConfigError(where(key, str(exc))) from None

    def to_dict(self) -> dict[str, Any]:
        return {"protocol": self.protocol, "params": self.params, "seed": self.seed,
                "evaluation": self.evaluation, "runs": self.runs, "out": self.out,
                "max_amplitudes": self.max_amplitudes}


class _Locator:
    """Prefix error messages with ``file:line`` of the first mention of a key."""

    def __init__(self, source: str | None):
        self.source = source

    def __call__(self, key: str, message: str) -> str:
        if self.source is None:
            return message
        text = self.source
        line = 1
        if key:
            m = re.search(r'"%s"\s*:' % re.escape(key), text)
            if m:
                line = text.count("\n", 0, m.start()) + 1
        return f"line {line}: {message}"


class _ParamError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


def _number(params, key, lo=-math.inf, hi=math.inf):
    v = params.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _ParamError(key, f"{key} must be a number")
    if not lo <= v <= hi:
        raise _ParamError(key, f"{key} must lie in [{lo}, {hi}]")
    return float(v)


def _positive_int(params, key):
    v = params.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise _ParamError(key, f"{key} must be a positive integer")
    return v


def _check_params(name: str, p: Mapping[str, Any]) -> None:
    if p.get("delta") is not None:
        _number(p, "delta", 0.0)
    if name in ("remote_prep_phase", "remote_prep_segmented"):
        a, b = _number(p, "a", 0, 1), _number(p, "b", 0, 1)
        if abs(a * a + b * b - 1) > 1e-9:
            raise _ParamError("b", "need a^2 + b^2 = 1")
        if "thetas" not in p and "N" not in p:
            raise _ParamError("params", "give 'thetas' or 'N'")
        if "N" in p:
            _positive_int(p, "N")
        if "segments" in p:
            if _positive_int(p, "segments") < 2:
                raise _ParamError("segments", "segments must be at least 2")
    elif name == "remote_prep_two_block":
        _number(p, "e2", 0, 0.5)
        if p["e2"] <= 0:
            raise _ParamError("e2", "e2 must be positive")
        if "signals" not in p:
            _positive_int(p, "N")
    elif name == "remote_prep_blocks":
        if "signals" not in p:
            _positive_int(p, "N")
    elif name == "remote_prep_qutrit":
        c2 = _number(p, "c2", 0, 1)
        if not 0 < c2 < 1:
            raise _ParamError("c2", "c2 must lie strictly between 0 and 1")
        _positive_int(p, "n1")
        if "signals" not in p:
            _positive_int(p, "N")
    elif name == "teleport_d_dim":
        if _positive_int(p, "D") < 2:
            raise _ParamError("D", "D must be at least 2")


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    return RunConfig.from_dict(doc, source=text)


# -- inputs ------------------------------------------------------------------


def _complex_vec(values) -> np.ndarray:
    """Accept numbers or [re, im] pairs."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError("complex entries are written [re, im]")
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return np.asarray(out, dtype=complex)


def _random_in_blocks(rng, universe, blocks, weights) -> np.ndarray:
    v = np.zeros(universe, dtype=complex)
    for block, w in zip(blocks, weights):
        x = rng.normal(size=len(block)) + 1j * rng.normal(size=len(block))
        v[list(block)] = x * math.sqrt(w) / np.linalg.norm(x)
    return v


def random_signals(name: str, params: Mapping[str, Any], rng: np.random.Generator, count: int) -> np.ndarray:
    """Random admissible signals for a constrained protocol."""
    if name == "remote_prep_two_block":
        e2 = params["e2"]
        return np.array([_random_in_blocks(rng, 4, [(0, 1), (2, 3)], [2 * e2, 1 - 2 * e2]) for _ in range(count)])
    if name == "remote_prep_blocks":
        universe = params.get("universe") or max(i for b in params["blocks"] for i in b) + 1
        return np.array([_random_in_blocks(rng, universe, params["blocks"], params["weights"])
                         for _ in range(count)])
    if name == "remote_prep_qutrit":
        c2 = params["c2"]
        rows = []
        for _ in range(count):
            ab = _random_in_blocks(rng, 2, [(0, 1)], [1 - c2])
            rows.append(qutrit_signal(ab[0], ab[1], math.sqrt(c2), rng.uniform(0, 2 * np.pi)))
        return np.array(rows)
    raise KeyError(name)


def _thetas(params, rng):
    if "thetas" in params:
        return [float(t) for t in params["thetas"]]
    return rng.uniform(0, 2 * np.pi, size=params["N"]).tolist()


def _input_state(params, rng, dim):
    if "amps" in params:
        amps = _complex_vec(params["amps"])
        dims = tuple(params.get("dims", [dim] * max(1, round(math.log(amps.size, dim)))))
        return qcore.PureState.from_amplitudes(amps, dims)
    return qcore.random_state((dim,), rng)


def _dispatch(cfg: RunConfig) -> ProtocolReport:
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    common = {"evaluation": cfg.evaluation, "runs": cfg.runs, "seed": cfg.seed}
    big = {"max_amplitudes": cfg.max_amplitudes}
    name = cfg.protocol
    if name == "teleport_two_stage":
        return teleport_two_stage(_input_state(p, rng, 2), stop_after_step1=bool(p.get("stop_after_step1")),
                                  **common)
    if name == "teleport_d_dim":
        return teleport_d_dim(_input_state(p, rng, p["D"]), p["D"], **common)
    if name in ("dilute_step1_only", "dilute_baseline"):
        a, b = _complex_vec([p["a"], p["b"]])
        fn = dilute_step1_only if name == "dilute_step1_only" else dilute_baseline
        return fn(a, b, **common)
    if name == "remote_prep_phase":
        return remote_prep_phase(p["a"], p["b"], _thetas(p, rng), delta=p.get("delta"), **common, **big)
    if name == "remote_prep_segmented":
        return remote_prep_segmented(p["a"], p["b"], _thetas(p, rng), segments=p.get("segments", 2),
                                     delta=p.get("delta"), **common)
    if name == "remote_prep_two_block":
        sig = (np.array([_complex_vec(r) for r in p["signals"]]) if "signals" in p
               else random_signals(name, p, rng, p["N"]))
        return remote_prep_two_block(p["e2"], sig, delta=p.get("delta"), **common)
    if name == "remote_prep_blocks":
        universe = p.get("universe") or max(i for b in p["blocks"] for i in b) + 1
        partition = BlockPartition(universe, p["blocks"], p["weights"])
        sig = (np.array([_complex_vec(r) for r in p["signals"]]) if "signals" in p
               else random_signals(name, {**p, "universe": universe}, rng, p["N"]))
        return remote_prep_blocks(partition, sig, delta=p.get("delta"), **common, **big)
    if name == "remote_prep_qutrit":
        sig = (np.array([_complex_vec(r) for r in p["signals"]]) if "signals" in p
               else random_signals(name, p, rng, p["N"] * p["n1"]))
        return remote_prep_qutrit(p["c2"], sig, p["n1"], delta=p.get("delta"), **common, **big)
    raise ConfigError(f"unknown protocol {name!r}")


def check_invariants(report: ProtocolReport) -> None:
    if not -1e-9 <= report.fidelity_expected <= 1 + 1e-9:
        raise InvariantFailure(f"expected fidelity {report.fidelity_expected} out of range")
    if abs(sum(report.branch_probs) - 1) > 1e-8:
        raise InvariantFailure("branch probabilities do not sum to 1")
    for s in report.sessions:
        if not s.ledger_consistent():
            raise InvariantFailure("bit ledger disagrees with the transcript")
        if s.bits_b_to_a:
            raise InvariantFailure("a message travelled from Bob to Alice")


def run(config: RunConfig | Mapping[str, Any], *, seed: int | None = None, out: str | Path | None = None
        ) -> ProtocolReport:
    """Execute one configured protocol; write the JSON report if an output path is set."""
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
        cfg.validate()
    report = _dispatch(cfg)
    check_invariants(report)
    target = out if out is not None else cfg.out
    if target is not None:
        Path(target).write_text(report.to_json() + "\n")
    return report


# -- sweeps and cost tables ----------------------------------------------------


@dataclass
class CostRow:
    param: Any
    description: str
    entropy: float | None = None
    signals: int = 1
    formula_per_signal: float | None = None
    bits_exact: float | None = None
    bits_ceiling: int | None = None
    ebits: float | None = None
    fidelity: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def baseline(self) -> float | None:
        return None if self.entropy is None else 2 * self.entropy

    @property
    def measured(self) -> float | None:
        return None if self.bits_exact is None else self.bits_exact / self.signals

    @property
    def saving(self) -> float | None:
        if self.failed:
            return None
        return self.baseline - self.measured

    @property
    def formula_saving(self) -> float | None:
        if self.failed:
            return None
        return self.baseline - self.formula_per_signal


@dataclass
class CostTable:
    param: str
    rows: list[CostRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            if r.failed:
                w.writerow([r.param, "", "", "", ""])
            else:
                w.writerow([r.param, repr(r.bits_exact), r.bits_ceiling, repr(r.ebits), repr(r.fidelity)])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{self.param:>10} {'S':>8} {'2S':>8} {'formula':>8} {'measured':>9} {'saving':>8} {'f.saving':>8}"
        lines = [head]
        for r in self.rows:
            if r.failed:
                lines.append(f"{r.param!s:>10} FAILED: {r.error}")
                continue
            lines.append(f"{r.param!s:>10} {r.entropy:8.4f} {r.baseline:8.4f} {r.formula_per_signal:8.4f} "
                         f"{r.measured:9.4f} {r.saving:8.4f} {r.formula_saving:8.4f}")
        return "\n".join(lines)

    @property
    def failed(self) -> bool:
        return any(r.failed for r in self.rows)


def _signal_count(name: str, params: Mapping[str, Any]) -> int:
    if name == "remote_prep_qutrit":
        return params["N_tot"]
    return params.get("N", 1)


def _row(cfg: RunConfig, value) -> CostRow:
    desc = f"{cfg.protocol} {value}"
    try:
        report = run(cfg)
    except (ValueError, KeyError, TypeError, InvariantFailure, MemoryError, RuntimeError) as exc:
        return CostRow(value, desc, error=f"{type(exc).__name__}: {exc}")
    n = _signal_count(cfg.protocol, report.params)
    return CostRow(
        param=value,
        description=desc,
        entropy=ensemble_entropy(cfg.protocol, report.params),
        signals=n,
        formula_per_signal=report.formula_bits / n,
        bits_exact=report.bits_exact,
        bits_ceiling=report.bits_ceiling,
        ebits=report.ebits,
        fidelity=report.fidelity_expected,
    )


def _row_task(args):
    doc, value = args
    try:
        cfg = RunConfig.from_dict(doc)
    except ConfigError as exc:
        return CostRow(value, f"{doc.get('protocol')} {value}", error=str(exc))
    return _row(cfg, value)


def sweep(config: RunConfig | Mapping[str, Any], param: str, grid: Sequence[Any], *, jobs: int = 1,
          out: str | Path | None = None) -> CostTable:
    """Run the config once per grid value of ``param``; rows keep grid order."""
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    if not grid:
        raise ConfigError("grid is empty")
    base = cfg.to_dict()
    base.pop("out")
    docs = []
    for value in grid:
        doc = copy.deepcopy(base)
        if param == "seed":
            doc["seed"] = value
        else:
            doc["params"][param] = value
        docs.append((doc, value))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row_task, docs))
    else:
        rows = [_row_task(d) for d in docs]
    table = CostTable(param, rows)
    if out is not None:
        Path(out).write_text(table.to_csv())
    return table


def parse_grid(text: str) -> list[Any]:
    """Comma-separated values; each is parsed as JSON (numbers, null, lists)."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    if not values:
        raise ConfigError("grid is empty")
    return values


def known_formulas() -> list[str]:
    return sorted(FORMULAS)
