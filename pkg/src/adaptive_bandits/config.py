"""Experiment configuration: YAML file -> validated :class:`ExperimentConfig`.

Validation collects every problem (with its line number) before failing.

Example::

    name: expert_advice
    horizon: 4096
    arms: 30
    seeds: {count: 5, base: 0}
    window: 50
    regret: exact
    environment:
      kind: piecewise
      change_points: [1024, 2048, 3072]
      boost: 0.5
    algorithms:
      - kind: stabl
      - kind: stabl_naive
      - kind: exp3
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .environments import validate_change_points

MAB_KINDS = ("stabl", "stabl_naive", "stabl_single_scale", "exp3")
BCO_KINDS = ("bco_three_query", "bco_two_query")
ALGORITHM_KINDS = MAB_KINDS + BCO_KINDS
ENV_KINDS = ("piecewise", "csv", "quadratic")
REGRET_MODES = ("exact", "geometric", "off")


class ConfigError(Exception):
    def __init__(self, problems: list[ConfigProblem]):
        self.problems = problems
        super().__init__("\n".join(str(p) for p in problems))


@dataclass(frozen=True)
class ConfigProblem:
    path: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"

    def to_dict(self):
        return {"path": self.path, "message": self.message, "line": self.line}


@dataclass
class AlgorithmSpec:
    kind: str
    label: str
    scales: list[int] | None = None
    expert_rate_scale: float = 1.0


@dataclass
class ExperimentConfig:
    name: str
    horizon: int
    environment: dict[str, Any]
    algorithms: list[AlgorithmSpec]
    seeds: list[int]
    arms: int | None = None
    dim: int | None = None
    window: int = 50
    output_dir: str = "results"
    regret: str = "geometric"
    work_budget: int = 10**10
    plot: bool = False
    base_dir: str = field(default=".", repr=False)

    @property
    def is_bco(self) -> bool:
        return self.environment["kind"] == "quadratic"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("base_dir")
        return d


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths (tuples of str keys / int indices) to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[tuple, int] = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                walk(v, key)
                lines[key] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return lines


class _Checker:
    def __init__(self, lines):
        self.lines = lines
        self.problems: list[ConfigProblem] = []

    def add(self, path: tuple, message: str):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        self.problems.append(ConfigProblem(".".join(str(p) for p in path) or "<root>", message, line))

    def int_field(self, data, path, key, required=False, minimum=None, default=None):
        if key not in data:
            if required:
                self.add(path + (key,), "required field is missing")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.add(path + (key,), f"expected an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.add(path + (key,), f"must be >= {minimum}, got {v}")
            return default
        return v

    def number_field(self, data, path, key, default=None, lo=None, hi=None):
        if key not in data:
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(path + (key,), f"expected a number, got {v!r}")
            return default
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            self.add(path + (key,), f"must lie in [{lo}, {hi}], got {v}")
            return default
        return float(v)


def _check_seeds(ck: _Checker, raw) -> list[int]:
    path = ("seeds",)
    if raw is None:
        ck.add(path, "required field is missing")
        return []
    if isinstance(raw, list):
        if not raw:
            ck.add(path, "seed list is empty")
        bad = [s for s in raw if isinstance(s, bool) or not isinstance(s, int) or s < 0]
        if bad:
            ck.add(path, f"seeds must be non-negative integers, got {bad!r}")
            return []
        if len(set(raw)) != len(raw):
            ck.add(path, "seeds must be distinct")
        return list(raw)
    if isinstance(raw, int) and not isinstance(raw, bool):
        if raw < 1:
            ck.add(path, "seed count must be >= 1")
            return []
        return list(range(raw))
    if isinstance(raw, dict):
        count = ck.int_field(raw, path, "count", required=True, minimum=1)
        base = ck.int_field(raw, path, "base", minimum=0, default=0)
        return list(range(base, base + count)) if count else []
    ck.add(path, "expected a list of seeds, a count, or {count, base}")
    return []


def _check_environment(ck: _Checker, env, horizon, arms, dim) -> dict[str, Any]:
    path = ("environment",)
    if not isinstance(env, dict):
        ck.add(path, "required mapping is missing")
        return {"kind": None}
    kind = env.get("kind")
    if kind not in ENV_KINDS:
        ck.add(path + ("kind",), f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")
        return {"kind": None}
    out: dict[str, Any] = {"kind": kind}
    if kind == "piecewise":
        if arms is None:
            ck.add(("arms",), "required for a piecewise environment")
        boost = ck.number_field(env, path, "boost", default=0.5, lo=0.0, hi=0.5)
        cps = env.get("change_points")
        segments = env.get("segments")
        if cps is None and segments is None:
            ck.add(path + ("change_points",), "give change_points or segments")
        elif cps is not None and segments is not None:
            ck.add(path, "give only one of change_points and segments")
        elif segments is not None:
            segments = ck.int_field(env, path, "segments", minimum=1)
            if segments and horizon:
                cps = [horizon * i // segments for i in range(1, segments)]
        if cps is not None:
            if not isinstance(cps, list):
                ck.add(path + ("change_points",), "expected a list of round indices")
                cps = None
            elif horizon:
                for msg in validate_change_points(cps, horizon):
                    ck.add(path + ("change_points",), f"{msg} (each change point must satisfy 1 < c < T)")
        out.update(change_points=cps or [], boost=boost)
    elif kind == "csv":
        p = env.get("path")
        if not isinstance(p, str):
            ck.add(path + ("path",), "required string field is missing")
        out["path"] = p
    else:
        if dim is None:
            ck.add(("dim",), "required for a quadratic environment")
        radius = ck.number_field(env, path, "radius", default=1.0, lo=1e-12)
        inner = ck.number_field(env, path, "inner_radius", default=radius, lo=1e-12)
        if radius and inner and inner > radius:
            ck.add(path + ("inner_radius",), "must not exceed radius")
        centers = env.get("centers", [env["center"]] if "center" in env else None)
        if not isinstance(centers, list) or not centers:
            ck.add(path + ("center",), "give center or a non-empty centers list")
            centers = []
        for i, c in enumerate(centers):
            if not (isinstance(c, list) and all(isinstance(v, (int, float)) for v in c)):
                ck.add(path + ("centers", i), "center must be a list of numbers")
            elif dim and len(c) != dim:
                ck.add(path + ("centers", i), f"center has {len(c)} coordinates, dim is {dim}")
        cps = env.get("change_points", [])
        if not isinstance(cps, list):
            ck.add(path + ("change_points",), "expected a list")
            cps = []
        elif cps and horizon:
            for msg in validate_change_points(cps, horizon):
                ck.add(path + ("change_points",), msg)
        out.update(
            radius=radius,
            inner_radius=inner,
            centers=centers,
            change_points=cps,
            lipschitz=ck.number_field(env, path, "lipschitz", lo=1e-12),
            loss_bound=ck.number_field(env, path, "loss_bound", lo=1e-12),
            noise_std=ck.number_field(env, path, "noise_std", default=0.0, lo=0.0),
            comparators=env.get("comparators"),
        )
    return out


def _check_algorithms(ck: _Checker, algos, env_kind, horizon) -> list[AlgorithmSpec]:
    path = ("algorithms",)
    if not isinstance(algos, list) or not algos:
        ck.add(path, "need a non-empty list of algorithms")
        return []
    specs, labels = [], set()
    for i, a in enumerate(algos):
        p = path + (i,)
        if isinstance(a, str):
            a = {"kind": a}
        if not isinstance(a, dict):
            ck.add(p, "expected a mapping with a 'kind'")
            continue
        kind = a.get("kind")
        if kind not in ALGORITHM_KINDS:
            ck.add(p + ("kind",), f"unknown algorithm kind {kind!r}; expected one of {ALGORITHM_KINDS}")
            continue
        if env_kind == "quadratic" and kind not in BCO_KINDS:
            ck.add(p + ("kind",), f"{kind} needs an arm-based environment")
        if env_kind in ("piecewise", "csv") and kind in BCO_KINDS:
            ck.add(p + ("kind",), f"{kind} needs a quadratic environment")
        scales = a.get("scales")
        if scales is not None:
            if kind == "exp3":
                ck.add(p + ("scales",), "exp3 has no interval scales")
            elif not isinstance(scales, list) or not scales or not all(
                isinstance(s, int) and not isinstance(s, bool) for s in scales
            ):
                ck.add(p + ("scales",), "expected a non-empty list of integers")
                scales = None
            elif horizon and any(not 1 <= s <= horizon for s in scales):
                ck.add(p + ("scales",), f"scales must lie in [1, {horizon}]")
            elif any(b <= a_ for a_, b in zip(scales, scales[1:])):
                ck.add(p + ("scales",), "scales must be strictly increasing")
            elif kind == "stabl_single_scale" and len(scales) != 1:
                ck.add(p + ("scales",), "stabl_single_scale takes exactly one scale")
        rate = ck.number_field(a, p, "expert_rate_scale", default=1.0, lo=1e-12)
        label = a.get("label", kind)
        if label in labels:
            ck.add(p + ("label",), f"duplicate algorithm label {label!r}")
        labels.add(label)
        specs.append(AlgorithmSpec(kind, str(label), scales, rate if rate is not None else 1.0))
    return specs


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    lines = _line_index(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError([ConfigProblem("<root>", f"YAML parse error: {exc}", mark.line + 1 if mark else None)])
    if not isinstance(data, dict):
        raise ConfigError([ConfigProblem("<root>", "config must be a mapping")])

    ck = _Checker(lines)
    name = data.get("name")
    if not isinstance(name, str) or not name:
        ck.add(("name",), "required string field is missing")
    horizon = ck.int_field(data, (), "horizon", required=True, minimum=2)
    arms = ck.int_field(data, (), "arms", minimum=1)
    dim = ck.int_field(data, (), "dim", minimum=1)
    seeds = _check_seeds(ck, data.get("seeds"))
    window = ck.int_field(data, (), "window", minimum=1, default=50)
    if horizon and window and window > horizon:
        ck.add(("window",), f"window {window} exceeds horizon {horizon}")
    regret = data.get("regret", "geometric")
    if regret not in REGRET_MODES:
        ck.add(("regret",), f"unknown regret mode {regret!r}; expected one of {REGRET_MODES}")
    budget = ck.int_field(data, (), "work_budget", minimum=1, default=10**10)
    out_dir = data.get("output_dir", "results")
    if not isinstance(out_dir, str):
        ck.add(("output_dir",), "expected a string")
    plot = data.get("plot", False)
    if not isinstance(plot, bool):
        ck.add(("plot",), "expected true or false")
    env = _check_environment(ck, data.get("environment"), horizon, arms, dim)
    algos = _check_algorithms(ck, data.get("algorithms"), env.get("kind"), horizon)
    known = {
        "name", "horizon", "arms", "dim", "seeds", "window", "regret", "work_budget",
        "output_dir", "plot", "environment", "algorithms",
    }
    for key in data:
        if key not in known:
            ck.add((key,), "unknown field")
    if ck.problems:
        raise ConfigError(ck.problems)
    return ExperimentConfig(
        name=name,
        horizon=horizon,
        environment=env,
        algorithms=algos,
        seeds=seeds,
        arms=arms,
        dim=dim,
        window=window,
        output_dir=out_dir,
        regret=regret,
        work_budget=budget,
        plot=plot,
        base_dir=base_dir,
    )


def validate_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([ConfigProblem("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    return parse_config(text, base_dir=str(path.parent))
