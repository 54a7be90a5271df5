"""Experiment configuration: a versioned YAML document with per-kind defaults.

A config names an experiment ``kind``; every field not given falls back to
the defaults of that kind. Unknown keys are rejected, and validation reports
every violation at once together with the line it came from.

Example::

    schema_version: 1
    kind: fig6
    seeds: [0, 1, 2]
    statistics:
      K: [1, 5, 9]
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import yaml

SCHEMA_VERSION = 1

KINDS = ("fig2", "fig5", "fig6", "fig7", "fig8", "appendixD", "bounds", "closedness", "custom")
ALGORITHMS = ("expectile", "naive-expectile", "huber", "naive-huber", "qdrl", "cdrl")
ENVIRONMENTS = ("nchain", "absorbing_chain", "control")
MODES = ("train", "dp")
CHECKS = ("cdrl_bound", "qdrl_bound")

# terminal reward laws that can be named instead of spelled out
REWARD_PRESETS = {
    "plus_one": 1.0,
    "uniform": {"kind": "uniform", "low": -1.0, "high": 1.0},
    "gaussian": {"kind": "gaussian", "mean": 0.0, "std": 1.0},
    "bimodal": {"kind": "bimodal"},
}

_BASE = {
    "schema_version": SCHEMA_VERSION,
    "kind": "custom",
    "seeds": None,
    "out": None,
    "mode": "train",
    "algorithms": ["expectile", "naive-expectile"],
    "env": {
        "name": "nchain",
        "lengths": [15],
        "gamma": 0.99,
        "p_forward": 0.95,
        "rewards": ["plus_one"],
        "n_atoms": 1000,
    },
    "statistics": {"K": [9], "kappa": 1.0, "taus": None, "supports": None},
    "alpha": 0.05,
    "steps": 30_000,
    "record_every": 3000,
    "control": False,
    "epsilon": 0.05,
    "mc_rollouts": 1000,
    "truth_seed": 0,
    "solver": {"n_atoms": None, "tol": 1e-10, "max_iters": 5, "dp_tol": 1e-10, "max_sweeps": 10_000},
    "checks": {
        "names": list(CHECKS),
        "cdrl_k": 11,
        "qdrl_k": 20,
        "gamma": 0.9,
        "r_max": 1.0,
        "max_states": 5,
    },
}

_KIND_DEFAULTS = {
    "fig2": {
        "mode": "dp",
        "seeds": [0],
        "env": {"name": "absorbing_chain", "lengths": [6], "gamma": 0.9, "rewards": ["bimodal"]},
    },
    "fig5": {"seeds": list(range(10))},
    "fig6": {"seeds": list(range(10)), "env": {"lengths": [5, 10, 15]}, "statistics": {"K": [1, 3, 5, 7, 9]}},
    "fig7": {
        "seeds": list(range(10)),
        "algorithms": ["huber", "naive-huber"],
        "statistics": {"K": [1, 3, 5, 7, 9]},
    },
    "fig8": {
        "mode": "dp",
        "seeds": [0],
        "algorithms": ["expectile", "cdrl", "qdrl"],
        "env": {"name": "control", "lengths": [5], "gamma": 1.0, "rewards": ["plus_one"]},
        "statistics": {"K": [None]},
    },
    "appendixD": {
        "seeds": list(range(10)),
        "env": {"lengths": [5, 10, 15], "rewards": ["plus_one", "uniform", "gaussian"]},
        "statistics": {"K": [1, 3, 5, 7, 9]},
    },
    "bounds": {"mode": "dp", "seeds": list(range(100))},
    "closedness": {"mode": "dp", "seeds": list(range(50))},
    "custom": {},
}

# statistic sets of the control comparison when K is left open
CONTROL_STATISTICS = {
    "expectile": {"taus": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]},
    "cdrl": {"supports": [0.0, 1.0, 2.0]},
    "qdrl": {"K": 5},
}


class ConfigError(ValueError):
    """Raised with every problem found; ``violations`` holds one message each."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n" + "\n".join(f"  - {v}" for v in self.violations))


@dataclass
class ExperimentConfig:
    kind: str
    seeds: list
    mode: str
    algorithms: list
    env: dict
    statistics: dict
    alpha: float
    steps: int
    record_every: int
    control: bool
    epsilon: float
    mc_rollouts: int
    truth_seed: int
    solver: dict
    checks: dict
    out: str | None = None
    schema_version: int = SCHEMA_VERSION
    source: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("source")
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return build_config(data)


def defaults_for(kind: str) -> dict:
    """Fully populated default document for ``kind``."""
    if kind not in KINDS:
        raise ConfigError([f"kind: unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}"])
    data = copy.deepcopy(_BASE)
    data["kind"] = kind
    _merge(data, copy.deepcopy(_KIND_DEFAULTS[kind]))
    return data


def _merge(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _line_index(node, path=(), out=None) -> dict:
    # path tuple -> 1-based line of the key (or item) in the source text
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            sub = path + (key_node.value,)
            out[sub] = key_node.start_mark.line + 1
            _line_index(value_node, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out[path + (i,)] = item.start_mark.line + 1
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config, filling defaults for its kind.

    ``schema_version``, ``kind`` and ``seeds`` are required. Parse errors
    carry the offending line and column.
    """
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark is not None else ""
        raise ConfigError([f"{where}{getattr(exc, 'problem', None) or exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    lines = _line_index(node) if node is not None else {}
    problems = []
    for key in ("schema_version", "kind", "seeds"):
        if key not in data:
            problems.append(f"{key}: required field missing")
    if problems:
        raise ConfigError(problems)
    return build_config(data, lines)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_config(data: dict, lines: dict | None = None) -> ExperimentConfig:
    """Validate a plain mapping over the defaults of its kind."""
    lines = lines or {}
    problems = []

    def where(path):
        line = lines.get(tuple(path))
        name = ".".join(str(p) for p in path)
        return f"{name} (line {line})" if line else name

    kind = data.get("kind", "custom")
    if kind not in KINDS:
        raise ConfigError([f"{where(['kind'])}: unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}"])
    merged = defaults_for(kind)
    _collect_unknown(data, merged, [], problems, where)
    if problems:
        raise ConfigError(problems)
    _merge(merged, copy.deepcopy(data))
    _validate(merged, problems, where)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**merged, source=data)


def _collect_unknown(data, template, path, problems, where):
    for key, value in data.items():
        if key not in template:
            problems.append(f"{where(path + [key])}: unknown key {key!r}")
        elif isinstance(template[key], dict) and key not in ("source",):
            if isinstance(value, dict):
                _collect_unknown(value, template[key], path + [key], problems, where)
            elif value is not None:
                problems.append(f"{where(path + [key])}: expected a mapping")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate(cfg: dict, problems: list, where) -> None:
    def need(cond, path, msg):
        if not cond:
            problems.append(f"{where(path)}: {msg}")
        return cond

    need(cfg["schema_version"] == SCHEMA_VERSION, ["schema_version"],
         f"unsupported schema version {cfg['schema_version']!r} (expected {SCHEMA_VERSION})")
    seeds = cfg["seeds"]
    if need(isinstance(seeds, list) and len(seeds) > 0, ["seeds"], "must be a nonempty list of integers"):
        for i, s in enumerate(seeds):
            need(_is_int(s) and s >= 0, ["seeds", i], f"seed {s!r} is not a nonnegative integer")
        need(len(set(map(str, seeds))) == len(seeds), ["seeds"], "seeds must be distinct")
    need(cfg["out"] is None or isinstance(cfg["out"], str), ["out"], "must be a path string")
    need(cfg["mode"] in MODES, ["mode"], f"must be one of {', '.join(MODES)}")
    algos = cfg["algorithms"]
    if need(isinstance(algos, list) and len(algos) > 0, ["algorithms"], "must be a nonempty list"):
        for i, a in enumerate(algos):
            need(a in ALGORITHMS, ["algorithms", i], f"unknown algorithm {a!r}; expected one of {', '.join(ALGORITHMS)}")
        if cfg["mode"] == "train":
            need("cdrl" not in algos and "qdrl" not in algos, ["algorithms"],
                 "stochastic training supports expectile and huber strategies and their naive variants")

    env = cfg["env"]
    need(env["name"] in ENVIRONMENTS, ["env", "name"], f"must be one of {', '.join(ENVIRONMENTS)}")
    lengths = env["lengths"]
    if need(isinstance(lengths, list) and len(lengths) > 0, ["env", "lengths"], "must be a nonempty list"):
        for i, n in enumerate(lengths):
            need(_is_int(n) and n >= 2, ["env", "lengths", i], f"length {n!r} must be an integer >= 2")
    gamma = env["gamma"]
    if need(_is_num(gamma), ["env", "gamma"], "must be a number"):
        if env["name"] == "control":
            need(gamma == 1.0, ["env", "gamma"], "the control problem is undiscounted (gamma = 1)")
        else:
            need(0 <= gamma < 1, ["env", "gamma"], "must lie in [0, 1)")
    need(_is_num(env["p_forward"]) and 0 < env["p_forward"] <= 1, ["env", "p_forward"], "must lie in (0, 1]")
    need(_is_int(env["n_atoms"]) and env["n_atoms"] >= 1, ["env", "n_atoms"], "must be a positive integer")
    rewards = env["rewards"]
    if need(isinstance(rewards, list) and len(rewards) > 0, ["env", "rewards"], "must be a nonempty list"):
        for i, r in enumerate(rewards):
            ok = (isinstance(r, str) and r in REWARD_PRESETS) or _is_num(r) or (isinstance(r, dict) and "kind" in r)
            need(ok, ["env", "rewards", i],
                 f"reward {r!r} must be a number, a mapping with 'kind', or one of {', '.join(REWARD_PRESETS)}")

    stats = cfg["statistics"]
    ks = stats["K"]
    if need(isinstance(ks, list) and len(ks) > 0, ["statistics", "K"], "must be a nonempty list"):
        for i, k in enumerate(ks):
            need(k is None or (_is_int(k) and k >= 1), ["statistics", "K", i], f"K {k!r} must be a positive integer")
        if None in ks:
            need(env["name"] == "control" or stats["taus"] is not None or stats["supports"] is not None,
                 ["statistics", "K"], "K may be left open only with explicit taus or supports")
    need(_is_num(stats["kappa"]) and stats["kappa"] > 0, ["statistics", "kappa"], "must be positive")
    taus = stats["taus"]
    if taus is not None and need(isinstance(taus, list) and taus, ["statistics", "taus"], "must be a nonempty list"):
        need(all(_is_num(t) and 0 < t < 1 for t in taus), ["statistics", "taus"], "levels must lie in (0, 1)")
    sup = stats["supports"]
    if sup is not None:
        ok = isinstance(sup, list) and len(sup) >= 2 and all(_is_num(z) for z in sup)
        ok = ok or (isinstance(sup, dict) and set(sup) <= {"low", "high"} and all(_is_num(v) for v in sup.values()))
        need(ok, ["statistics", "supports"], "must be a list of at least two numbers or a mapping with low and high")
    if "cdrl" in (algos or []) and env["name"] != "control":
        need(sup is not None, ["statistics", "supports"], "cdrl needs a support")

    need(_is_num(cfg["alpha"]) and cfg["alpha"] > 0, ["alpha"], "must be positive")
    need(_is_int(cfg["steps"]) and cfg["steps"] >= 0, ["steps"], "must be a nonnegative integer")
    need(_is_int(cfg["record_every"]) and cfg["record_every"] >= 0, ["record_every"], "must be a nonnegative integer")
    need(isinstance(cfg["control"], bool), ["control"], "must be true or false")
    need(_is_num(cfg["epsilon"]) and 0 <= cfg["epsilon"] <= 1, ["epsilon"], "must lie in [0, 1]")
    need(_is_int(cfg["mc_rollouts"]) and cfg["mc_rollouts"] >= 1, ["mc_rollouts"], "must be a positive integer")
    need(_is_int(cfg["truth_seed"]) and cfg["truth_seed"] >= 0, ["truth_seed"], "must be a nonnegative integer")

    solver = cfg["solver"]
    need(solver["n_atoms"] is None or (_is_int(solver["n_atoms"]) and solver["n_atoms"] >= 1),
         ["solver", "n_atoms"], "must be a positive integer or null")
    for key in ("tol", "dp_tol"):
        need(_is_num(solver[key]) and solver[key] > 0, ["solver", key], "must be positive")
    for key in ("max_iters", "max_sweeps"):
        need(_is_int(solver[key]) and solver[key] >= 1, ["solver", key], "must be a positive integer")

    checks = cfg["checks"]
    names = checks["names"]
    if need(isinstance(names, list) and names, ["checks", "names"], "must be a nonempty list"):
        for i, n in enumerate(names):
            need(n in CHECKS, ["checks", "names", i], f"unknown check {n!r}; expected one of {', '.join(CHECKS)}")
    need(_is_int(checks["cdrl_k"]) and checks["cdrl_k"] >= 2, ["checks", "cdrl_k"], "must be an integer >= 2")
    need(_is_int(checks["qdrl_k"]) and checks["qdrl_k"] >= 1, ["checks", "qdrl_k"], "must be a positive integer")
    need(_is_num(checks["gamma"]) and 0 <= checks["gamma"] < 1, ["checks", "gamma"], "must lie in [0, 1)")
    need(_is_num(checks["r_max"]) and checks["r_max"] > 0, ["checks", "r_max"], "must be positive")
    need(_is_int(checks["max_states"]) and checks["max_states"] >= 1, ["checks", "max_states"],
         "must be a positive integer")
