"""Flat ``key = value`` experiment configuration with a per-preset schema."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..agents.config import DqnConfig, EnsembleConfig, PqnConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key (and line, when known)."""


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int, float, bool, str, int_list, float_list, str_list
    default: object
    doc: str
    choices: tuple | None = None
    minimum: float | None = None


def _pqn_keys(prefix: str = "", **over) -> list[Key]:
    d = PqnConfig()
    keys = [
        Key("num_envs", "int", d.num_envs, "parallel environments B", minimum=1),
        Key("num_steps", "int", d.num_steps, "rollout length T per iteration", minimum=1),
        Key("total_timesteps", "int", d.total_timesteps, "environment step budget", minimum=1),
        Key("eps_start", "float", d.eps_start, "initial exploration rate", minimum=0),
        Key("eps_finish", "float", d.eps_finish, "final exploration rate", minimum=0),
        Key("eps_decay", "float", d.eps_decay, "fraction of the budget over which epsilon decays", minimum=0),
        Key("num_epochs", "int", d.num_epochs, "passes over each rollout", minimum=1),
        Key("num_minibatches", "int", d.num_minibatches, "minibatches per epoch (must divide B*T)", minimum=1),
        Key("gamma", "float", d.gamma, "discount factor", minimum=0),
        Key("lambda", "float", d.lam, "Q(lambda) mixing coefficient", minimum=0),
        Key("lr", "float", d.lr, "learning rate", minimum=0),
        Key("max_grad_norm", "float", d.max_grad_norm, "global gradient-norm clip", minimum=0),
        Key("lr_linear_decay", "bool", d.lr_linear_decay, "decay the learning rate linearly to zero"),
        Key("norm_type", "str", d.norm_type, "normalisation layer", ("layer_norm", "batch_norm", "none")),
        Key("norm_variant", "str", d.norm_variant, "affine (learned scale/shift) or paper (1/sqrt(k), no affine)",
            ("affine", "paper")),
        Key("hidden_size", "int", d.hidden_size, "hidden width", minimum=1),
        Key("num_layers", "int", d.num_layers, "hidden blocks", minimum=0),
        Key("l2_eta", "float", d.l2_eta, "head-weight l2 strength eta (0 disables)", minimum=0),
        Key("optimizer", "str", d.optimizer, "update rule", ("radam", "adam", "sgd")),
        Key("eval_every", "int", d.eval_every, "iterations between greedy evaluations", minimum=1),
        Key("eval_episodes", "int", d.eval_episodes, "greedy evaluation episodes", minimum=1),
    ]
    return [Key(prefix + k.name, k.kind, over.get(k.name, k.default), k.doc, k.choices, k.minimum)
            for k in keys]


def _dqn_keys(**over) -> list[Key]:
    d = DqnConfig()
    keys = [
        Key("num_envs", "int", d.num_envs, "parallel environments", minimum=1),
        Key("total_timesteps", "int", d.total_timesteps, "environment step budget", minimum=1),
        Key("buffer_size", "int", d.buffer_size, "replay capacity", minimum=1),
        Key("batch_size", "int", d.batch_size, "replay minibatch size", minimum=1),
        Key("learning_starts", "int", d.learning_starts, "steps before the first update", minimum=0),
        Key("train_frequency", "int", d.train_frequency, "environment steps per update", minimum=1),
        Key("target_update_period", "int", d.target_update_period, "steps between target copies", minimum=1),
        Key("eps_start", "float", d.eps_start, "initial exploration rate", minimum=0),
        Key("eps_finish", "float", d.eps_finish, "final exploration rate", minimum=0),
        Key("eps_decay", "float", d.eps_decay, "fraction of the budget over which epsilon decays", minimum=0),
        Key("gamma", "float", d.gamma, "discount factor", minimum=0),
        Key("lr", "float", d.lr, "learning rate", minimum=0),
        Key("max_grad_norm", "float", d.max_grad_norm, "global gradient-norm clip", minimum=0),
        Key("norm_type", "str", d.norm_type, "normalisation layer", ("layer_norm", "batch_norm", "none")),
        Key("hidden_size", "int", d.hidden_size, "hidden width", minimum=1),
        Key("num_layers", "int", d.num_layers, "hidden blocks", minimum=0),
        Key("optimizer", "str", d.optimizer, "update rule", ("radam", "adam", "sgd")),
        Key("eval_every", "int", d.eval_every, "environment steps between greedy evaluations", minimum=1),
        Key("eval_episodes", "int", d.eval_episodes, "greedy evaluation episodes", minimum=1),
    ]
    return [Key("dqn_" + k.name, k.kind, over.get(k.name, k.default), k.doc, k.choices, k.minimum) for k in keys]


def _ensemble_keys(**over) -> list[Key]:
    d = EnsembleConfig()
    keys = [
        Key("ensemble_size", "int", d.ensemble_size, "number of Q-networks", minimum=1),
        Key("num_envs", "int", d.num_envs, "parallel environments", minimum=1),
        Key("max_episodes", "int", d.max_episodes, "episode budget", minimum=1),
        Key("buffer_size", "int", d.buffer_size, "shared replay capacity", minimum=1),
        Key("batch_size", "int", d.batch_size, "replay minibatch size", minimum=1),
        Key("learning_starts", "int", d.learning_starts, "transitions before the first update", minimum=0),
        Key("gamma", "float", d.gamma, "discount factor", minimum=0),
        Key("lr", "float", d.lr, "learning rate", minimum=0),
        Key("max_grad_norm", "float", d.max_grad_norm, "per-member gradient-norm clip", minimum=0),
        Key("epsilon", "float", d.epsilon, "exploration rate of the acting member", minimum=0),
        Key("norm_type", "str", d.norm_type, "middle-layer normalisation", ("layer_norm", "batch_norm", "none")),
        Key("norm_variant", "str", d.norm_variant, "affine or paper normalisation", ("affine", "paper")),
        Key("hidden_size", "int", d.hidden_size, "hidden width", minimum=1),
        Key("num_layers", "int", d.num_layers, "hidden blocks", minimum=0),
        Key("optimizer", "str", d.optimizer, "update rule", ("radam", "adam", "sgd")),
        Key("prior_scale", "float", d.prior_scale, "weight of each member's fixed random prior network",
            minimum=0),
        Key("solve_window", "int", d.solve_window, "trailing episodes in the solved test", minimum=1),
        Key("solve_threshold", "float", d.solve_threshold, "trailing mean return that counts as solved"),
        Key("stop_when_solved", "bool", d.stop_when_solved, "end a run once solved"),
    ]
    return [Key(k.name, k.kind, over.get(k.name, k.default), k.doc, k.choices, k.minimum) for k in keys]


SEEDS_KEY = Key("seeds", "int_list", list(range(10)), "seed list (the --seeds flag overrides)")


def _schema_cartpole(env="cartpole", threshold=450.0):
    return [
        Key("env", "str", env, "environment", ("cartpole", "acrobot")),
        SEEDS_KEY,
        Key("threshold", "float", threshold, "mean greedy return that counts as solved"),
        Key("min_solved_fraction", "float", 0.8, "fraction of seeds that must reach the threshold", minimum=0),
        Key("run_dqn", "bool", False, "also train the replay/target-network baseline"),
        Key("min_time_ratio", "float", 2.0, "required DQN/PQN wall-clock ratio to the threshold", minimum=0),
    ] + _pqn_keys(**CARTPOLE_PQN) + _dqn_keys(**CARTPOLE_DQN)


CARTPOLE_PQN = dict(num_envs=128, num_steps=16, num_minibatches=16, num_epochs=4, lr=2.5e-4)
CARTPOLE_DQN = dict(total_timesteps=500_000)


def _schema_ablate_lambda():
    return [Key("env", "str", "cartpole", "environment", ("cartpole", "acrobot")), SEEDS_KEY,
            Key("threshold", "float", 450.0, "mean greedy return that counts as solved"),
            Key("lambdas", "float_list", [0.65, 0.0], "lambda values; the first must reach the threshold soonest"),
            ] + [k for k in _pqn_keys(**CARTPOLE_PQN) if k.name != "lambda"]


def _schema_ablate_norm():
    return [Key("env", "str", "cartpole", "environment", ("cartpole", "acrobot")), SEEDS_KEY,
            Key("threshold", "float", 450.0, "mean greedy return that counts as solved"),
            Key("norm_types", "str_list", ["layer_norm", "batch_norm", "none"], "normalisations to compare"),
            Key("min_solved_fraction", "float", 0.8, "fraction of seeds the first entry must solve", minimum=0),
            ] + [k for k in _pqn_keys(**CARTPOLE_PQN) if k.name != "norm_type"]


def _schema_deepsea():
    return [SEEDS_KEY,
            Key("depths", "int_list", [20, 30], "grid sizes N"),
            Key("observation", "str", "grid", "one-hot grid cell or row/column one-hots", ("grid", "coords")),
            Key("expect", "str", "solve", "solve: pass when enough seeds solve; fail: pass when enough fail",
                ("solve", "fail")),
            Key("required_fraction", "float", 0.8, "fraction of seeds that must meet the expectation", minimum=0),
            Key("log_every", "int", 500, "episodes between metric records", minimum=1),
            ] + _ensemble_keys()


def _schema_baird():
    return [SEEDS_KEY,
            Key("variant", "str", "layernorm", "linear features or the LayerNorm network", ("linear", "layernorm")),
            Key("gamma", "float", 0.99, "discount factor", minimum=0),
            Key("lr", "float", 0.0, "step size (0 selects 0.05 for linear, 0.01 for layernorm)", minimum=0),
            Key("sweeps", "int", 10_000, "expected-update sweeps", minimum=1),
            Key("record_every", "int", 100, "sweeps between records", minimum=1),
            Key("width", "int", 16, "LayerNorm width k", minimum=2),
            Key("l2_eta", "float", 1.0, "head-weight l2 strength (layernorm variant)", minimum=0),
            Key("growth_threshold", "float", 100.0, "parameter-norm growth that counts as divergence", minimum=1),
            Key("bound_factor", "float", 10.0, "TD-error norm must stay below this multiple of its start",
                minimum=1)]


def _schema_jacobian():
    return [Key("seeds", "int_list", [0], "seed list (the --seeds flag overrides)"),
            Key("variant", "str", "layernorm", "linear features or the LayerNorm network", ("linear", "layernorm")),
            Key("gamma", "float", 0.99, "discount factor", minimum=0),
            Key("width", "int", 256, "LayerNorm width k", minimum=2),
            Key("l2_eta", "float", 1.0, "head-weight l2 strength (layernorm variant)", minimum=0),
            Key("points", "int", 20, "random parameter points per seed", minimum=1),
            Key("fd_step", "float", 1e-5, "finite-difference step for curvature", minimum=0)]


def _schema_thm1():
    return [Key("seeds", "int_list", [0], "seed list (the --seeds flag overrides)"),
            Key("states", "int", 5, "MDP states", minimum=1), Key("actions", "int", 2, "MDP actions", minimum=1),
            Key("feature_dim", "int", 4, "feature width of f", minimum=1),
            Key("gamma", "float", 0.99, "discount factor", minimum=0),
            Key("batch_sizes", "int_list", [8, 64, 512, 4096], "batch sizes N"),
            Key("trials", "int", 100, "batches per N", minimum=2)]


def _schema_thm2():
    return [Key("seeds", "int_list", [0], "seed list (the --seeds flag overrides)"),
            Key("widths", "int_list", [16, 64, 256, 1024], "LayerNorm widths k"),
            Key("trials", "int", 1000, "draws per width", minimum=1),
            Key("gamma", "float", 0.99, "discount factor", minimum=0),
            Key("input_dim", "int", 8, "input dimension d", minimum=1),
            Key("exponent_low", "float", -1.0, "lower end of the accepted decay exponent"),
            Key("exponent_high", "float", -0.25, "upper end of the accepted decay exponent")]


def _schema_thm3():
    return _schema_thm2() + [Key("linear_tolerance", "float", 1e-6, "bound on the linear-model control")]


SCHEMAS = {
    "cartpole": _schema_cartpole,
    "acrobot": lambda: _schema_cartpole("acrobot", -100.0),
    "ablate-lambda": _schema_ablate_lambda,
    "ablate-norm": _schema_ablate_norm,
    "deepsea": _schema_deepsea,
    "baird": _schema_baird,
    "jacobian": _schema_jacobian,
    "probe-thm1": _schema_thm1,
    "probe-thm2": _schema_thm2,
    "probe-thm3": _schema_thm3,
}


def schema(preset: str) -> list[Key]:
    if preset not in SCHEMAS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(SCHEMAS)}")
    return SCHEMAS[preset]()


@dataclass
class ExperimentConfig:
    preset: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seeds(self) -> list[int]:
        return list(self.values["seeds"])

    def pqn_config(self, **over) -> PqnConfig:
        kw = {k.name: self.values[k.name] for k in _pqn_keys() if k.name in self.values}
        kw["lam"] = kw.pop("lambda", PqnConfig.lam)
        kw.update(over)
        return PqnConfig(**kw)

    def dqn_config(self) -> DqnConfig:
        return DqnConfig(**{k.name[4:]: self.values[k.name] for k in _dqn_keys()})

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(**{k.name: self.values[k.name] for k in _ensemble_keys()})

    def echo(self) -> str:
        """Every effective value, in schema order, in the same format :func:`parse_config` reads."""
        lines = [f"preset = {self.preset}"]
        for key in schema(self.preset):
            lines.append(f"{key.name} = {format_value(self.values[key.name], key.kind)}")
        return "\n".join(lines) + "\n"


def format_value(value, kind: str) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    if kind == "float_list":
        return ",".join(repr(float(v)) for v in value)
    if kind.endswith("_list"):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_value(text: str, key: Key):
    text = text.strip()
    try:
        if key.kind == "int":
            return int(text)
        if key.kind == "float":
            return float(text)
        if key.kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if key.kind == "str":
            if not text:
                raise ValueError("empty")
            return text
        if key.name == "seeds":
            return parse_seeds(text)
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        if key.kind == "int_list":
            return [int(p) for p in parts]
        if key.kind == "float_list":
            return [float(p) for p in parts]
        return parts
    except ConfigError as err:
        raise ConfigError(f"key {key.name!r}: {err}") from None
    except ValueError:
        raise ConfigError(f"key {key.name!r}: cannot read {text!r} as {key.kind}") from None


def parse_seeds(text: str) -> list[int]:
    """``"0,1,2"`` or ``"0-9"`` (inclusive ranges may be mixed with single values)."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot read seed list {text!r}") from None
    if not out:
        raise ConfigError("seed list is empty")
    if any(s < 0 for s in out):
        raise ConfigError("seeds must be non-negative")
    return out


def parse_text(text: str, preset: str | None = None, source: str = "<config>") -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` comments, blank lines ignored) and validate them."""
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        k, v = body.split("=", 1)
        k = k.strip()
        if k != k.lower() or not k:
            raise ConfigError(f"{source}:{lineno}: key {k!r} must be lower-case")
        if k in raw:
            raise ConfigError(f"{source}:{lineno}: key {k!r} repeats line {raw[k][0]}")
        raw[k] = (lineno, v.strip())
    if "preset" in raw:
        named = raw.pop("preset")[1]
        if preset is not None and named != preset:
            raise ConfigError(f"{source}: file is for preset {named!r}, not {preset!r}")
        preset = named
    if preset is None:
        raise ConfigError(f"{source}: no preset given")
    keys = {k.name: k for k in schema(preset)}
    values = {name: (list(k.default) if isinstance(k.default, list) else k.default) for name, k in keys.items()}
    for name, (lineno, text_value) in raw.items():
        if name not in keys:
            raise ConfigError(f"{source}:{lineno}: unknown key {name!r} for preset {preset!r}")
        try:
            value = parse_value(text_value, keys[name])
            _check(value, keys[name])
        except ConfigError as err:
            raise ConfigError(f"{source}:{lineno}: {err}") from None
        values[name] = value
    cfg = ExperimentConfig(preset, values)
    validate(cfg, source)
    return cfg


def _check(value, key: Key):
    items = value if isinstance(value, list) else [value]
    for v in items:
        if key.choices is not None and v not in key.choices:
            raise ConfigError(f"key {key.name!r}: {v!r} is not one of {', '.join(key.choices)}")
        if key.minimum is not None and v < key.minimum:
            raise ConfigError(f"key {key.name!r}: {v!r} is below the minimum {key.minimum}")


def validate(cfg: ExperimentConfig, source: str = "<config>") -> None:
    """Cross-key constraints, checked by building the agent configs."""
    keys = {k.name for k in schema(cfg.preset)}
    try:
        if "num_minibatches" in keys:
            over = {}
            if "lambda" not in keys:
                over["lam"] = cfg["lambdas"][0]
            if "norm_type" not in keys:
                over["norm_type"] = cfg["norm_types"][0]
            cfg.pqn_config(**over)
        if "dqn_buffer_size" in keys:
            cfg.dqn_config()
        if "ensemble_size" in keys:
            cfg.ensemble_config()
    except ValueError as err:
        raise ConfigError(f"{source}: {err}") from None
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError(f"{source}: key 'seeds': seeds must be non-negative")
    for name in ("widths", "batch_sizes", "depths"):
        if name in keys and min(cfg[name]) < 2:
            raise ConfigError(f"{source}: key {name!r}: entries must be at least 2")


def parse_config(path: str | Path | None, preset: str | None = None) -> ExperimentConfig:
    """Load a config file (or only the preset defaults when ``path`` is None)."""
    if path is None:
        return parse_text("", preset)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return parse_text(path.read_text(), preset, str(path))


def schema_doc(preset: str) -> str:
    lines = [f"# preset {preset}"]
    for k in schema(preset):
        extra = f" (one of: {', '.join(k.choices)})" if k.choices else ""
        lines.append(f"{k.name} = {format_value(k.default, k.kind)}    # {k.kind}: {k.doc}{extra}")
    return "\n".join(lines) + "\n"
