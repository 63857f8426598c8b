"""Flat ``key = value`` experiment configuration.

One setting per line; ``#`` starts a comment. Lists are comma separated.
Unknown keys are rejected so typos do not silently fall back to defaults.
Every key can also be overridden from the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("synthetic_benchmark", "frequency_analysis", "concentration_study", "real_benchmark", "interpolate_demo")


def _floats(s):
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _strs(s):
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    experiment: str = "synthetic_benchmark"
    seed: int = 0
    trials: int = 10
    out: str = "results"
    threads: int = 1
    workers: int = 1

    # kernel and graph
    n: int = 1000
    p: float = 0.8
    q: float = 0.2
    gammas: tuple = (0.002, 0.01)
    operators: tuple = ("adj", "norm")

    # node features: community means +-[mean, mean], covariance feature_var * I
    mean: float = 1.0
    feature_var: float = 0.25
    mask_features: bool = True

    # spectral embedding
    se_dims: tuple = (2, 6, 10, 20)
    kappa: int = 2
    se_hidden: int = 64
    se_lr: float = 0.02

    # GNN
    variants: tuple = ("linear", "nonlinear")
    gnn_layers: int = 2
    gnn_taps: int = 3
    gnn_hidden: int = 32
    gnn_lr: float = 0.02

    # shared training
    epochs: int = 200
    dropout: float = 0.5
    tol: float = 1e-5
    patience: int = 10

    # frequency analysis
    freq_operator: str = "norm"

    # concentration study
    ks: tuple = (1, 2)
    bound_c: float = 0.0
    chi: float = 0.05

    # real benchmark
    edges: str = ""
    features: str = ""
    labels: str = ""
    splits: str = ""
    drop_fractions: tuple = (0.0, 0.2, 0.7)
    replicas: int = 10
    real_se_dims: tuple = (150, 200)
    real_lr: float = 0.01
    real_mask_features: bool = False
    max_splits: int = 10

    # interpolation demo
    instances: int = 50
    n_min: int = 3
    n_max: int = 12
    edge_prob: float = 0.5
    separation: float = 0.05

    def validate(self, check_files: bool = True) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not self.gammas or min(self.gammas) <= 0:
            raise ConfigError("gammas must be positive")
        for op in self.operators:
            if op not in ("adj", "norm"):
                raise ConfigError(f"unknown operator {op!r}")
        if self.freq_operator not in ("adj", "norm"):
            raise ConfigError(f"unknown operator {self.freq_operator!r}")
        for v in self.variants:
            if v not in ("linear", "nonlinear"):
                raise ConfigError(f"unknown GNN variant {v!r}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.threads < 1 or self.workers < 1:
            raise ConfigError("threads and workers must be positive")
        if not 3 <= self.n_min <= self.n_max:
            raise ConfigError("need 3 <= n_min <= n_max")
        if any(not 0 <= f < 1 for f in self.drop_fractions):
            raise ConfigError("drop fractions must lie in [0, 1)")
        if check_files and self.experiment == "real_benchmark":
            for key in ("edges", "features", "labels", "splits"):
                path = getattr(self, key)
                if not path or not Path(path).is_file():
                    raise ConfigError(f"{key} file not found: {path!r}")
        return self

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out


_PARSERS = {}
for _f in fields(ExperimentConfig):
    default = _f.default
    if isinstance(default, tuple):
        first = default[0] if default else ""
        _PARSERS[_f.name] = _floats if isinstance(first, float) else _ints if isinstance(first, int) else _strs
    elif isinstance(default, bool):
        _PARSERS[_f.name] = _bool
    else:
        _PARSERS[_f.name] = type(default)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = val
    return values


def build_config(values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Typed config from raw values; ``overrides`` (e.g. CLI flags) win."""
    merged = dict(values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {}
    for key, raw in merged.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            kwargs[key] = _PARSERS[key](raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return ExperimentConfig(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = parse_config_text(path.read_text(), str(path))
    return build_config(values, overrides)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, val in cfg.as_dict().items():
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
