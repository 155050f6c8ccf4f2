"""Experiment configuration (JSON) and its validation.

Schema, all keys optional except where noted::

    {
      "seed": 0,                        # master seed
      "dataset": {"source": "synth", "seed": 0, "train_per_class": 500,
                  "test_per_class": 100, "side": 28}
              | {"source": "idx", "train_images": path, "train_labels": path,
                 "test_images": path, "test_labels": path},
      "model": {"checkpoint": path}
             | {"hidden": [256, 128], "activation": "relu",
                "train": {"seed": 0, "epochs": 10, "batch_size": 64,
                          "learning_rate": 0.05, "momentum": 0.9}},
      "attacks": [{"method": "fast", "epsilons": [2, 4, 8, 16]},
                  {"method": "basic_iterative", "epsilon": 16, "alpha": 1,
                   "iterations": 20}],
      "transforms": "default" | [
          {"name": "blur", "kind": "gaussian_blur", "param": "sigma",
           "values": [0.5, 1, 2, 4]},
          {"name": "photo", "specs": [<TransformSpec dict>, ...]}],
      "protocol": "average" | "prefiltered",
      "n": 102,                         # null = whole pool (average only)
      "k": [1, 3],
      "prefilter_k": 3,                 # defaults to max(k)
      "pool_size": null                 # evaluation pool drawn from test split
    }

Relative paths resolve against the config file's directory.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

from .attacks import AttackConfig
from .classifier import TrainConfig
from .transforms import TransformSpec

__all__ = [
    "ConfigError",
    "Sweep",
    "ExperimentConfig",
    "DEFAULT_EPSILONS",
    "default_sweeps",
    "load_config",
    "parse_config",
    "config_hash",
]

DEFAULT_EPSILONS = (2, 4, 8, 16)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Sweep:
    """A named list of transforms sharing one plot (one sweep_<name>.csv)."""

    name: str
    specs: tuple

    def __post_init__(self):
        if not self.name or not self.name.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"sweep name must be alphanumeric (with _ or -), got {self.name!r}")
        if not self.specs:
            raise ConfigError(f"sweep {self.name!r} has no transforms")


def _values_sweep(name, kind, param, values, extra=None):
    specs = []
    for v in values:
        params = dict(extra or {})
        if isinstance(param, (list, tuple)):
            params.update(zip(param, v))
        else:
            params[param] = v
        specs.append(TransformSpec(kind, params))
    return Sweep(name, tuple(specs))


def default_sweeps():
    return (
        _values_sweep("brightness", "brightness", "delta", [-64, -32, -16, -8, 8, 16, 32, 64]),
        _values_sweep("contrast", "contrast", "factor", [0.5, 0.7, 0.9, 1.1, 1.4, 2.0]),
        _values_sweep("blur", "gaussian_blur", "sigma", [0.5, 1, 2, 4]),
        _values_sweep("noise", "gaussian_noise", "sigma", [2, 4, 8, 16, 32]),
        _values_sweep("jpeg", "jpeg", "quality", [90, 75, 50, 25, 10]),
        _values_sweep("photo", "photo_sim", ("warp_strength", "jitter"), [(0.02, 0.25), (0.05, 0.5)]),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: dict = field(default_factory=lambda: {"source": "synth"})
    model: dict = field(default_factory=dict)
    attacks: tuple = ()
    sweeps: tuple = ()
    protocol: str = "average"
    n: int = 102
    k: tuple = (1, 3)
    prefilter_k: int = None
    pool_size: int = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)
    base_dir: str = "."

    @property
    def train_config(self):
        t = dict(self.model.get("train", {}))
        t.setdefault("seed", self.seed)
        return TrainConfig(**t)

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def _parse_attacks(items):
    cells = []
    for item in items:
        item = dict(item)
        method = item.pop("method", None)
        eps_list = item.pop("epsilons", None)
        if eps_list is None:
            eps_list = [item.pop("epsilon")] if "epsilon" in item else list(DEFAULT_EPSILONS)
        alpha = item.pop("alpha", 1)
        iterations = item.pop("iterations", None)
        if item:
            raise ConfigError(f"unknown attack keys {sorted(item)}")
        for eps in eps_list:
            try:
                cells.append(AttackConfig(method, eps, alpha, iterations))
            except ValueError as exc:
                raise ConfigError(f"bad attack cell: {exc}") from None
    if not cells:
        raise ConfigError("attack grid is empty")
    keys = [(c.method, c.epsilon, c.alpha, c.iterations) for c in cells]
    if len(set(keys)) != len(keys):
        raise ConfigError("attack grid contains duplicate cells")
    return tuple(cells)


def _parse_sweeps(obj):
    if obj == "default":
        return default_sweeps()
    if not isinstance(obj, list):
        raise ConfigError("transforms must be 'default' or a list of sweeps")
    sweeps = []
    for item in obj:
        item = dict(item)
        name = item.get("name") or item.get("kind")
        if "specs" in item:
            sweeps.append(Sweep(name, tuple(TransformSpec.from_dict(s) for s in item["specs"])))
        else:
            try:
                sweeps.append(_values_sweep(name, item["kind"], item["param"], item["values"],
                                            item.get("fixed")))
            except KeyError as exc:
                raise ConfigError(f"sweep {name!r} is missing key {exc}") from None
    names = [s.name for s in sweeps]
    if len(set(names)) != len(names):
        raise ConfigError("sweep names must be unique")
    return tuple(sweeps)


def parse_config(obj, base_dir="."):
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    known = {"seed", "dataset", "model", "attacks", "transforms", "protocol", "n", "k",
             "prefilter_k", "pool_size", "description"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    attacks = obj.get("attacks")
    if attacks is None:
        attacks = [{"method": m} for m in ("fast", "basic_iterative", "least_likely")]
    protocol = obj.get("protocol", "average")
    if protocol not in ("average", "prefiltered"):
        raise ConfigError(f"protocol must be 'average' or 'prefiltered', got {protocol!r}")
    n = obj.get("n", 102)
    if n is not None and n < 1:
        raise ConfigError(f"n must be >= 1 or null, got {n}")
    k = tuple(sorted(set(obj.get("k", [1, 3]))))
    if not k or k[0] < 1:
        raise ConfigError(f"k values must be >= 1, got {k}")
    dataset = dict(obj.get("dataset", {"source": "synth"}))
    if dataset.get("source", "synth") not in ("synth", "idx"):
        raise ConfigError(f"dataset source must be 'synth' or 'idx', got {dataset.get('source')!r}")
    cfg = ExperimentConfig(
        seed=int(obj.get("seed", 0)),
        dataset=dataset,
        model=dict(obj.get("model", {})),
        attacks=_parse_attacks(attacks),
        sweeps=_parse_sweeps(obj.get("transforms", "default")),
        protocol=protocol,
        n=n,
        k=k,
        prefilter_k=obj.get("prefilter_k"),
        pool_size=obj.get("pool_size"),
        raw=obj,
        base_dir=base_dir,
    )
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        if dataset.get("source") == "idx" and not os.path.exists(cfg.resolve(dataset.get(key, ""))):
            raise ConfigError(f"dataset file not found: {dataset.get(key)}")
    ckpt = cfg.model.get("checkpoint")
    if ckpt is not None and not os.path.exists(cfg.resolve(ckpt)):
        raise ConfigError(f"checkpoint not found: {ckpt}")
    cfg.train_config  # validates the train section early
    return cfg


def load_config(path, seed=None):
    """Read and validate a config file; ``seed`` overrides the master seed."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if seed is not None:
        obj["seed"] = seed
    return parse_config(obj, os.path.dirname(os.path.abspath(path)))


def config_hash(cfg):
    canonical = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
