# empbase/config.py
"""
This module implements the run configuration.

A run is described by one JSON file with the sections `paths`, `dims`,
`training`, `ablations` and `decoding`, plus a `vars` section whose
values fill `{name}` placeholders in the paths. For example:

    {
        "name": "toy",
        "seed": 7,
        "vars": {"data_dir": "data/toy"},
        "paths": {"train": "{data_dir}/train.jsonl", ...},
        "dims": {"d": 32},
        "training": {"max_steps": 300},
        "ablations": {"enable_ccl": false}
    }

Every key is optional; unknown keys are rejected.
"""
from dataclasses import dataclass, field, fields, asdict, replace
import json
import logging

from .errors import ConfigError
from .utils import path_config, env_vars

logger = logging.getLogger(__name__)

NUM_EMOTIONS = 32
VAD_DIMS = 3


@dataclass
class PathsConfig:
    train: str = None
    valid: str = None
    test: str = None
    vad: str = None
    vectors: str = None
    inference: str = None
    vocab: str = None
    words: str = None
    checkpoint_dir: str = "checkpoints"
    run_db: str = "sqlite://"
    output: str = None


@dataclass
class DimsConfig:
    d: int = 300
    d_cs: int = 10
    d_cl: int = 64
    heads: int = 2
    trait_heads: int = 2
    state_heads: int = 1
    layers: int = 1
    ff_dim: int = 600
    dropout: float = 0.0
    max_context_len: int = 128
    max_target_len: int = 32
    # derived; stating them is allowed only with the derived values
    d_t: int = None
    d_s: int = None


@dataclass
class TrainingConfig:
    batch_size: int = 16
    tau: float = 0.07
    gamma: tuple = (1.0, 1.0, 1.0, 1.5)
    max_steps: int = 17250
    warmup: int = 8000
    lr_factor: float = 1.0
    betas: tuple = (0.9, 0.98)
    adam_eps: float = 1e-9
    eval_every: int = 500
    log_every: int = 50
    truncate: bool = True


@dataclass
class AblationConfig:
    enable_tee: bool = True
    enable_see: bool = True
    enable_egm: bool = True
    enable_ccl: bool = True


@dataclass
class DecodingConfig:
    max_len: int = 30


SECTIONS = {
    "paths": PathsConfig,
    "dims": DimsConfig,
    "training": TrainingConfig,
    "ablations": AblationConfig,
    "decoding": DecodingConfig,
}


def _section(cls, name, data):
    known = {item.name for item in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown keys in {name}: {sorted(unknown)}; "
            f"valid keys are {sorted(known)}"
        )
    values = dict(data)
    for key in ("gamma", "betas"):
        if key in values and values[key] is not None:
            values[key] = tuple(float(item) for item in values[key])
    return cls(**values)


@dataclass
class RunConfig:
    """
    This class holds everything a run needs besides the data itself.

    Default:
        RunConfig(name="run", seed=0, vars={}, paths=..., dims=...,
                  training=..., ablations=..., decoding=...)
    """

    name: str = "run"
    seed: int = 0
    vars: dict = field(default_factory=dict)
    paths: PathsConfig = field(default_factory=PathsConfig)
    dims: DimsConfig = field(default_factory=DimsConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    ablations: AblationConfig = field(default_factory=AblationConfig)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)

    @property
    def d_t(self):
        """Trait embedding width: VAD + IDF + compressed semantics."""
        return VAD_DIMS + 1 + self.dims.d_cs

    @property
    def d_s(self):
        """State embedding width: inclinations + IDF + semantics."""
        return NUM_EMOTIONS + 1 + self.dims.d_cs

    @property
    def d_v(self):
        """Width of the teacher/student concatenations."""
        width = self.dims.d
        if self.ablations.enable_tee:
            width += self.d_t
        if self.ablations.enable_see:
            width += self.d_s
        return width

    @classmethod
    def from_dict(cls, data):
        """from_dict

        Build a config from a parsed JSON object and validate it.

        Args:
            data: (dict : str) : the config, or its JSON text

        Returns:
            config (RunConfig)
        """
        if isinstance(data, str):
            data = json.loads(data)
        data = dict(data)
        top = {"name", "seed", "vars"} | set(SECTIONS)
        unknown = set(data) - top
        if unknown:
            raise ConfigError(
                f"unknown config keys: {sorted(unknown)}; "
                f"valid keys are {sorted(top)}"
            )
        kwargs = {
            key: data[key] for key in ("name", "seed", "vars") if key in data
        }
        for name, section_cls in SECTIONS.items():
            kwargs[name] = _section(section_cls, name, data.get(name) or {})
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fobj:
            try:
                data = json.load(fobj)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})")
        logger.info("loaded config %s from %s", data.get("name", "run"), path)
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def path(self, name):
        """path

        Resolve a path entry, filling placeholders from `vars`, the
        `EMPBASE_VARS` environment variable and the other path entries
        (so `{checkpoint_dir}` may be used inside `run_db`).

        Args:
            name: (str) : a key of the paths section

        Returns:
            path (str : None)
        """
        config_vars = dict(env_vars())
        config_vars.update(self.vars)
        raw = getattr(self.paths, name)
        if raw is None:
            return None
        for key in ("checkpoint_dir",):
            if key not in config_vars and key != name:
                config_vars[key] = path_config(
                    getattr(self.paths, key), config_vars
                )
        try:
            return path_config(raw, config_vars)
        except KeyError as exc:
            raise ConfigError(f"paths.{name}: no value for placeholder {exc}")

    def with_overrides(
        self,
        seed=None,
        max_steps=None,
        checkpoint_dir=None,
        disable=(),
    ):
        """with_overrides

        Return a copy with command line overrides applied.

        Args:
            seed: (int : None) : run seed
            max_steps: (int : None) : training steps
            checkpoint_dir: (str : None) : checkpoint directory
            disable: (iterable) : ablation names among tee, see, egm, ccl

        Returns:
            config (RunConfig)
        """
        config = replace(self)
        if seed is not None:
            config.seed = int(seed)
        if max_steps is not None:
            config.training = replace(config.training, max_steps=max_steps)
        if checkpoint_dir is not None:
            config.paths = replace(config.paths, checkpoint_dir=checkpoint_dir)
        if disable:
            flags = {f"enable_{name}": False for name in disable}
            config.ablations = replace(config.ablations, **flags)
        config.validate()
        return config

    def validate(self):
        """Raise ConfigError on any inconsistent value."""
        dims = self.dims
        for key in (
            "d",
            "d_cs",
            "d_cl",
            "heads",
            "trait_heads",
            "state_heads",
            "layers",
            "ff_dim",
            "max_context_len",
            "max_target_len",
        ):
            if getattr(dims, key) < 1:
                raise ConfigError(f"dims.{key} must be positive")
        if dims.d_t is not None and dims.d_t != self.d_t:
            raise ConfigError(
                f"dims.d_t is {dims.d_t} but 3 + 1 + d_cs = {self.d_t}"
            )
        if dims.d_s is not None and dims.d_s != self.d_s:
            raise ConfigError(
                f"dims.d_s is {dims.d_s} but 32 + 1 + d_cs = {self.d_s}"
            )
        for dim, heads, label in (
            (dims.d, dims.heads, "d"),
            (self.d_t, dims.trait_heads, "d_t"),
            (self.d_s, dims.state_heads, "d_s"),
        ):
            if dim % heads != 0:
                raise ConfigError(
                    f"{label}={dim} is not divisible by {heads} heads"
                )
        if not 0.0 <= dims.dropout < 1.0:
            raise ConfigError("dims.dropout must be in [0, 1)")
        if dims.max_context_len < 2:
            raise ConfigError("dims.max_context_len must leave room for [CLS]")
        if dims.max_target_len < 3:
            raise ConfigError(
                "dims.max_target_len must hold [SOS], a token and [EOS]"
            )

        training = self.training
        if len(training.gamma) != 4 or any(g < 0 for g in training.gamma):
            raise ConfigError("training.gamma must be four weights >= 0")
        if training.tau <= 0:
            raise ConfigError("training.tau must be positive")
        if training.batch_size < 1:
            raise ConfigError("training.batch_size must be at least 1")
        if training.max_steps < 0:
            raise ConfigError("training.max_steps must be >= 0")
        if training.warmup < 1:
            raise ConfigError("training.warmup must be at least 1")
        if training.eval_every < 1 or training.log_every < 1:
            raise ConfigError("training.eval_every/log_every must be >= 1")
        if self.decoding.max_len < 1:
            raise ConfigError("decoding.max_len must be at least 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be a single integer")
        return self
