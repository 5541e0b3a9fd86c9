"""Run configuration with schema checking and layered overrides.

Sources, highest priority first:
1. CLI flags (``--seed``, ``--out``, ``--workers``, ``--set section.key=value``)
2. Environment variables (``CORRTRACK_*``)
3. ``.env`` file at the project root
4. YAML configuration file (``config/corrtrack.yaml`` unless ``--config`` is given)
5. Dataclass defaults

Every section and key must appear in the published schema
(``config/schema.yaml``); unknown keys and type mismatches are errors.
"""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import yaml
from dotenv import load_dotenv

from corrtrack.core.exceptions import ConfigurationError, CorrTrackError
from corrtrack.evaluation.metrics import EvalConfig
from corrtrack.model.network import ArchConfig
from corrtrack.tracking.outputs import TrackingConfig
from corrtrack.training.losses import LossConfig
from corrtrack.training.trainer import OptimConfig, SamplingConfig
from corrtrack.utils.logging import DEFAULT_FORMAT

LOG = logging.getLogger(__name__)

ENV_OVERRIDES: dict[str, tuple[str, str]] = {
    "CORRTRACK_LOG_LEVEL": ("logging", "level"),
    "CORRTRACK_SEED": ("runtime", "seed"),
    "CORRTRACK_WORKERS": ("runtime", "workers"),
    "CORRTRACK_OUTPUT_DIR": ("paths", "output_dir"),
}


@dataclass(frozen=True)
class PathsConfig:
    """Filesystem locations.

    Attributes:
        output_dir: Root of every command's output
        dataset_dir: Generated dataset, defaults to ``<output_dir>/dataset``
        checkpoint: Checkpoint read by track and bench, defaults to the train output
        sources_file: Synthetic source mix
    """

    output_dir: Path = Path("output")
    dataset_dir: Path | None = None
    checkpoint: Path | None = None
    sources_file: Path = Path("config/sources.yaml")

    def resolve_against(self, root: Path) -> PathsConfig:
        def absolute(path: Path | None) -> Path | None:
            if path is None:
                return None
            path = path.expanduser()
            return path if path.is_absolute() else root / path

        output_dir = absolute(self.output_dir)
        return PathsConfig(
            output_dir=output_dir,
            dataset_dir=absolute(self.dataset_dir) or output_dir / "dataset",
            checkpoint=absolute(self.checkpoint) or output_dir / "train" / "model.ckpt",
            sources_file=absolute(self.sources_file),
        )


@dataclass(frozen=True)
class LoggingConfig:
    """Attributes:
        level: Root log level
        format: Record format
        to_file: Also write ``corrtrack.log`` into the command output directory
    """

    level: str = "INFO"
    format: str = DEFAULT_FORMAT
    to_file: bool = True

    def __post_init__(self) -> None:
        if self.level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"Unknown log level {self.level!r}")


@dataclass(frozen=True)
class ScenesConfig:
    """Dataset selection.

    Attributes:
        sources: Source names to use, empty for every source in the sources file
        num_scenes: Overrides every source's scene count when set
        verify: Regenerate each scene after writing or before reading and compare bitwise
    """

    sources: list[str] = field(default_factory=list)
    num_scenes: int | None = None
    verify: bool = False

    def __post_init__(self) -> None:
        if self.num_scenes is not None and self.num_scenes < 1:
            raise ConfigurationError("scenes.num_scenes must be >= 1")


@dataclass(frozen=True)
class RuntimeConfig:
    """Attributes:
        seed: Run seed every random stream is derived from
        workers: Thread count for fan-out (scene generation, tracking, ablation cells)
        reporters: Enabled reporter names
    """

    seed: int = 0
    workers: int = 1
    reporters: list[str] = field(default_factory=lambda: ["console", "summary"])

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigurationError("runtime.seed must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("runtime.workers must be >= 1")


SECTIONS: dict[str, type] = {
    "paths": PathsConfig,
    "logging": LoggingConfig,
    "scenes": ScenesConfig,
    "sampling": SamplingConfig,
    "loss": LossConfig,
    "model": ArchConfig,
    "optim": OptimConfig,
    "tracking": TrackingConfig,
    "eval": EvalConfig,
    "runtime": RuntimeConfig,
}


@dataclass
class RunConfig:
    """Complete configuration of one CLI invocation.

    Attributes:
        project_root: Root directory of the project
        config_dir: Directory containing configuration files
        paths: Filesystem locations (absolute after loading)
        logging: Log level, format and file switch
        scenes: Dataset selection
        sampling: Pair and match-set sampling
        loss: Loss weights and hyperparameters
        model: Network shape
        optim: Optimizer and loop settings
        tracking: Tracking run settings
        eval: Evaluation settings
        runtime: Seed, workers and reporters
    """

    project_root: Path
    config_dir: Path
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    scenes: ScenesConfig = field(default_factory=ScenesConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ArchConfig = field(default_factory=ArchConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    @classmethod
    def load(
        cls,
        config_path: Path | None = None,
        overrides: Sequence[str] = (),
        cli: dict[str, Any] | None = None,
        project_root: Path | None = None,
    ) -> RunConfig:
        """Load configuration from every source.

        Args:
            config_path: YAML file, defaults to ``config/corrtrack.yaml``
            overrides: ``section.key=value`` assignments; values are parsed as YAML
            cli: Dotted keys set by dedicated CLI flags; None values are ignored
            project_root: Project root directory. If None, auto-detect.

        Raises:
            ConfigurationError: On unknown keys, type mismatches or invalid values
        """
        # Reason: Auto-detect project root if not provided
        if project_root is None:
            project_root = Path(__file__).parent.parent.parent

        env_file = project_root / ".env"
        if env_file.exists():
            load_dotenv(env_file)

        config_dir = project_root / "config"
        schema = load_schema(config_dir / "schema.yaml")

        if config_path is not None:
            config_path = Path(config_path)
            if not config_path.exists():
                raise ConfigurationError(f"Config file not found: {config_path}")
        else:
            config_path = config_dir / "corrtrack.yaml"
        data = _sectioned(load_yaml_config(config_path), schema, str(config_path))
        _resolve_paths(data, schema, project_root)

        cwd = Path.cwd()
        layered: dict[tuple[str, str], Any] = {}
        for env_name, dotted in ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw is not None and raw != "":
                layered[dotted] = yaml.safe_load(raw)
        for text in overrides:
            section, key, value = parse_assignment(text)
            layered[(section, key)] = value
        for dotted, value in (cli or {}).items():
            if value is not None:
                section, _, key = dotted.partition(".")
                layered[(section, key)] = value

        for (section, key), value in layered.items():
            _check_key(schema, section, key)
            if _base_type(schema[section][key]) == "path" and value is not None:
                value = Path(value).expanduser()
                value = value if value.is_absolute() else cwd / value
            data.setdefault(section, {})[key] = value

        config = cls.from_dict(data, schema, project_root)
        LOG.debug("Loaded configuration from %s", config_path)
        return config

    @classmethod
    def from_dict(
        cls,
        data: dict[str, dict[str, Any]],
        schema: dict[str, dict[str, str]] | None = None,
        project_root: Path | None = None,
    ) -> RunConfig:
        """Build a config from sectioned values checked against the schema."""
        if project_root is None:
            project_root = Path(__file__).parent.parent.parent
        if schema is None:
            schema = load_schema(project_root / "config" / "schema.yaml")

        sections: dict[str, Any] = {}
        for name, section_cls in SECTIONS.items():
            values = {}
            for key, value in data.get(name, {}).items():
                _check_key(schema, name, key)
                values[key] = coerce(value, schema[name][key], f"{name}.{key}")
            try:
                sections[name] = section_cls(**values)
            except (CorrTrackError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"Invalid [{name}] section: {exc}") from exc

        sections["paths"] = sections["paths"].resolve_against(project_root)
        return cls(project_root=project_root, config_dir=project_root / "config", **sections)

    @property
    def output_dir(self) -> Path:
        return self.paths.output_dir

    @property
    def dataset_dir(self) -> Path:
        return self.paths.dataset_dir

    def to_dict(self) -> dict[str, Any]:
        """Plain structure for run summaries and sidecars."""
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if is_dataclass(value):
        return _plain(asdict(value))
    return value


def _int(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(value)
    return value


def _float(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(value)
    return float(value)


def _bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError(value)
    return value


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise TypeError(value)
    return value


def _path(value: Any) -> Path:
    if not isinstance(value, (str, Path)):
        raise TypeError(value)
    return Path(value)


def _list_of(item: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def convert(value: Any) -> tuple[Any, ...]:
        if not isinstance(value, (list, tuple)):
            raise TypeError(value)
        return tuple(item(v) for v in value)

    return convert


def _resolution(value: Any) -> tuple[int, int]:
    values = _list_of(_int)(value)
    if len(values) != 2 or min(values) < 1:
        raise ValueError(value)
    return values


_COERCERS: dict[str, Callable[[Any], Any]] = {
    "int": _int,
    "float": _float,
    "bool": _bool,
    "str": _str,
    "path": _path,
    "int_list": _list_of(_int),
    "float_list": _list_of(_float),
    "str_list": lambda v: list(_list_of(_str)(v)),
    "resolution": _resolution,
}


def _base_type(type_name: str) -> str:
    return type_name.rstrip("?")


def coerce(value: Any, type_name: str, key: str) -> Any:
    """Check and convert one value against its schema type.

    A trailing ``?`` marks the type nullable.

    Raises:
        ConfigurationError: If the value does not fit the type
    """
    if value is None:
        if type_name.endswith("?"):
            return None
        raise ConfigurationError(f"{key}: null is not allowed")
    converter = _COERCERS.get(_base_type(type_name))
    if converter is None:
        raise ConfigurationError(f"{key}: unknown schema type {type_name!r}")
    try:
        return converter(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: expected {type_name}, got {value!r}") from exc


def load_schema(path: Path) -> dict[str, dict[str, str]]:
    """Load the published schema: section -> key -> type name."""
    if not path.exists():
        raise ConfigurationError(f"Schema file not found: {path}")
    schema = load_yaml_config(path)
    unknown = set(schema) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"Schema names unknown sections {sorted(unknown)}")
    for section, keys in schema.items():
        stray = set(keys or {}) - set(section_fields(section))
        if stray:
            raise ConfigurationError(f"Schema {section} names unknown keys {sorted(stray)}")
        for key, type_name in (keys or {}).items():
            if _base_type(str(type_name)) not in _COERCERS:
                raise ConfigurationError(f"Schema {section}.{key}: unknown type {type_name!r}")
    return {section: dict(keys or {}) for section, keys in schema.items()}


def _check_key(schema: dict[str, dict[str, str]], section: str, key: str) -> None:
    if section not in schema:
        raise ConfigurationError(f"Unknown config section {section!r}")
    if key not in schema[section]:
        raise ConfigurationError(f"Unknown config key {section}.{key}")


def _sectioned(
    data: dict[str, Any], schema: dict[str, dict[str, str]], origin: str
) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, values in data.items():
        if section not in schema:
            raise ConfigurationError(f"{origin}: unknown config section {section!r}")
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ConfigurationError(f"{origin}: section {section!r} must be a mapping")
        for key in values:
            _check_key(schema, section, key)
        out[section] = dict(values)
    return out


def _resolve_paths(
    data: dict[str, dict[str, Any]], schema: dict[str, dict[str, str]], root: Path
) -> None:
    """Relative paths in the YAML file are relative to the project root."""
    for section, values in data.items():
        for key, value in values.items():
            if _base_type(schema[section][key]) == "path" and isinstance(value, str):
                path = Path(value).expanduser()
                values[key] = path if path.is_absolute() else root / path


def parse_assignment(text: str) -> tuple[str, str, Any]:
    """Split ``section.key=value``; the value is parsed as YAML.

    Raises:
        ConfigurationError: On a malformed assignment
    """
    dotted, sep, raw = text.partition("=")
    section, dot, key = dotted.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigurationError(f"Expected section.key=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Cannot parse value in {text!r}: {exc}") from exc
    return section, key, value


def load_yaml_config(path: Path) -> dict[str, Any]:
    """Load YAML configuration file.

    Args:
        path: Path to YAML file

    Returns:
        Dictionary with configuration data, empty dict if file doesn't exist

    Raises:
        ConfigurationError: If the file is not valid YAML or not a mapping
    """
    if not path.exists():
        return {}

    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def section_fields(name: str) -> list[str]:
    """Field names of a config section's dataclass."""
    return [f.name for f in fields(SECTIONS[name])]
