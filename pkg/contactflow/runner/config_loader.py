"""
Experiment file loading: TOML parsing, schema validation and name resolution checks.
"""

import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import ValidationError

from contactflow.core.errors import ConfigError
from contactflow.core.logging import get_logger
from contactflow.runner.expressions import referenced_names
from contactflow.schemas.experiment import ExperimentConfig

logger = get_logger(__name__)

_POSITION = re.compile(r"line (\d+), column (\d+)")


def _position(error: tomllib.TOMLDecodeError) -> tuple[int | None, int | None]:
    line, column = getattr(error, "lineno", None), getattr(error, "colno", None)
    if line is None:
        match = _POSITION.search(str(error))
        if match:
            line, column = int(match.group(1)), int(match.group(2))
    return line, column


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """
    Parse and validate an experiment file.

    Raises:
        ConfigError: Malformed TOML (with line and column), schema violations or unresolved names
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line, column = _position(e)
        logger.error(f"Failed to parse {source}: {e}")
        raise ConfigError(f"{source}: {e}", line, column) from e

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        logger.error(f"Invalid experiment file {source}: {where}: {first['msg']}")
        raise ConfigError(f"{source}: {where}: {first['msg']}") from e

    known = set(config.hamiltonians)
    for experiment in config.experiments:
        if not experiment.expression:
            continue
        missing = sorted(referenced_names(experiment.expression) - known)
        if missing:
            raise ConfigError(f"{source}: experiment '{experiment.name}' references unknown Hamiltonian(s) {missing}")
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and parse an experiment file from disk."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read experiment file {path}: {e}")
        raise ConfigError(f"cannot read {path}: {e}") from e
    config = parse_config(text, str(path))
    logger.info(f"Loaded {path}: {len(config.hamiltonians)} Hamiltonian(s), {len(config.experiments)} experiment(s)")
    return config
