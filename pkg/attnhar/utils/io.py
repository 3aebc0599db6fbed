"""
File output helpers shared by the commands.
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Union

import yaml
from pydantic import BaseModel

from ..core.exceptions import ConfigurationError

PathLike = Union[str, Path]


def ensure_dir(path: PathLike) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_json(path: PathLike, document: Union[BaseModel, Dict[str, Any]]) -> Path:
    """Write a pydantic document or plain dict as indented JSON."""
    path = Path(path)
    ensure_dir(path.parent)
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(document, indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_config_file(path: PathLike) -> Dict[str, Any]:
    """Load a --config file: YAML for .yaml/.yml, JSON otherwise."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot parse config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping at the top level")
    return data
