"""
JSON Schemas of the documents the commands write.

The shipped copies live in docs/schemas and are regenerated with
``scripts/export_schemas.py`` whenever a report model changes.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Type, Union

from pydantic import BaseModel

from .checkpoint_models import CheckpointDocument
from .result_models import (
    EvalMetricsDocument,
    GradCheckReport,
    LocalizationReport,
    SynthSummary,
    TrainMetricsDocument,
)

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "docs" / "schemas"

# Schema name -> document model; the name is also the stem of the file each command writes
DOCUMENT_MODELS: Dict[str, Type[BaseModel]] = {
    "summary": SynthSummary,
    "metrics": TrainMetricsDocument,
    "eval": EvalMetricsDocument,
    "locate": LocalizationReport,
    "gradcheck": GradCheckReport,
    "checkpoint": CheckpointDocument,
}


def schema_filename(name: str) -> str:
    return f"{name}.schema.json"


def document_schema(name: str) -> Dict[str, Any]:
    if name not in DOCUMENT_MODELS:
        raise KeyError(f"unknown document schema {name!r}; expected one of {', '.join(DOCUMENT_MODELS)}")
    return DOCUMENT_MODELS[name].model_json_schema()


def load_shipped_schema(name: str, schema_dir: Union[str, Path] = SCHEMA_DIR) -> Dict[str, Any]:
    return json.loads((Path(schema_dir) / schema_filename(name)).read_text(encoding="utf-8"))


def write_schemas(out_dir: Union[str, Path] = SCHEMA_DIR) -> List[Path]:
    """Write one ``<name>.schema.json`` per document model."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in DOCUMENT_MODELS:
        path = out_dir / schema_filename(name)
        path.write_text(json.dumps(document_schema(name), indent=2) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
