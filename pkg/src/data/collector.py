"""JSONL storage for raw fixes, sequence samples and generator events."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import BaseModel, ValidationError

from src.data.pipeline import Direction, PipelineConfig, RawFix, SequenceSample, validate_sample
from src.data.synthetic import ScenarioEvent
from src.navigation.geometry import FairwayGeometry
from src.utils.logger import get_logger

logger = get_logger(__name__)


class RawFixRecord(BaseModel):
    """One line of a fixes JSONL file."""
    agent_id: str
    t: float
    x: float
    y: float
    vx: Optional[float] = None
    vy: Optional[float] = None
    heading: Optional[float] = None
    direction: Direction = Direction.UPSTREAM

    def to_fix(self) -> RawFix:
        return RawFix(
            agent_id=self.agent_id,
            t=self.t,
            x=self.x,
            y=self.y,
            direction=self.direction,
            vx=self.vx,
            vy=self.vy,
            heading=self.heading,
        )

    @classmethod
    def from_fix(cls, fix: RawFix) -> "RawFixRecord":
        return cls(
            agent_id=fix.agent_id,
            t=fix.t,
            x=fix.x,
            y=fix.y,
            vx=fix.vx,
            vy=fix.vy,
            heading=fix.heading,
            direction=fix.direction,
        )


def _write_jsonl(records: Iterable[BaseModel], path: Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w") as f:
        for record in records:
            f.write(record.model_dump_json(exclude_none=True))
            f.write("\n")
            count += 1
    return count


def _read_jsonl(path: Path, model: type) -> List[Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    records = []
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(model.model_validate_json(line))
            except ValidationError as e:
                raise ValueError(f"{path}:{line_no}: invalid record: {e}") from e
    return records


class DatasetCollector:
    """Save and load pipeline inputs and outputs under one directory."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, filename: str) -> Path:
        path = Path(filename)
        return path if path.is_absolute() else self.directory / path

    def save_fixes(self, fixes: Iterable[RawFix], filename: str = "fixes.jsonl") -> Path:
        path = self._path(filename)
        count = _write_jsonl((RawFixRecord.from_fix(f) for f in fixes), path)
        logger.info(f"Saved {count} fixes to {path}")
        return path

    def load_fixes(self, filename: str = "fixes.jsonl") -> List[RawFix]:
        return [r.to_fix() for r in _read_jsonl(self._path(filename), RawFixRecord)]

    def save_samples(self, samples: Iterable[SequenceSample], filename: str = "samples.jsonl") -> Path:
        path = self._path(filename)
        count = _write_jsonl(samples, path)
        logger.info(f"Saved {count} samples to {path}")
        return path

    def load_samples(self, filename: str = "samples.jsonl") -> List[SequenceSample]:
        return _read_jsonl(self._path(filename), SequenceSample)

    def save_events(self, events: Iterable[ScenarioEvent], filename: str = "events.jsonl") -> Path:
        path = self._path(filename)
        _write_jsonl(events, path)
        return path

    def load_events(self, filename: str = "events.jsonl") -> List[ScenarioEvent]:
        return _read_jsonl(self._path(filename), ScenarioEvent)

    def save_geometry(self, geometry: FairwayGeometry, filename: str = "geometry.json") -> Path:
        return geometry.to_json(self._path(filename))

    def load_geometry(self, filename: str = "geometry.json") -> FairwayGeometry:
        return FairwayGeometry.from_json(self._path(filename))

    def validate_dataset(
        self,
        samples: List[SequenceSample],
        cfg: PipelineConfig,
        geometry: Optional[FairwayGeometry] = None,
    ) -> Dict[str, Any]:
        """
        Validate every sample and merge the reports.

        Returns:
            Validation report
        """
        errors: List[str] = []
        warnings: List[str] = []
        for i, sample in enumerate(samples):
            report = validate_sample(sample, cfg, geometry)
            errors.extend(f"Sample {i} ({sample.target_id}): {e}" for e in report["errors"])
            warnings.extend(f"Sample {i} ({sample.target_id}): {w}" for w in report["warnings"])

        if not samples:
            warnings.append("Dataset is empty")

        return {
            "valid": len(errors) == 0,
            "total_samples": len(samples),
            "errors": errors,
            "warnings": warnings,
        }


def dump_json(data: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
    return path
