# lab/services/persistence.py
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from lab import __version__
from lab.config.run_config import SCHEMA_VERSION, dump_config
from lab.services.pde_solver import BOUNDARY_NOTE

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = "1.0"
LEADING_COLUMNS = ("time", "mass", "moment1", "resource")


@dataclass
class ExperimentReport:
    """What one command run produced, before it is written to disk."""
    kind: str
    config: object
    config_path: str = ""
    seeds: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    boundary_note: str = BOUNDARY_NOTE

    @property
    def status(self):
        return "passed" if all(self.checks.values()) else "failed"

    def failed_checks(self):
        return sorted(name for name, ok in self.checks.items() if not ok)


def jsonable(value):
    """Plain-Python copy of nested numpy containers for json.dump."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def series_frame(columns):
    """DataFrame with the versioned leading columns first, the rest in given order."""
    frame = pd.DataFrame({name: np.asarray(values) for name, values in columns.items()})
    leading = [name for name in LEADING_COLUMNS if name in frame.columns]
    rest = [name for name in frame.columns if name not in leading]
    return frame[leading + rest]


def run_directory(report, out_dir):
    return Path(out_dir) / f"{report.kind}-{report.config.config_hash()[:12]}"


def persist_record(report, out_dir):
    """Write CSV series and manifest.json, then store the RunRecord row."""
    from lab.models import RunRecord

    directory = run_directory(report, out_dir)
    config_hash = report.config.config_hash()
    try:
        directory.mkdir(parents=True, exist_ok=True)
        outputs = {}
        for name, columns in report.series.items():
            path = directory / f"{name}.csv"
            series_frame(columns).to_csv(path, index=False, float_format="%.17g")
            outputs[name] = str(path)

        manifest = {
            "kind": report.kind,
            "tool_version": __version__,
            "config_schema_version": SCHEMA_VERSION,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config_hash": config_hash,
            "config_path": report.config_path,
            "seeds": report.seeds,
            "status": report.status,
            "wall_clock_seconds": report.wall_clock_seconds,
            "boundary_note": report.boundary_note,
            "outputs": outputs,
            "metrics": report.metrics,
            "checks": report.checks,
            "tolerances": report.tolerances,
            "config": dump_config(report.config),
        }
        manifest_path = directory / "manifest.json"
        manifest_path.write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True), encoding="utf-8")

        RunRecord.objects.create(
            kind=report.kind,
            config_hash=config_hash,
            config_path=report.config_path,
            seeds=jsonable(report.seeds),
            tool_version=__version__,
            manifest_path=str(manifest_path),
            outputs=outputs,
            metrics=jsonable(report.metrics),
            checks=jsonable(report.checks),
            tolerances=jsonable(report.tolerances),
            boundary_note=report.boundary_note,
            wall_clock_seconds=report.wall_clock_seconds,
            status=report.status,
        )
    except Exception as e:
        logger.error(f"❌ Failed to persist {report.kind} run in {directory}: {e}")
        raise

    logger.info(f"✅ Stored {report.kind} run {config_hash[:12]} in {directory}")
    return manifest_path
