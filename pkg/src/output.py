import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Literal

from pydantic import BaseModel

from src.errors import ConfigError
from src.simharness import ExperimentConfig, SweepResult

OutputFormat = Literal["csv", "json"]

# metric name, series attribute for the mean, attribute for the standard error, unit
PLOT_METRICS = (
    ("sinr_b", "sinr_b_db", "sinr_b_stderr_db", "dB"),
    ("sinr_b_roe", "sinr_b_roe_db", None, "dB"),
    ("sinr_e", "sinr_e_db", "sinr_e_stderr_db", "dB"),
    ("secrecy", "secrecy_mean", "secrecy_stderr", "bits/use"),
)

TABLE_COLUMNS = [
    "axis",
    "scheme",
    "metric",
    "unit",
    "mean",
    "stderr",
    "outage_fraction",
    "na",
    "nb",
    "ne",
    "target_sinr_db",
    "sigma_h_db",
    "extrapolated",
]


def format_number(x) -> str:
    """17 significant digits, enough for any double to survive the text round trip."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return "" if x is None else str(x)


def _json_safe(x):
    # JSON has no NaN or infinity
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _write_rows(path: Path, rows: List[dict], columns: List[str], fmt: OutputFormat) -> Path:
    path = path.with_suffix(f".{fmt}")
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_number(row[c]) for c in columns])
    else:
        with open(path, "w") as f:
            json.dump([{c: _json_safe(row[c]) for c in columns} for row in rows], f, indent=2)
            f.write("\n")
    logging.info(f"Wrote {path}")
    return path


def result_records(result: SweepResult) -> List[dict]:
    """One record per sweep point per scheme."""
    records = []
    for scheme, series in result.series.items():
        values = series.model_dump()
        for i, point in enumerate(result.points):
            record = {"scheme": scheme, "axis": result.axis[i], **point.model_dump()}
            record["extrapolated"] = result.extrapolated[i]
            for key, column in values.items():
                record[key] = column[i] if column is not None else None
            records.append(record)
    return records


def write_results(result: SweepResult, out_dir: Path, fmt: OutputFormat = "csv") -> Path:
    records = result_records(result)
    columns = list(records[0]) if records else []
    return _write_rows(Path(out_dir) / "results", records, columns, fmt)


def plot_rows(result: SweepResult) -> Iterable[dict]:
    trials = result.metadata.config.trials
    for scheme, series in result.series.items():
        for metric, mean_attr, stderr_attr, unit in PLOT_METRICS:
            means = getattr(series, mean_attr)
            if means is None:
                continue
            stderrs = getattr(series, stderr_attr) if stderr_attr else None
            for i, point in enumerate(result.points):
                yield {
                    "axis": result.axis[i],
                    "scheme": scheme,
                    "metric": metric,
                    "unit": unit,
                    "mean": means[i],
                    "stderr": stderrs[i] if stderrs is not None else None,
                    "outage_fraction": series.outage_count[i] / trials,
                    "na": point.na,
                    "nb": point.nb,
                    "ne": point.ne,
                    "target_sinr_db": point.target_sinr_db,
                    "sigma_h_db": point.sigma_h_db,
                    "extrapolated": result.extrapolated[i],
                }


def write_plot_table(result: SweepResult, out_dir: Path, name: str, fmt: OutputFormat = "csv") -> Path:
    return _write_rows(Path(out_dir) / f"{name}_table", list(plot_rows(result)), TABLE_COLUMNS, fmt)


def write_manifest(result: SweepResult, out_dir: Path, wall_time_s: float) -> Path:
    path = Path(out_dir) / "manifest.json"
    manifest = {
        "config": result.metadata.config.model_dump(mode="json"),
        "master_seed": result.metadata.master_seed,
        "version": result.metadata.version,
        "wall_time_s": wall_time_s,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    logging.info(f"Wrote {path}")
    return path


class OutputBundle(BaseModel):
    results: Path
    table: Path
    manifest: Path


def write_bundle(result: SweepResult, out_dir: Path, name: str, fmt: OutputFormat, wall_time_s: float) -> OutputBundle:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return OutputBundle(
        results=write_results(result, out_dir, fmt),
        table=write_plot_table(result, out_dir, name, fmt),
        manifest=write_manifest(result, out_dir, wall_time_s),
    )


def load_config(path: Path) -> dict:
    """Read a JSON config file; a run manifest is accepted and its config section used."""
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def config_from_file(path: Path, **overrides) -> ExperimentConfig:
    data = load_config(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)
