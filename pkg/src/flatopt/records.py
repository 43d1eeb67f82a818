"""Run records and deterministic serialization.

Primary outputs (``run.json``, ``metrics.csv``) are byte-identical across
reruns of the same config+seed: floats are written with 17 significant
digits (lossless for float64), JSON key order follows insertion order of the
record, line endings are LF, and all writes go through a
write-temp-then-rename so readers never observe partial files.

Wall-clock timings are real but not reproducible, so they live in a separate
sidecar (``timing.csv``) that is excluded from the determinism contract.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
VERSION_STRING = "v0.1.0"

METRIC_COLUMNS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "mean_sigma2")


def format_float(x) -> str:
    """17-significant-digit decimal form; round-trips any finite float64."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite float {x}")
    text = format(x, ".17g")
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


def atomic_write_text(path, text: str) -> None:
    """Write UTF-8 text via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_stable(value, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and 17-digit floats."""

    def render(v, level):
        pad = " " * (indent * level)
        inner = " " * (indent * (level + 1))
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [
                f"{inner}{json.dumps(str(k))}: {render(val, level + 1)}" for k, val in v.items()
            ]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(v, (list, tuple)):
            if len(v) == 0:
                return "[]"
            items = [f"{inner}{render(val, level + 1)}" for val in v]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        if isinstance(v, str):
            return json.dumps(v)
        if v is None:
            return "null"
        raise TypeError(f"cannot serialize {type(v).__name__}")

    return render(value, 0) + "\n"


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    mean_sigma2: float
    wall_ms: float  # measured; serialized to the timing sidecar only

    def metric_values(self):
        return (
            self.epoch,
            self.train_loss,
            self.train_acc,
            self.test_loss,
            self.test_acc,
            self.mean_sigma2,
        )


@dataclass
class RunRecord:
    """Everything one training or verification run produced."""

    config: dict
    rows: list = field(default_factory=list)
    best_test_acc: float = 0.0
    seed: int = 0
    version: str = VERSION_STRING
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        for i, row in enumerate(self.rows):
            if row.epoch != i:
                raise ValueError(f"epochs must be contiguous from 0, row {i} has epoch {row.epoch}")
            for acc in (row.train_acc, row.test_acc):
                if not 0.0 <= acc <= 1.0:
                    raise ValueError(f"accuracy out of [0, 1]: {acc}")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "version": self.version,
            "seed": self.seed,
            "config": dict(self.config),
            "epochs": [
                {
                    "epoch": r.epoch,
                    "train_loss": r.train_loss,
                    "train_acc": r.train_acc,
                    "test_loss": r.test_loss,
                    "test_acc": r.test_acc,
                    "mean_sigma2": r.mean_sigma2,
                }
                for r in self.rows
            ],
            "summary": {"best_test_acc": self.best_test_acc, "seed": self.seed},
        }

    def metrics_csv(self) -> str:
        lines = [",".join(METRIC_COLUMNS)]
        for row in self.rows:
            epoch, *floats = row.metric_values()
            lines.append(",".join([str(epoch)] + [format_float(v) for v in floats]))
        return "\n".join(lines) + "\n"

    def timing_csv(self) -> str:
        lines = ["epoch,wall_ms"]
        for row in self.rows:
            lines.append(f"{row.epoch},{format_float(row.wall_ms)}")
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> None:
        self.validate()
        os.makedirs(out_dir, exist_ok=True)
        atomic_write_text(os.path.join(out_dir, "run.json"), dumps_stable(self.to_dict()))
        atomic_write_text(os.path.join(out_dir, "metrics.csv"), self.metrics_csv())
        atomic_write_text(os.path.join(out_dir, "timing.csv"), self.timing_csv())

    @classmethod
    def load(cls, run_dir) -> "RunRecord":
        with open(os.path.join(run_dir, "run.json"), encoding="utf-8") as fh:
            data = json.load(fh)
        timing = {}
        timing_path = os.path.join(run_dir, "timing.csv")
        if os.path.exists(timing_path):
            with open(timing_path, encoding="utf-8") as fh:
                next(fh)
                for line in fh:
                    epoch, wall = line.strip().split(",")
                    timing[int(epoch)] = float(wall)
        rows = [
            EpochRow(
                epoch=e["epoch"],
                train_loss=e["train_loss"],
                train_acc=e["train_acc"],
                test_loss=e["test_loss"],
                test_acc=e["test_acc"],
                mean_sigma2=e["mean_sigma2"],
                wall_ms=timing.get(e["epoch"], 0.0),
            )
            for e in data["epochs"]
        ]
        return cls(
            config=data["config"],
            rows=rows,
            best_test_acc=data["summary"]["best_test_acc"],
            seed=data["seed"],
            version=data["version"],
            format_version=data["format_version"],
        )
