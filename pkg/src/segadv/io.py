"""Trajectory JSONL and results CSV helpers.

JSONL records look like::

    {"tokens": [7, 3, 9], "gen_probs": [0.9, 0.1, 0.8], "reward": 1,
     "values": [0.5, 0.4, 0.6, 1.0]}

``values`` is optional and holds ``T + 1`` (or ``T``) entries; the terminal
value is always replaced by the reward. Floats are written with ``repr`` so
output is byte-stable across runs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import IO, Any, Iterable, Iterator, Sequence

import numpy as np

from .core import Trajectory, ValidationError


def parse_record(record: dict[str, Any], lineno: int = 0) -> tuple[Trajectory, np.ndarray | None]:
    where = f"line {lineno}: " if lineno else ""
    try:
        traj = Trajectory(record["tokens"], record["gen_probs"], record["reward"])
    except KeyError as exc:
        raise ValidationError(f"{where}missing key {exc.args[0]!r}") from None
    except ValidationError as exc:
        raise ValidationError(f"{where}{exc}") from None
    values = record.get("values")
    if values is None:
        return traj, None
    values = np.asarray(values, dtype=np.float64)
    if values.size not in (traj.T, traj.T + 1):
        raise ValidationError(f"{where}values must have {traj.T + 1} entries, got {values.size}")
    return traj, values


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    return records


def iter_trajectories(records: Iterable[dict[str, Any]]) -> Iterator[tuple[Trajectory, np.ndarray | None]]:
    for lineno, rec in enumerate(records, 1):
        yield parse_record(rec, lineno)


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_plain) + "\n")


def trajectory_record(traj: Trajectory, values: Sequence[float] | None = None) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "tokens": traj.tokens.tolist(),
        "gen_probs": traj.gen_probs.tolist(),
        "reward": int(traj.reward),
    }
    if values is not None:
        rec["values"] = np.asarray(values, dtype=np.float64).tolist()
    return rec


def fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path | IO[str], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    def _write(fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])

    if hasattr(path, "write"):
        _write(path)  # type: ignore[arg-type]
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
