"""File formats.

cascades  JSONL, one object per line:
          {"item_id", "publisher_id", "cascade_id", "times": [0, ...]}
          plus an optional "start": when the cascade began, in seconds
          since the item was published (default 0)
model     JSON document (``SCHEMA_VERSION``) with per-item mixtures, AIC
          tables and fit reports, optional embedding bin edges, and
          per-publisher item lists (oldest first)
tables    CSV for embeddings and predictions, JSONL for holdout scores

Every writer goes through ``atomic_write`` so a failure never leaves a
partial file behind.
"""
from __future__ import annotations

import contextlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .cascades import Cascade, InvalidCascadeError
from .kernels import KernelFamily, KernelParams
from .mixtures import BorelMixture, DualMixture, KernelMixture

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Malformed input file; the message carries the location."""


@dataclass(frozen=True)
class CascadeRecord:
    item_id: str
    publisher_id: str
    cascade_id: str
    cascade: Cascade
    start: float = 0.0

    def to_json(self) -> str:
        obj = {"item_id": self.item_id, "publisher_id": self.publisher_id,
               "cascade_id": self.cascade_id, "times": self.cascade.event_times.tolist()}
        if self.start:
            obj["start"] = self.start
        return json.dumps(obj)


@contextlib.contextmanager
def atomic_write(path, mode: str = "w", newline: str | None = None):
    """Write to a temp file next to ``path`` and rename on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def parse_cascade_line(line: str, where: str = "") -> CascadeRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{where}invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DataError(f"{where}expected a JSON object")
    missing = [k for k in ("item_id", "times") if k not in obj]
    if missing:
        raise DataError(f"{where}missing field(s) {', '.join(missing)}")
    times = obj["times"]
    if not isinstance(times, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                                              for t in times):
        raise DataError(f"{where}times must be an array of numbers")
    if any(b < a for a, b in zip(times, times[1:])):
        raise DataError(f"{where}times must be sorted ascending")
    try:
        cascade = Cascade(times)
    except InvalidCascadeError as exc:
        raise DataError(f"{where}{exc}") from None
    start = obj.get("start", 0.0)
    if isinstance(start, bool) or not isinstance(start, (int, float)) or not 0 <= start < float("inf"):
        raise DataError(f"{where}start must be a non-negative number")
    return CascadeRecord(str(obj["item_id"]), str(obj.get("publisher_id", "")),
                         str(obj.get("cascade_id", "")), cascade, float(start))


def iter_cascades(path) -> Iterator[CascadeRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            yield parse_cascade_line(line, f"{path}:{lineno}: ")


def read_cascades(path) -> list[CascadeRecord]:
    return list(iter_cascades(path))


def write_cascades(path, records: Iterable[CascadeRecord]) -> None:
    with atomic_write(path) as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def kernel_to_dict(k: KernelParams) -> dict:
    out = {"theta": k.theta}
    if k.c is not None:
        out["c"] = k.c
    return out


def kernel_from_dict(family: KernelFamily, d: dict) -> KernelParams:
    return KernelParams(family, d["theta"], d.get("c"))


def bmm_to_list(m: BorelMixture) -> list:
    return [{"n_star": n, "weight": w} for n, w in m.components]


def bmm_from_list(data) -> BorelMixture:
    return BorelMixture(tuple((d["n_star"], d["weight"]) for d in data))


def kmm_to_list(m: KernelMixture) -> list:
    return [dict(kernel_to_dict(k), weight=w) for k, w in m.components]


def kmm_from_list(family: KernelFamily, data) -> KernelMixture:
    return KernelMixture(tuple((kernel_from_dict(family, d), d["weight"]) for d in data))


@dataclass
class ItemModel:
    item_id: str
    publisher_id: str
    n_cascades: int
    bmm: BorelMixture
    kmm: KernelMixture | None
    aic: dict[int, float] = field(default_factory=dict)
    bmm_report: dict = field(default_factory=dict)
    kmm_report: dict | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def dual(self) -> DualMixture | None:
        return None if self.kmm is None else DualMixture(self.bmm, self.kmm)


@dataclass
class ModelFile:
    kernel_family: KernelFamily
    items: list[ItemModel]
    bin_edges: dict | None = None
    publishers: dict[str, list[str]] = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def item(self, item_id: str) -> ItemModel:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise KeyError(item_id)

    def to_dict(self) -> dict:
        items = []
        for it in self.items:
            items.append({
                "item_id": it.item_id, "publisher_id": it.publisher_id,
                "n_cascades": it.n_cascades,
                "bmm": bmm_to_list(it.bmm),
                "kmm": None if it.kmm is None else kmm_to_list(it.kmm),
                "aic": {str(k): v for k, v in sorted(it.aic.items())},
                "bmm_report": it.bmm_report, "kmm_report": it.kmm_report,
                "flags": list(it.flags),
            })
        return {"schema_version": SCHEMA_VERSION, "kernel_family": self.kernel_family.value,
                "settings": self.settings, "items": items, "bin_edges": self.bin_edges,
                "publishers": self.publishers}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelFile":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported model schema_version {version!r}; expected {SCHEMA_VERSION}")
        family = KernelFamily.parse(data["kernel_family"])
        items = []
        for d in data["items"]:
            items.append(ItemModel(
                d["item_id"], d["publisher_id"], d["n_cascades"], bmm_from_list(d["bmm"]),
                None if d["kmm"] is None else kmm_from_list(family, d["kmm"]),
                {int(k): v for k, v in d.get("aic", {}).items()},
                d.get("bmm_report", {}), d.get("kmm_report"), list(d.get("flags", []))))
        return cls(family, items, data.get("bin_edges"), dict(data.get("publishers", {})),
                   dict(data.get("settings", {})))


def dumps_model(model: ModelFile) -> str:
    return json.dumps(model.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_model(path, model: ModelFile) -> None:
    text = dumps_model(model)
    with atomic_write(path) as fh:
        fh.write(text)


def load_model(path) -> ModelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from None
    try:
        return ModelFile.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed model file: {exc}") from None


def format_float(x: float) -> str:
    return repr(float(x))


def embedding_header(bins: int) -> list[str]:
    return (["item_id"] + [f"n_star_{i}" for i in range(bins)] + [f"c_{i}" for i in range(bins)]
            + [f"theta_{i}" for i in range(bins)] + ["out_of_range"])


def read_embeddings(path) -> dict[str, np.ndarray]:
    import csv
    rows = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "item_id":
            raise DataError(f"{path}: missing embedding header")
        for lineno, row in enumerate(reader, 2):
            try:
                rows[row[0]] = np.array([float(x) for x in row[1:-1]])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed embedding row") from None
    return rows
