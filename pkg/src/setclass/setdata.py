"""
Sets of observations and labeled collections of sets.

A set is stored as a ``p x n_i`` array: each *column* is one observation.
Two on-disk formats are supported:

``csv-dir``
    A directory holding ``manifest.json`` plus one headerless numeric CSV per
    set. Manifest entries are ``{set_id, file, label?, orientation}`` where
    orientation is ``"columns"`` (file is p x n_i) or ``"rows"`` (file is
    n_i x p and gets transposed). String labels are mapped to class ids
    through an optional top-level ``label_map``.

``json``
    One document ``{p, class_count?, sets: [{set_id, label?, observations}]}``
    where ``observations`` is a list of p rows, each of length n_i.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import SetDataError

FORMATS = ("csv-dir", "json")
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class ObservationSet:
    observations: np.ndarray
    label: int | None = None
    set_id: str = ""

    def __post_init__(self):
        X = np.array(self.observations, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise SetDataError(f"set {self.set_id!r}: observations must be a p x n matrix, got ndim={X.ndim}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise SetDataError(f"set {self.set_id!r}: empty set (shape {X.shape})")
        bad = np.argwhere(~np.isfinite(X))
        if bad.size:
            i, j = bad[0]
            raise SetDataError(
                f"set {self.set_id!r}: non-finite value {X[i, j]!r} at variable {i}, observation {j}"
            )
        if self.label is not None:
            if isinstance(self.label, bool) or int(self.label) != self.label or self.label < 1:
                raise SetDataError(f"set {self.set_id!r}: label must be a positive integer, got {self.label!r}")
            object.__setattr__(self, "label", int(self.label))
        X.setflags(write=False)
        object.__setattr__(self, "observations", X)

    @property
    def p(self) -> int:
        return self.observations.shape[0]

    @property
    def n(self) -> int:
        return self.observations.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.set_id == other.set_id
            and self.label == other.label
            and self.observations.shape == other.observations.shape
            and bool(np.array_equal(self.observations, other.observations))
        )

    __hash__ = None


@dataclass(frozen=True)
class SetCollection:
    sets: tuple
    class_count: int | None = None
    _p: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise SetDataError("collection holds no sets")
        for s in sets:
            if not isinstance(s, ObservationSet):
                raise SetDataError(f"expected ObservationSet, got {type(s).__name__}")
        p = sets[0].p
        for s in sets:
            if s.p != p:
                raise SetDataError(f"set {s.set_id!r}: dimension {s.p} differs from collection dimension {p}")
        labels = [s.label for s in sets if s.label is not None]
        K = self.class_count
        if K is None and labels:
            K = max(labels)
        if K is not None:
            K = int(K)
            for s in sets:
                if s.label is not None and not 1 <= s.label <= K:
                    raise SetDataError(f"set {s.set_id!r}: unknown label {s.label} (class_count={K})")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "class_count", K)
        object.__setattr__(self, "_p", p)

    @property
    def p(self) -> int:
        return self._p

    @property
    def N(self) -> int:
        return len(self.sets)

    @property
    def labeled(self) -> bool:
        return all(s.label is not None for s in self.sets)

    @property
    def labels(self) -> np.ndarray:
        if not self.labeled:
            raise SetDataError("collection is not fully labeled")
        return np.array([s.label for s in self.sets], dtype=int)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.n for s in self.sets], dtype=int)

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def subset(self, index) -> "SetCollection":
        return SetCollection(tuple(self.sets[i] for i in index), self.class_count)


def _resolve_label(raw, label_map, set_id):
    if raw is None:
        return None
    if isinstance(raw, str):
        if label_map and raw in label_map:
            return int(label_map[raw])
        try:
            return int(raw)
        except ValueError:
            raise SetDataError(f"set {set_id!r}: unknown label {raw!r}") from None
    if isinstance(raw, bool) or not float(raw).is_integer():
        raise SetDataError(f"set {set_id!r}: unknown label {raw!r}")
    return int(raw)


def _read_csv(path: Path, set_id: str) -> np.ndarray:
    rows = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                row = []
                for col, cell in enumerate(line.split(","), start=1):
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise SetDataError(
                            f"set {set_id!r}: cannot parse {cell.strip()!r} at {path.name}:{lineno}, column {col}"
                        ) from None
                rows.append(row)
    except OSError as exc:
        raise SetDataError(f"set {set_id!r}: cannot read {path}: {exc}") from exc
    if not rows:
        raise SetDataError(f"set {set_id!r}: empty file {path.name}")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise SetDataError(f"set {set_id!r}: ragged row {k + 1} in {path.name} ({len(row)} != {width} cells)")
    return np.array(rows, dtype=float)


def _build_set(X, label, set_id, source):
    try:
        return ObservationSet(X, label, set_id)
    except SetDataError as exc:
        raise SetDataError(f"{exc} [{source}]") from None


def _load_csv_dir(path: Path) -> SetCollection:
    mpath = path / MANIFEST
    try:
        manifest = json.loads(mpath.read_text())
    except OSError as exc:
        raise SetDataError(f"cannot read manifest {mpath}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SetDataError(f"manifest {mpath} is not valid JSON: {exc}") from exc
    if isinstance(manifest, list):
        entries, label_map, K = manifest, None, None
    else:
        entries = manifest.get("sets", [])
        label_map = manifest.get("label_map")
        K = manifest.get("class_count")
    sets = []
    for k, entry in enumerate(entries):
        set_id = str(entry.get("set_id", f"set{k}"))
        if "file" not in entry:
            raise SetDataError(f"set {set_id!r}: manifest entry {k} has no 'file'")
        orientation = entry.get("orientation", "columns")
        if orientation not in ("columns", "rows"):
            raise SetDataError(f"set {set_id!r}: orientation must be 'columns' or 'rows', got {orientation!r}")
        X = _read_csv(path / entry["file"], set_id)
        if orientation == "rows":
            X = X.T
        label = _resolve_label(entry.get("label"), label_map, set_id)
        sets.append(_build_set(X, label, set_id, entry["file"]))
    if K is None and label_map:
        K = max(int(v) for v in label_map.values())
    return SetCollection(tuple(sets), K)


def _load_json(path: Path) -> SetCollection:
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise SetDataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SetDataError(f"{path} is not valid JSON: {exc}") from exc
    p = doc.get("p")
    label_map = doc.get("label_map")
    sets = []
    for k, entry in enumerate(doc.get("sets", [])):
        set_id = str(entry.get("set_id", f"set{k}"))
        obs = entry.get("observations")
        if not obs:
            raise SetDataError(f"set {set_id!r}: empty set")
        widths = {len(row) for row in obs}
        if len(widths) != 1:
            raise SetDataError(f"set {set_id!r}: ragged observation rows {sorted(widths)}")
        try:
            X = np.array(obs, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SetDataError(f"set {set_id!r}: cannot parse observations: {exc}") from None
        if p is not None and X.shape[0] != p:
            raise SetDataError(f"set {set_id!r}: has {X.shape[0]} variables, document declares p={p}")
        label = _resolve_label(entry.get("label"), label_map, set_id)
        sets.append(_build_set(X, label, set_id, f"sets[{k}]"))
    return SetCollection(tuple(sets), doc.get("class_count"))


def load_collection(path, format: str = "csv-dir") -> SetCollection:
    """Read and validate a collection stored in ``csv-dir`` or ``json`` format."""
    path = Path(path)
    if format not in FORMATS:
        raise SetDataError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise SetDataError(f"{path} does not exist")
    if format == "csv-dir":
        return _load_csv_dir(path)
    return _load_json(path)


def _format_matrix(X: np.ndarray) -> str:
    # repr() gives the shortest string that round-trips a double exactly
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X)


def save_collection(coll: SetCollection, path, format: str = "csv-dir") -> None:
    """Write ``coll`` so that ``load_collection`` reproduces it exactly.

    Raises ``OSError`` when the destination is not writable.
    """
    path = Path(path)
    if format not in FORMATS:
        raise SetDataError(f"unknown format {format!r}; expected one of {FORMATS}")
    if format == "json":
        doc = {"p": coll.p}
        if coll.class_count is not None:
            doc["class_count"] = coll.class_count
        doc["sets"] = []
        for s in coll.sets:
            entry = {"set_id": s.set_id}
            if s.label is not None:
                entry["label"] = s.label
            entry["observations"] = [[float(v) for v in row] for row in s.observations]
            doc["sets"].append(entry)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        path.write_text(json.dumps(doc))
        return

    path.mkdir(parents=True, exist_ok=True)
    entries = []
    width = max(3, len(str(len(coll.sets))))
    for k, s in enumerate(coll.sets):
        fname = f"set_{k:0{width}d}.csv"
        (path / fname).write_text(_format_matrix(s.observations))
        entry = {"set_id": s.set_id, "file": fname, "orientation": "columns"}
        if s.label is not None:
            entry["label"] = s.label
        entries.append(entry)
    manifest = {"sets": entries}
    if coll.class_count is not None:
        manifest["class_count"] = coll.class_count
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")


def pca_transform(coll: SetCollection, k: int):
    """Project every observation onto the top-``k`` PCs of the pooled data.

    Optional preprocessing for very high dimensional sets; returns the
    projected collection and the ``(center, p x k basis)`` used.
    """
    X = np.hstack([s.observations for s in coll.sets])
    if not 1 <= k <= min(X.shape):
        raise SetDataError(f"k={k} must lie in 1..{min(X.shape)}")
    center = X.mean(axis=1, keepdims=True)
    U, _, _ = np.linalg.svd(X - center, full_matrices=False)
    W = U[:, :k]
    sets = tuple(
        ObservationSet(W.T @ (s.observations - center), s.label, s.set_id) for s in coll.sets
    )
    return SetCollection(sets, coll.class_count), (center.ravel(), W)


__all__ = [
    "ObservationSet",
    "SetCollection",
    "load_collection",
    "save_collection",
    "pca_transform",
    "FORMATS",
]
