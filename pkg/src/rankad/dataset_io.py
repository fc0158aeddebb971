"""Flat-file ingestion, model archives and level-curve grid export.

Data files are plain comma-separated text with '.' as the decimal point.
An optional integer label column carries 0 (nominal) or 1 (anomalous).

Model archives are single JSON documents.  They store the support-pair
coordinates themselves, so a loaded detector scores new points without
access to the training set.  Floats are written with ``repr`` which
round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from .errors import ArchiveError, ArchiveVersionError, DataError

if TYPE_CHECKING:
    from .detector import Detector

__all__ = [
    "NOMINAL",
    "ANOMALOUS",
    "ARCHIVE_FORMAT",
    "ARCHIVE_VERSION",
    "Dataset",
    "EmptyFileError",
    "load_csv",
    "write_csv",
    "save_model",
    "load_model",
    "export_grid",
]

NOMINAL = 0
ANOMALOUS = 1

ARCHIVE_FORMAT = "rankad-model"
ARCHIVE_VERSION = 1


class EmptyFileError(DataError):
    """The file holds no data rows."""


@dataclass(frozen=True)
class Dataset:
    """An ``n x d`` point cloud with optional 0/1 labels.

    Arrays are copied and made read-only on construction.
    """

    points: np.ndarray
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise DataError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise DataError("a dataset needs at least one point")
        if pts.shape[1] < 1:
            raise DataError("points must have at least one coordinate")
        if not np.all(np.isfinite(pts)):
            raise DataError("all coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

        if self.labels is not None:
            lab = np.array(self.labels, copy=True)
            if lab.shape != (pts.shape[0],):
                raise DataError(
                    f"expected {pts.shape[0]} labels, got shape {lab.shape}"
                )
            if not np.all(np.isin(lab, (NOMINAL, ANOMALOUS))):
                raise DataError("labels must be 0 (nominal) or 1 (anomalous)")
            lab = lab.astype(np.int64)
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, index) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.points[index], labels)

    def nominal(self) -> "Dataset":
        """Points labelled nominal (all points when unlabelled)."""
        if self.labels is None:
            return self
        return self.subset(self.labels == NOMINAL)

    def anomalous(self) -> "Dataset":
        if self.labels is None:
            raise DataError("dataset carries no labels")
        return self.subset(self.labels == ANOMALOUS)


def _parse_label(cell: str, row: int, col: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col}: label {cell!r} is not numeric") from None
    if value not in (NOMINAL, ANOMALOUS):
        raise DataError(f"row {row}, column {col}: label {cell!r} is not 0 or 1")
    return int(value)


def load_csv(path, has_header: bool = False, label_column: int | None = None) -> Dataset:
    """Read a comma-separated point file.

    Parameters
    ----------
    path : str or Path
        File to read.
    has_header : bool
        Skip the first non-blank line.
    label_column : int, optional
        Column (0-based, negative counts from the end) holding 0/1 labels.
        It is excluded from the coordinates.

    Raises
    ------
    DataError
        Unreadable file, ragged rows or a non-numeric cell.  Cell errors
        name the 1-based file row and column.
    EmptyFileError
        No data rows.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            raw = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (csv.Error, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc

    rows = [(lineno, row) for lineno, row in raw if any(c.strip() for c in row)]
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise EmptyFileError(f"{path} contains no data rows")

    width = len(rows[0][1])
    label_idx = None
    if label_column is not None:
        label_idx = label_column + width if label_column < 0 else label_column
        if not 0 <= label_idx < width:
            raise DataError(f"label column {label_column} out of range for {width} columns")
        if width < 2:
            raise DataError("a labelled file needs at least one coordinate column")

    coords = np.empty((len(rows), width - (label_idx is not None)), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64) if label_idx is not None else None
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {lineno}: expected {width} columns, found {len(row)}")
        c_out = 0
        for c, cell in enumerate(row):
            if c == label_idx:
                labels[r] = _parse_label(cell.strip(), lineno, c + 1)
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"row {lineno}, column {c + 1}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(value):
                raise DataError(f"row {lineno}, column {c + 1}: non-finite value {cell!r}")
            coords[r, c_out] = value
            c_out += 1
    return Dataset(coords, labels)


def write_csv(data: Dataset, path, header: bool = False) -> None:
    """Write ``data`` so that :func:`load_csv` restores it exactly.

    Labels, when present, go to the last column.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            names = [f"x{i}" for i in range(data.dim)]
            if data.labels is not None:
                names.append("label")
            writer.writerow(names)
        for r in range(data.n):
            row = [repr(float(v)) for v in data.points[r]]
            if data.labels is not None:
                row.append(str(int(data.labels[r])))
            writer.writerow(row)


# -- model archives ----------------------------------------------------------


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, allow_nan=False).encode()
    return hashlib.sha256(blob).hexdigest()


def save_model(detector: "Detector", path, metadata: dict | None = None) -> None:
    """Persist a fitted detector (its rank model plus sorted decision values)."""
    model = detector.model
    if model.n_support == 0:
        raise ArchiveError("refusing to save a model without support pairs")
    payload = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "dim": model.dim,
        "sigma": model.sigma,
        "C": model.C,
        "converged": bool(model.converged),
        "support_pairs": {
            "first": model.support_first.tolist(),
            "second": model.support_second.tolist(),
            "alpha": model.alpha.tolist(),
        },
        "sorted_decision_values": detector.sorted_g.tolist(),
        "metadata": dict(metadata or {}),
    }
    doc = dict(payload, checksum=_checksum(payload))
    text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n")


def _require(doc: dict, key: str, kind) -> Any:
    if key not in doc:
        raise ArchiveError(f"archive is missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ArchiveError(f"archive field {key!r} has the wrong type")
    return value


def load_model(path) -> "Detector":
    """Restore a detector written by :func:`save_model`.

    Raises
    ------
    ArchiveVersionError
        Unknown format version.
    ArchiveError
        Truncated or corrupt file, unsorted decision values, non-positive
        dual coefficients or a checksum mismatch.
    """
    from .detector import Detector
    from .rank_trainer import RankModel

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArchiveError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path} is truncated or not a model archive: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != ARCHIVE_FORMAT:
        raise ArchiveError(f"{path} is not a {ARCHIVE_FORMAT} archive")
    version = doc.get("version")
    if version != ARCHIVE_VERSION:
        raise ArchiveVersionError(
            f"archive version {version!r} is not supported (expected {ARCHIVE_VERSION})"
        )

    dim = _require(doc, "dim", int)
    sigma = float(_require(doc, "sigma", (int, float)))
    C = float(_require(doc, "C", (int, float)))
    pairs = _require(doc, "support_pairs", dict)
    try:
        first = np.array(pairs["first"], dtype=np.float64).reshape(-1, dim)
        second = np.array(pairs["second"], dtype=np.float64).reshape(-1, dim)
        alpha = np.array(pairs["alpha"], dtype=np.float64)
        sorted_g = np.array(_require(doc, "sorted_decision_values", list), dtype=np.float64)
    except (KeyError, ValueError, TypeError) as exc:
        raise ArchiveError(f"malformed support-pair block: {exc}") from exc

    if not (len(first) == len(second) == len(alpha)) or len(alpha) == 0:
        raise ArchiveError("support-pair arrays are empty or of unequal length")
    if np.any(alpha <= 0):
        raise ArchiveError("support pairs must carry strictly positive coefficients")
    if sorted_g.ndim != 1 or len(sorted_g) == 0:
        raise ArchiveError("decision-value block is empty")
    if np.any(np.diff(sorted_g) < 0):
        raise ArchiveError("decision values are not sorted ascending")

    payload = {key: value for key, value in doc.items() if key != "checksum"}
    if doc.get("checksum") != _checksum(payload):
        raise ArchiveError("checksum mismatch: archive is corrupt")

    model = RankModel(
        sigma=sigma,
        C=C,
        support_first=first,
        support_second=second,
        alpha=alpha,
        training_decision_values=sorted_g,
        converged=bool(doc.get("converged", True)),
    )
    return Detector(model=model, sorted_g=sorted_g, metadata=dict(doc.get("metadata", {})))


# -- grid export --------------------------------------------------------------


def grid_points(bounds: Sequence[Sequence[float]], resolution: int) -> np.ndarray:
    """Row-major planar grid: x varies fastest, y outer."""
    if len(bounds) != 2:
        raise DataError("grid export needs bounds for exactly two axes")
    if resolution < 2:
        raise DataError("resolution must be at least 2")
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    if not (x_lo < x_hi and y_lo < y_hi):
        raise DataError(f"degenerate bounds {bounds}: need lo < hi on both axes")
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def export_grid(detector: "Detector", bounds, resolution: int, path) -> np.ndarray:
    """Evaluate the ranker and its score on a planar grid and write CSV.

    Writes ``resolution**2`` rows ``x,y,g,score`` under a header line and
    returns the same values as an array.
    """
    from .detector import scores
    from .rank_trainer import decision_values

    if detector.model.dim != 2:
        raise DataError(f"level-curve grids need 2-D models, this one is {detector.model.dim}-D")
    pts = grid_points(bounds, resolution)
    g = decision_values(detector.model, pts)
    s = scores(detector, pts, g=g)
    table = np.column_stack([pts, g, s])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "g", "score"])
        for row in table:
            writer.writerow([repr(float(v)) for v in row])
    return table
