"""Simulation designs and benchmark data loaders.

The two four-component Gaussian designs used throughout the test bench place
their cluster structure in the first two of four dimensions (the other two
are pure noise), once with equal weights and once with a 2% component.
Built-in benchmark tables (iris, crabs) ship inside the package and are
checksum-verified on every load.
"""

import csv
import hashlib
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ParseError, UnknownDataset
from .model import Dataset
from .randkit import RngStream

_CHECKSUMS = {
    "iris": "91eb642c3adbc7bad8e99c930c11fa3a5cc8a07262c7a753b4e6ecf405f2e05e",
    "crabs": "bbd2a2c36e5cfe41fdde3868d06ab184360548f545cd46d0070f32d1c614c1de",
}


@dataclass(frozen=True)
class SimDesign:
    """Finite Gaussian mixture used as a data generator."""

    means: np.ndarray      # (K, r)
    covs: np.ndarray       # (K, r, r)
    weights: np.ndarray    # (K,)
    n: int
    name: str = ""

    def __post_init__(self):
        if not (len(self.means) == len(self.covs) == len(self.weights)):
            raise ValueError("means, covs and weights must have equal length")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12 or np.any(np.asarray(self.weights) < 0):
            raise ValueError("weights must lie on the simplex")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _four_component_design(weights, name):
    mu1 = np.array([2.0, -2.0, 0.0, 0.0])
    mu3 = np.array([2.0, 2.0, 0.0, 0.0])
    means = np.stack([mu1, -mu1, mu3, -mu3])
    covs = np.broadcast_to(np.eye(4), (4, 4, 4)).copy()
    return SimDesign(means=means, covs=covs, weights=np.asarray(weights), n=1000, name=name)


def design_equal_weights() -> SimDesign:
    """Four unit-covariance components at (+-2, +-2, 0, 0), equal weights, N=1000."""
    return _four_component_design(np.full(4, 0.25), "equal_weights")


def design_unequal_weights() -> SimDesign:
    """Same components with weights (0.02, 0.33, 0.33, 0.32)."""
    return _four_component_design(np.array([0.02, 0.33, 0.33, 0.32]), "unequal_weights")


DESIGNS = {
    "equal": design_equal_weights,
    "unequal": design_unequal_weights,
}


def generate(design: SimDesign, seed) -> Dataset:
    """Draw one dataset from the design; deterministic in the seed."""
    rng = RngStream(seed, stream=(17,))
    cum = np.cumsum(design.weights)
    u = rng.gen.random(design.n)
    labels = np.searchsorted(cum, u * cum[-1], side="right")
    labels = np.minimum(labels, len(design.weights) - 1).astype(np.int64)
    chol = np.linalg.cholesky(design.covs)
    z = rng.gen.standard_normal((design.n, design.means.shape[1]))
    Y = design.means[labels] + (chol[labels] @ z[:, :, None]).squeeze(-1)
    return Dataset(Y=Y, true_labels=labels, name=f"{design.name}[seed={seed}]")


def _codes(values):
    table = {v: i for i, v in enumerate(sorted(set(values)))}
    return np.array([table[v] for v in values], dtype=np.int64)


def load_csv(path, has_header=True, label_column=None) -> Dataset:
    """Parse a comma-separated numeric table into a Dataset.

    label_column (a header name, or 0-based index when there is no header)
    is pulled out as true_labels; non-integer label values are factorized in
    sorted order.  Raises ParseError with 1-based coordinates on bad cells.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ParseError(f"{path} is empty")
    if has_header:
        header = [h.strip() for h in rows[0]]
        body = rows[1:]
        first_row = 2
    else:
        header = [str(j) for j in range(len(rows[0]))]
        body = rows
        first_row = 1
    if not body:
        raise ParseError(f"{path} has no data rows")

    label_idx = None
    if label_column is not None:
        key = str(label_column)
        if key in header:
            label_idx = header.index(key)
        else:
            try:
                label_idx = int(label_column)
            except (TypeError, ValueError):
                raise ParseError(f"label column {label_column!r} not found") from None
            if not 0 <= label_idx < len(header):
                raise ParseError(f"label column index {label_idx} out of range")

    data = []
    labels_raw = []
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"row {first_row + i} has {len(row)} cells, expected {len(header)}", row=first_row + i)
        vals = []
        for j, cell in enumerate(row):
            if j == label_idx:
                labels_raw.append(cell.strip())
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"cannot parse cell at row {first_row + i}, column {j + 1}: {cell!r}",
                    row=first_row + i,
                    column=j + 1,
                ) from None
        data.append(vals)

    Y = np.asarray(data, dtype=float)
    true_labels = None
    if label_idx is not None:
        try:
            true_labels = np.array([int(float(v)) for v in labels_raw], dtype=np.int64)
        except ValueError:
            true_labels = _codes(labels_raw)
    return Dataset(Y=Y, true_labels=true_labels, name=os.path.basename(str(path)))


def write_csv(dataset: Dataset, path, label_name="label"):
    """Write a Dataset as CSV with 17 significant digits (lossless round trip)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        cols = [f"x{j + 1}" for j in range(dataset.dim)]
        if dataset.true_labels is not None:
            cols.append(label_name)
        writer.writerow(cols)
        for i in range(dataset.n):
            row = [format(v, ".17g") for v in dataset.Y[i]]
            if dataset.true_labels is not None:
                row.append(str(int(dataset.true_labels[i])))
            writer.writerow(row)


def _read_packaged(name):
    text = resources.files("sparsemix").joinpath(f"data/{name}.csv").read_text(encoding="utf-8")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != _CHECKSUMS[name]:
        raise RuntimeError(f"packaged dataset {name} failed checksum validation")
    return list(csv.DictReader(text.splitlines()))


def builtin(name) -> Dataset:
    """Load a packaged benchmark dataset ("iris" or "crabs")."""
    if name == "iris":
        rows = _read_packaged("iris")
        feats = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
        Y = np.array([[float(r[c]) for c in feats] for r in rows])
        labels = _codes([r["species"] for r in rows])
        return Dataset(Y=Y, true_labels=labels, name="iris")
    if name == "crabs":
        rows = _read_packaged("crabs")
        feats = ["FL", "RW", "CL", "CW", "BD"]
        Y = np.array([[float(r[c]) for c in feats] for r in rows])
        labels = _codes([(r["sp"], r["sex"]) for r in rows])
        return Dataset(Y=Y, true_labels=labels, name="crabs")
    raise UnknownDataset(f"no built-in dataset named {name!r}")
