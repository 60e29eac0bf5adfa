"""Model specification files, report serialization, and CSV ingestion.

A model file is JSON with the keys ``options`` (required), ``k``/``n``
(optional counts), exactly one of ``ab`` or ``vertices``, and ``prior``.
Matrix- or vector-valued fields may hold a string instead of numbers, which
is read as a path to a numeric CSV file relative to the model file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelFileError
from .model import (
    AbPolytope,
    CountData,
    DirichletPrior,
    ItemLayout,
    VPolytope,
)
from .sampler import ConstraintModel

MODEL_SCHEMA = "ineqmn-model/1"
REPORT_SCHEMA = "ineqmn-report/1"


@dataclass(frozen=True)
class ModelSpec:
    """Validated contents of a model file."""

    layout: ItemLayout
    prior: DirichletPrior
    counts: CountData | None = None
    ab: AbPolytope | None = None
    vertices: VPolytope | None = None
    counts_convention: str | None = None  # "full" | "free" | None

    def __post_init__(self):
        if (self.ab is None) == (self.vertices is None):
            raise ModelFileError(
                "exactly one constraint block ('ab' or 'vertices') is required"
            )

    @property
    def kind(self) -> str:
        return "ab" if self.ab is not None else "vertices"

    def constraint_model(self) -> ConstraintModel:
        if self.ab is not None:
            return ConstraintModel.from_ab(self.layout, self.ab)
        return ConstraintModel.from_vertices(self.layout, self.vertices)


def read_csv_matrix(path) -> np.ndarray:
    """Numeric comma-separated matrix, shape (rows, cols)."""
    try:
        return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except OSError as exc:
        raise ModelFileError(f"cannot read CSV file {path}: {exc}") from exc
    except ValueError as exc:
        raise ModelFileError(f"CSV file {path} is not numeric: {exc}") from exc


def read_csv_vector(path) -> np.ndarray:
    return read_csv_matrix(path).reshape(-1)


def _resolve(value, base: Path, field: str, as_matrix: bool):
    """A field value is either inline numbers or a CSV path string."""
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ModelFileError(
                f"field '{field}' references missing file {path}; supply the "
                "external data file or inline the values"
            )
        return read_csv_matrix(path) if as_matrix else read_csv_vector(path)
    arr = np.asarray(value, dtype=float)
    if as_matrix and arr.ndim != 2:
        raise ModelFileError(f"field '{field}' must be a matrix (list of rows)")
    if not as_matrix:
        arr = np.atleast_1d(arr)
        if arr.ndim != 1:
            raise ModelFileError(f"field '{field}' must be a flat list")
    if not np.all(np.isfinite(arr)):
        raise ModelFileError(f"field '{field}' contains non-finite entries")
    return arr


def parse_model(path) -> ModelSpec:
    """Read and fully validate a model file.

    Raises ``ModelFileError`` with the offending field named for dimension
    mismatches, negative counts, non-finite entries, or missing blocks.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ModelFileError(f"{path}: top level must be a JSON object")
    return model_from_dict(raw, base=path.parent, name=str(path))


def model_from_dict(raw: dict, base: Path | None = None, name: str = "<dict>") -> ModelSpec:
    base = Path(".") if base is None else base
    known = {"schema", "options", "k", "n", "ab", "vertices", "prior",
             "counts_convention"}
    unknown = set(raw) - known
    if unknown:
        raise ModelFileError(f"{name}: unknown fields {sorted(unknown)}")

    def fail(field: str, msg) -> ModelFileError:
        return ModelFileError(f"{name}: field '{field}': {msg}")

    if "options" not in raw:
        raise fail("options", "is required")
    try:
        layout = ItemLayout(tuple(int(j) for j in raw["options"]))
    except (TypeError, ValueError) as exc:
        raise fail("options", exc) from exc

    ab = vertices = None
    if "ab" in raw and "vertices" in raw:
        raise ModelFileError(f"{name}: give either 'ab' or 'vertices', not both")
    if "ab" in raw:
        block = raw["ab"]
        if not isinstance(block, dict) or set(block) != {"A", "b"}:
            raise fail("ab", "must be an object with exactly the keys A and b")
        A = _resolve(block["A"], base, "ab.A", as_matrix=True)
        b = _resolve(block["b"], base, "ab.b", as_matrix=False)
        try:
            ab = AbPolytope(A, b)
        except ValueError as exc:
            raise fail("ab", exc) from exc
        if ab.n_rows and ab.dim != layout.dim:
            raise fail(
                "ab.A",
                f"has {ab.dim} columns but the layout implies "
                f"{layout.dim} free parameters",
            )
    elif "vertices" in raw:
        block = raw["vertices"]
        if not isinstance(block, dict) or set(block) != {"V"}:
            raise fail("vertices", "must be an object with exactly the key V")
        V = _resolve(block["V"], base, "vertices.V", as_matrix=True)
        try:
            vertices = VPolytope(V)
            vertices.check_layout(layout)
        except ValueError as exc:
            raise fail("vertices.V", exc) from exc
    else:
        raise ModelFileError(
            f"{name}: a constraint block ('ab' or 'vertices') is required"
        )

    prior_raw = raw.get("prior", 1.0)
    if isinstance(prior_raw, (int, float)):
        beta = np.full(layout.total_categories, float(prior_raw))
    else:
        beta = _resolve(prior_raw, base, "prior", as_matrix=False)
        if beta.size == 1:
            beta = np.full(layout.total_categories, float(beta[0]))
    try:
        prior = DirichletPrior(beta)
        prior.check_layout(layout)
    except ValueError as exc:
        raise fail("prior", exc) from exc

    counts = None
    convention = None
    if "k" in raw:
        k = _resolve(raw["k"], base, "k", as_matrix=False)
        if np.any(k < 0) or np.any(k != np.round(k)):
            raise fail("k", "counts must be nonnegative integers")
        k = k.astype(np.int64)
        n_raw = raw.get("n")
        if n_raw is not None:
            n = _resolve(n_raw, base, "n", as_matrix=False)
            if np.any(n < 0) or np.any(n != np.round(n)):
                raise fail("n", "totals must be nonnegative integers")
            n = n.astype(np.int64)
            if n.size not in (1, layout.n_items):
                raise fail(
                    "n", f"needs 1 or {layout.n_items} entries, got {n.size}"
                )
        else:
            n = None
        try:
            if k.size == layout.total_categories:
                counts = CountData.from_full(k, layout, n=n)
                convention = "full"
            elif k.size == layout.dim:
                if n is None:
                    raise fail("n", "is required when k lists free categories only")
                counts = CountData.from_free(k, n, layout)
                convention = "free"
            else:
                raise fail(
                    "k",
                    f"needs {layout.total_categories} (full) or {layout.dim} "
                    f"(free categories) entries, got {k.size}",
                )
        except ValueError as exc:
            if isinstance(exc, ModelFileError):
                raise
            raise fail("k", exc) from exc
    elif "n" in raw:
        raise fail("n", "was given without k")

    return ModelSpec(
        layout=layout,
        prior=prior,
        counts=counts,
        ab=ab,
        vertices=vertices,
        counts_convention=convention,
    )


def model_to_dict(spec: ModelSpec) -> dict:
    """Normalized, JSON-ready form of a model (counts stored full-length)."""
    out: dict = {
        "schema": MODEL_SCHEMA,
        "options": list(spec.layout.options),
        "prior": spec.prior.beta.tolist(),
    }
    if spec.counts is not None:
        out["k"] = spec.counts.k.tolist()
        out["n"] = spec.counts.n.tolist()
        out["counts_convention"] = spec.counts_convention or "full"
    if spec.ab is not None:
        out["ab"] = {"A": [row.tolist() for row in spec.ab.A],
                     "b": spec.ab.b.tolist()}
    else:
        out["vertices"] = {"V": [row.tolist() for row in spec.vertices.V]}
    return out


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(dumps_canonical(model_to_dict(spec)))


def dumps_canonical(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed layout, trailing newline)."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def strip_timing(report: dict) -> dict:
    """Report with timing fields removed, for byte-level comparisons."""
    return {k: v for k, v in report.items() if k != "timing"}
