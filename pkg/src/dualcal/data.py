"""Dual-frame sample data model, file ingestion and validation.

A sample is stored column-wise: one numpy array per field, aligned on the
unit order.  Domain labels are explicit per unit (``a``, ``ab``, ``ba``,
``b``); ``ab`` and ``ba`` are the overlap domain seen from frame A and
frame B respectively.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np


class SampleValidationError(ValueError):
    """Raised when input data violates the sample or metadata invariants."""


class DomainLabel(str, enum.Enum):
    a = "a"
    ab = "ab"
    ba = "ba"
    b = "b"


DOMAINS = ("a", "ab", "ba", "b")
FRAME_A_DOMAINS = ("a", "ab")
FRAME_B_DOMAINS = ("ba", "b")

RESERVED_COLUMNS = ("id", "domain", "d_A", "d_B", "stratum_A", "stratum_B")


@dataclass(frozen=True)
class UnitRecord:
    id: str
    domain: str
    d_A: float | None = None
    d_B: float | None = None
    stratum_A: str | None = None
    stratum_B: str | None = None
    y: Mapping[str, float] = field(default_factory=dict)
    aux: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class FrameMeta:
    """Frame-level known quantities.

    Missing values are ``None``, never 0: ``N_ab = 0`` is a valid known size.
    ``group_totals`` maps ``(group, scope)`` to a count, where scope is a
    domain label (``a``, ``ab``, ``b``) or a frame (``A``, ``B``).
    ``numeric_totals`` maps ``(variable, scope)`` with scope in ``A``, ``B``,
    ``U`` to a known total.
    """

    N_A: float | None = None
    N_B: float | None = None
    N_ab: float | None = None
    group_totals: Mapping[tuple[str, str], float] = field(default_factory=dict)
    numeric_totals: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("N_A", "N_B", "N_ab"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise SampleValidationError(f"{name} must be nonnegative, got {value}")
        if self.sizes_known:
            if self.N_ab > min(self.N_A, self.N_B):
                raise SampleValidationError("N_ab exceeds min(N_A, N_B)")
            if self.N_a <= 0 or self.N_b <= 0:
                raise SampleValidationError("N_a and N_b must be positive")
        self._check_group_totals()

    @property
    def sizes_known(self) -> bool:
        return None not in (self.N_A, self.N_B, self.N_ab)

    @property
    def N_a(self) -> float | None:
        if self.N_A is None or self.N_ab is None:
            return None
        return self.N_A - self.N_ab

    @property
    def N_b(self) -> float | None:
        if self.N_B is None or self.N_ab is None:
            return None
        return self.N_B - self.N_ab

    @property
    def N(self) -> float | None:
        if not self.sizes_known:
            return None
        return self.N_A + self.N_B - self.N_ab

    def domain_size(self, scope: str) -> float | None:
        return {"a": self.N_a, "ab": self.N_ab, "ba": self.N_ab, "b": self.N_b,
                "A": self.N_A, "B": self.N_B, "U": self.N}[scope]

    def numeric_total(self, name: str, scope: str) -> float:
        try:
            return self.numeric_totals[(name, scope)]
        except KeyError:
            raise SampleValidationError(
                f"missing total for variable {name!r} on scope {scope!r}") from None

    def groups(self) -> list[str]:
        seen = []
        for group, _ in self.group_totals:
            if group not in seen:
                seen.append(group)
        return seen

    def _check_group_totals(self):
        sums: dict[str, float] = {}
        for (group, scope), count in self.group_totals.items():
            if scope not in ("a", "ab", "b", "A", "B"):
                raise SampleValidationError(f"unknown group-total scope {scope!r}")
            sums[scope] = sums.get(scope, 0.0) + count
        for scope, total in sums.items():
            size = self.domain_size(scope)
            if size is not None and not math.isclose(total, size, rel_tol=1e-9):
                raise SampleValidationError(
                    f"group totals for {scope!r} sum to {total}, expected {size}")


def _float_column(values: Iterable) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in values], dtype=float)


@dataclass(frozen=True, eq=False)
class DualFrameSample:
    """Pooled sample ``s = s_a + s_ab + s_ba + s_b``.

    Attributes
    ----------
    ids : ndarray of str
    domain : ndarray of str
        One of ``a``, ``ab``, ``ba``, ``b`` per unit.
    d_A, d_B : ndarray of float
        Design weights, ``nan`` where absent.
    stratum_A, stratum_B : ndarray of object or None
    y, aux : dict of name -> ndarray
    meta : FrameMeta
    """

    ids: np.ndarray
    domain: np.ndarray
    d_A: np.ndarray
    d_B: np.ndarray
    stratum_A: np.ndarray | None = None
    stratum_B: np.ndarray | None = None
    y: Mapping[str, np.ndarray] = field(default_factory=dict)
    aux: Mapping[str, np.ndarray] = field(default_factory=dict)
    meta: FrameMeta = field(default_factory=FrameMeta)

    def __post_init__(self):
        n = len(self.ids)
        for name in ("domain", "d_A", "d_B"):
            if len(getattr(self, name)) != n:
                raise SampleValidationError(f"column {name!r} has wrong length")
        for mapping in (self.y, self.aux):
            for name, col in mapping.items():
                if len(col) != n:
                    raise SampleValidationError(f"column {name!r} has wrong length")
        bad = ~np.isin(self.domain, DOMAINS)
        if bad.any():
            raise SampleValidationError(
                f"unknown domain label {self.domain[bad][0]!r}")

    @classmethod
    def from_records(cls, records: Iterable[UnitRecord], meta: FrameMeta | None = None):
        records = list(records)
        y_names = sorted({k for r in records for k in r.y})
        aux_names = sorted({k for r in records for k in r.aux})

        def strata(attr):
            col = [getattr(r, attr) for r in records]
            if all(v is None for v in col):
                return None
            return np.array(col, dtype=object)

        return cls(
            ids=np.array([str(r.id) for r in records], dtype=object),
            domain=np.array([str(getattr(r.domain, "value", r.domain)) for r in records]),
            d_A=_float_column(r.d_A for r in records),
            d_B=_float_column(r.d_B for r in records),
            stratum_A=strata("stratum_A"),
            stratum_B=strata("stratum_B"),
            y={k: _float_column(r.y.get(k) for r in records) for k in y_names},
            aux={k: _float_column(r.aux.get(k) for r in records) for k in aux_names},
            meta=meta if meta is not None else FrameMeta(),
        )

    def records(self) -> list[UnitRecord]:
        out = []
        for i in range(len(self)):
            out.append(UnitRecord(
                id=str(self.ids[i]),
                domain=str(self.domain[i]),
                d_A=None if np.isnan(self.d_A[i]) else float(self.d_A[i]),
                d_B=None if np.isnan(self.d_B[i]) else float(self.d_B[i]),
                stratum_A=None if self.stratum_A is None else self.stratum_A[i],
                stratum_B=None if self.stratum_B is None else self.stratum_B[i],
                y={k: float(v[i]) for k, v in self.y.items() if not np.isnan(v[i])},
                aux={k: float(v[i]) for k, v in self.aux.items() if not np.isnan(v[i])},
            ))
        return out

    def __len__(self) -> int:
        return len(self.ids)

    @cached_property
    def masks(self) -> dict[str, np.ndarray]:
        return {label: self.domain == label for label in DOMAINS}

    @property
    def in_sample_A(self) -> np.ndarray:
        """Units drawn from frame A (``s_A = s_a + s_ab``)."""
        return self.masks["a"] | self.masks["ab"]

    @property
    def in_sample_B(self) -> np.ndarray:
        return self.masks["ba"] | self.masks["b"]

    @property
    def in_frame_A(self) -> np.ndarray:
        """Population membership of frame A; overlap units belong to both frames."""
        return ~self.masks["b"]

    @property
    def in_frame_B(self) -> np.ndarray:
        return ~self.masks["a"]

    @property
    def counts(self) -> dict[str, int]:
        return {label: int(m.sum()) for label, m in self.masks.items()}

    @property
    def n_A(self) -> int:
        return int(self.in_sample_A.sum())

    @property
    def n_B(self) -> int:
        return int(self.in_sample_B.sum())

    def variable(self, name: str) -> np.ndarray:
        if name in self.y:
            return self.y[name]
        if name in self.aux:
            return self.aux[name]
        raise KeyError(f"unknown variable {name!r}")

    @property
    def variable_names(self) -> list[str]:
        return list(self.y) + [k for k in self.aux if k not in self.y]

    def take(self, index) -> "DualFrameSample":
        """Sub-sample by boolean mask or integer index."""
        def pick(col):
            return None if col is None else col[index]
        return DualFrameSample(
            ids=self.ids[index], domain=self.domain[index],
            d_A=self.d_A[index], d_B=self.d_B[index],
            stratum_A=pick(self.stratum_A), stratum_B=pick(self.stratum_B),
            y={k: v[index] for k, v in self.y.items()},
            aux={k: v[index] for k, v in self.aux.items()},
            meta=self.meta)

    def with_weights(self, d_A=None, d_B=None) -> "DualFrameSample":
        return replace(self,
                       d_A=self.d_A if d_A is None else np.asarray(d_A, dtype=float),
                       d_B=self.d_B if d_B is None else np.asarray(d_B, dtype=float))

    def with_meta(self, meta: FrameMeta) -> "DualFrameSample":
        return replace(self, meta=meta)


def validate_for_approach(sample: DualFrameSample, approach: str = "dual") -> list[str]:
    """List every requirement the sample violates under ``approach``.

    An empty list means the sample is usable.  Never raises for data problems.
    """
    if approach not in ("dual", "single"):
        raise ValueError(f"approach must be 'dual' or 'single', got {approach!r}")
    problems = []
    masks = sample.masks
    for label in DOMAINS:
        if not masks[label].any():
            problems.append(f"domain {label} unsampled")

    def check_weight(col, mask, name):
        for i in np.flatnonzero(mask):
            value = col[i]
            if np.isnan(value):
                problems.append(f"unit {sample.ids[i]}: {name} missing")
            elif value <= 0:
                problems.append(f"unit {sample.ids[i]}: non-positive weight {name}={value}")

    check_weight(sample.d_A, sample.in_sample_A, "d_A")
    check_weight(sample.d_B, sample.in_sample_B, "d_B")
    if approach == "single":
        check_weight(sample.d_B, masks["ab"], "d_B")
        check_weight(sample.d_A, masks["ba"], "d_A")
    return problems


def require_valid(sample: DualFrameSample, approach: str = "dual",
                  domains: Iterable[str] | None = None):
    """Raise :class:`SampleValidationError` on weight problems.

    Only the domains in ``domains`` are required to be sampled.
    """
    problems = validate_for_approach(sample, approach)
    wanted = set(domains) if domains is not None else set()
    fatal = [p for p in problems
             if not p.endswith("unsampled") or p.split()[1] in wanted]
    if fatal:
        raise SampleValidationError("; ".join(fatal))


# --------------------------------------------------------------------------
# File I/O


def _parse_optional_float(text: str) -> float | None:
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan"):
        return None
    return float(text)


def load_sample(path: str | os.PathLike, schema: Mapping | None = None,
                approach: str = "dual", meta: FrameMeta | None = None) -> DualFrameSample:
    """Read a sample CSV.

    ``schema`` may rename the reserved columns (``{"id": "unit"}``) and list
    which of the remaining columns are auxiliary (``{"aux": ["x"]}``); all
    other columns are response variables.

    Raises
    ------
    SampleValidationError
        Missing column, non-positive or missing weight, unknown domain
        label, duplicate id.
    """
    schema = dict(schema or {})
    aux_names = set(schema.pop("aux", []))
    rename = {key: schema.get(key, key) for key in RESERVED_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("id", "domain"):
            if rename[key] not in header:
                raise SampleValidationError(f"missing column {rename[key]!r}")
        needed = ["d_A"] if approach == "dual" else ["d_A", "d_B"]
        for key in needed:
            if rename[key] not in header:
                raise SampleValidationError(f"missing column {rename[key]!r}")
        reserved = {rename[k] for k in RESERVED_COLUMNS}
        value_cols = [c for c in header if c not in reserved]
        missing_aux = aux_names - set(value_cols)
        if missing_aux:
            raise SampleValidationError(f"missing column {sorted(missing_aux)[0]!r}")
        rows = list(reader)

    records = []
    seen = set()
    for line, row in enumerate(rows, start=2):
        uid = row[rename["id"]].strip()
        if uid in seen:
            raise SampleValidationError(f"duplicate id {uid!r} (line {line})")
        seen.add(uid)
        label = row[rename["domain"]].strip()
        if label not in DOMAINS:
            raise SampleValidationError(f"unknown domain label {label!r} (line {line})")

        def opt(key):
            col = rename[key]
            return row.get(col, "") if col in header else ""

        d_A = _parse_optional_float(opt("d_A"))
        d_B = _parse_optional_float(opt("d_B"))
        for name, value in (("d_A", d_A), ("d_B", d_B)):
            if value is not None and value <= 0:
                raise SampleValidationError(
                    f"non-positive weight {name}={value} for unit {uid!r}")
        y = {}
        aux = {}
        for col in value_cols:
            value = _parse_optional_float(row[col])
            if value is None:
                continue
            (aux if col in aux_names else y)[col] = value
        records.append(UnitRecord(
            id=uid, domain=label, d_A=d_A, d_B=d_B,
            stratum_A=opt("stratum_A").strip() or None,
            stratum_B=opt("stratum_B").strip() or None,
            y=y, aux=aux))

    sample = DualFrameSample.from_records(records, meta)
    # keep every declared column even if entirely empty
    y_cols = {c: sample.y.get(c, np.full(len(sample), np.nan))
              for c in value_cols if c not in aux_names}
    aux_cols = {c: sample.aux.get(c, np.full(len(sample), np.nan))
                for c in value_cols if c in aux_names}
    sample = replace(sample, y=y_cols, aux=aux_cols)
    problems = [p for p in validate_for_approach(sample, approach)
                if not p.endswith("unsampled")]
    if problems:
        raise SampleValidationError("; ".join(problems))
    return sample


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def save_sample(sample: DualFrameSample, path: str | os.PathLike):
    """Write a sample CSV readable by :func:`load_sample` (floats via ``repr``)."""
    value_cols = list(sample.y) + list(sample.aux)
    header = list(RESERVED_COLUMNS) + value_cols
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(sample)):
            row = [sample.ids[i], sample.domain[i],
                   _fmt(float(sample.d_A[i])), _fmt(float(sample.d_B[i])),
                   _fmt(None if sample.stratum_A is None else sample.stratum_A[i]),
                   _fmt(None if sample.stratum_B is None else sample.stratum_B[i])]
            row += [_fmt(float(sample.variable(c)[i])) for c in value_cols]
            writer.writerow(row)
    return {"aux": list(sample.aux)}


# --------------------------------------------------------------------------
# key = value config files


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SampleValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def _number(text: str) -> float:
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def parse_meta(entries: Mapping[str, str]) -> FrameMeta:
    """Build :class:`FrameMeta` from ``N_A``, ``N_B``, ``N_ab``,
    ``totals.<name>.<scope>`` and ``groups.<group>.<scope>`` entries.
    Unrelated keys are ignored."""
    sizes = {}
    numeric = {}
    groups = {}
    for key, value in entries.items():
        if key in ("N_A", "N_B", "N_ab"):
            sizes[key] = _number(value)
        elif key.startswith("totals."):
            name, _, scope = key[len("totals."):].rpartition(".")
            if scope not in ("A", "B", "U") or not name:
                raise SampleValidationError(f"bad totals key {key!r}")
            numeric[(name, scope)] = float(value)
        elif key.startswith("groups."):
            group, _, scope = key[len("groups."):].rpartition(".")
            groups[(group, scope)] = _number(value)
    return FrameMeta(numeric_totals=numeric, group_totals=groups, **sizes)


def load_meta(path: str | os.PathLike) -> FrameMeta:
    return parse_meta(read_key_values(path))


def format_meta(meta: FrameMeta) -> str:
    lines = []
    for key in ("N_A", "N_B", "N_ab"):
        value = getattr(meta, key)
        if value is not None:
            lines.append(f"{key} = {value!r}")
    for (name, scope), value in meta.numeric_totals.items():
        lines.append(f"totals.{name}.{scope} = {float(value)!r}")
    for (group, scope), value in meta.group_totals.items():
        lines.append(f"groups.{group}.{scope} = {value!r}")
    return "\n".join(lines) + "\n"
