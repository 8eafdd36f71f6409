"""Constraint builders: per-unit auxiliary rows ``x_k`` and known totals ``t_x``.

Frame membership is a population property: an overlap unit belongs to both
frames whichever sample it came from, so ``ab`` and ``ba`` units are
gated into both the A and the B columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..data import DualFrameSample, FrameMeta, SampleValidationError
from ..estimators import check_eta

Column = Callable[[DualFrameSample], np.ndarray]


@dataclass(frozen=True)
class AuxSpec:
    """Named constraint columns with their target totals."""

    names: tuple[str, ...]
    columns: tuple[Column, ...]
    targets: np.ndarray
    case_tag: str = "custom"
    variables: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (len(self.names) == len(self.columns) == len(self.targets)):
            raise ValueError("columns and targets differ in length")
        if len(self.names) == 0:
            raise ValueError("an AuxSpec needs at least one column")

    @property
    def p(self) -> int:
        return len(self.names)

    def matrix(self, sample: DualFrameSample) -> np.ndarray:
        X = np.column_stack([np.asarray(col(sample), dtype=float) for col in self.columns])
        return X

    def extend(self, names, columns, targets, case_tag=None, variables=()) -> "AuxSpec":
        return AuxSpec(self.names + tuple(names), self.columns + tuple(columns),
                       np.concatenate([self.targets, np.asarray(targets, dtype=float)]),
                       case_tag or self.case_tag, self.variables + tuple(variables))


def _indicator(*labels: str) -> Column:
    def column(sample):
        out = np.zeros(len(sample))
        for label in labels:
            out[sample.masks[label]] = 1.0
        return out
    column.__name__ = "delta_" + "+".join(labels)
    return column


def _gated(variable: str, frame: str) -> Column:
    def column(sample):
        gate = {"A": sample.in_frame_A, "B": sample.in_frame_B,
                "U": np.ones(len(sample), dtype=bool)}[frame]
        values = sample.variable(variable)
        if np.isnan(values[gate]).any():
            bad = sample.ids[gate & np.isnan(values)][0]
            raise SampleValidationError(
                f"variable {variable!r} missing on unit {bad!r} of frame {frame}")
        return np.where(gate, values, 0.0)
    column.__name__ = f"{variable}[{frame}]"
    return column


def _require(meta: FrameMeta, *names: str):
    for name in names:
        if getattr(meta, name) is None:
            raise SampleValidationError(f"missing {name}")


def build_aux_case1(meta: FrameMeta, eta: float | None = None,
                    approach: str = "dual") -> AuxSpec:
    """All three sizes known: domain indicators (complete post-stratification)."""
    _require(meta, "N_A", "N_B", "N_ab")
    if approach == "single":
        return AuxSpec(("a", "ab+ba", "b"),
                       (_indicator("a"), _indicator("ab", "ba"), _indicator("b")),
                       np.array([meta.N_a, meta.N_ab, meta.N_b], dtype=float), "case1")
    eta = check_eta(eta)
    return AuxSpec(("a", "ab", "ba", "b"),
                   tuple(_indicator(d) for d in ("a", "ab", "ba", "b")),
                   np.array([meta.N_a, eta * meta.N_ab, (1 - eta) * meta.N_ab, meta.N_b],
                            dtype=float), "case1")


def build_aux_case2(meta: FrameMeta) -> AuxSpec:
    """Only frame sizes known: calibrate on the frame margins."""
    _require(meta, "N_A", "N_B")
    return AuxSpec(("A", "B"),
                   (_indicator("a", "ab", "ba"), _indicator("b", "ab", "ba")),
                   np.array([meta.N_A, meta.N_B], dtype=float), "case2")


def _frame_numeric(meta: FrameMeta, x_A: str, x_B: str):
    names = (f"{x_A}[A]", f"{x_B}[B]")
    cols = (_gated(x_A, "A"), _gated(x_B, "B"))
    targets = [meta.numeric_total(x_A, "A"), meta.numeric_total(x_B, "B")]
    return names, cols, targets


def build_aux_case3(meta: FrameMeta, eta: float | None, x_A: str, x_B: str | None = None,
                    approach: str = "dual") -> AuxSpec:
    """Sizes known plus frame totals ``X_A`` and ``X_B`` (``x_B`` defaults to ``x_A``)."""
    x_B = x_B or x_A
    spec = build_aux_case1(meta, eta, approach)
    return spec.extend(*_frame_numeric(meta, x_A, x_B), case_tag="case3")


def build_aux_case4(meta: FrameMeta, x_A: str, x_B: str | None = None) -> AuxSpec:
    """Frame sizes and frame totals ``X_A``, ``X_B`` known, ``N_ab`` unknown."""
    x_B = x_B or x_A
    return build_aux_case2(meta).extend(*_frame_numeric(meta, x_A, x_B), case_tag="case4")


def build_aux_xa(meta: FrameMeta, eta: float | None, x_A: str, approach: str = "dual") -> AuxSpec:
    """Sizes known plus the frame-A total of ``x_A``."""
    return build_aux_case1(meta, eta, approach).extend(
        (f"{x_A}[A]",), (_gated(x_A, "A"),), [meta.numeric_total(x_A, "A")], case_tag="xa")


def build_aux_xa_zb(meta: FrameMeta, x_A: str, z_B: str) -> AuxSpec:
    """Frame sizes plus ``X_A`` on frame A and ``Z_B`` on frame B."""
    return build_aux_case2(meta).extend(*_frame_numeric(meta, x_A, z_B), case_tag="xa_zb")


def build_aux_x_whole(meta: FrameMeta, eta: float | None, x: str, approach: str = "dual") -> AuxSpec:
    """Sizes known plus the whole-population total of ``x``."""
    return build_aux_case1(meta, eta, approach).extend(
        (f"{x}[U]",), (_gated(x, "U"),), [meta.numeric_total(x, "U")], case_tag="x_whole")


def group_labels(values) -> np.ndarray:
    """Group ids as strings; integral floats render without a decimal point."""
    out = []
    for v in values:
        if isinstance(v, (float, np.floating)):
            if np.isnan(v):
                out.append(None)
            elif float(v).is_integer():
                out.append(str(int(v)))
            else:
                out.append(repr(float(v)))
        else:
            out.append(None if v is None else str(v))
    return np.array(out, dtype=object)


def _group_indicator(group_var: str, group: str, *labels: str) -> Column:
    base = _indicator(*labels)

    def column(sample):
        return base(sample) * (group_labels(sample.variable(group_var)) == group)
    column.__name__ = f"{base.__name__}*[{group_var}={group}]"
    return column


def build_group_poststrat(meta: FrameMeta, eta: float | None, group_var: str,
                          complete: bool = True, approach: str = "dual") -> AuxSpec:
    """Group-by-domain post-stratification.

    ``complete=True`` needs per-domain group counts (``groups.<h>.a``,
    ``.ab``, ``.b``) and builds four columns per group (three for the single
    approach); ``complete=False`` needs per-frame counts (``.A``, ``.B``)
    and calibrates on the frame margins within each group.
    """
    groups = meta.groups()
    if not groups:
        raise SampleValidationError("no group totals in metadata")
    names, cols, targets = [], [], []

    def total(group, scope):
        try:
            return float(meta.group_totals[(group, scope)])
        except KeyError:
            raise SampleValidationError(
                f"missing group total for group {group!r} scope {scope!r}") from None

    if complete:
        if approach == "single":
            layout = [("a", ("a",), 1.0), ("ab+ba", ("ab", "ba"), 1.0), ("b", ("b",), 1.0)]
        else:
            eta = check_eta(eta)
            layout = [("a", ("a",), 1.0), ("ab", ("ab",), eta),
                      ("ba", ("ba",), 1.0 - eta), ("b", ("b",), 1.0)]
        for g in groups:
            for name, labels, share in layout:
                scope = "ab" if name in ("ab", "ba", "ab+ba") else name
                names.append(f"{name}|{g}")
                cols.append(_group_indicator(group_var, g, *labels))
                targets.append(share * total(g, scope))
        tag = "groups_complete"
    else:
        for g in groups:
            names += [f"A|{g}", f"B|{g}"]
            cols += [_group_indicator(group_var, g, "a", "ab", "ba"),
                     _group_indicator(group_var, g, "b", "ab", "ba")]
            targets += [total(g, "A"), total(g, "B")]
        tag = "groups_margins"
    return AuxSpec(tuple(names), tuple(cols), np.array(targets, dtype=float), tag)


def overlap_mean_column(eta: float, meta: FrameMeta, y: str) -> Column:
    eta = check_eta(eta)
    if eta in (0.0, 1.0):
        raise ValueError("overlap-mean constraint undefined for eta in {0, 1}")
    _require(meta, "N_ab")

    def column(sample):
        values = sample.variable(y)
        m = sample.masks
        out = np.zeros(len(sample))
        out[m["ab"]] = values[m["ab"]] / (eta * meta.N_ab)
        out[m["ba"]] = -values[m["ba"]] / ((1 - eta) * meta.N_ab)
        return out
    column.__name__ = f"overlap_mean[{y}]"
    return column


def build_overlap_mean_constraint(spec: AuxSpec, eta: float, meta: FrameMeta, y: str) -> AuxSpec:
    """Append the common overlap-mean restriction for variable ``y``.

    Together with the domain-total constraints of case 1 (or 3) this forces
    the calibrated means of ``y`` over s_ab and s_ba to coincide.  The result
    is specific to ``y``.
    """
    if spec.case_tag not in ("case1", "case3"):
        raise ValueError("the overlap-mean constraint extends case1 or case3 specs only")
    return spec.extend((f"overlap_mean[{y}]",), (overlap_mean_column(eta, meta, y),), [0.0],
                       case_tag=spec.case_tag + "+overlap", variables=(y,))


def build_aux(case, meta: FrameMeta, eta: float | None = None, approach: str = "dual",
              x_vars: Sequence[str] = (), group_var: str | None = None) -> AuxSpec:
    """Dispatch on a case name: ``1``-``4``, ``xa``, ``xa_zb``, ``x_whole``,
    ``groups_complete``, ``groups_margins``."""
    case = str(case)
    x_vars = list(x_vars)

    def xs(k):
        if len(x_vars) < k:
            raise SampleValidationError(f"aux case {case} needs {k} variable name(s)")
        return x_vars

    if case in ("1", "case1"):
        return build_aux_case1(meta, eta, approach)
    if case in ("2", "case2"):
        return build_aux_case2(meta)
    if case in ("3", "case3"):
        v = xs(1)
        return build_aux_case3(meta, eta, v[0], v[1] if len(v) > 1 else None, approach)
    if case in ("4", "case4"):
        v = xs(1)
        return build_aux_case4(meta, v[0], v[1] if len(v) > 1 else None)
    if case == "xa":
        return build_aux_xa(meta, eta, xs(1)[0], approach)
    if case == "xa_zb":
        v = xs(2)
        return build_aux_xa_zb(meta, v[0], v[1])
    if case == "x_whole":
        return build_aux_x_whole(meta, eta, xs(1)[0], approach)
    if case in ("groups_complete", "groups_margins"):
        if group_var is None:
            raise SampleValidationError("group post-stratification needs a group variable")
        return build_group_poststrat(meta, eta, group_var, case == "groups_complete", approach)
    raise ValueError(f"unknown aux case {case!r}")
