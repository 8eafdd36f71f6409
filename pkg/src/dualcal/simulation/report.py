"""Text and CSV rendering of Monte Carlo reports.

Rows are estimators; the single-frame and dual-frame results sit side by
side with RB%, 100*RMSE% and GE% each.
"""

from __future__ import annotations

import csv
import io

from .montecarlo import MonteCarloReport, format_number

CASE_TITLES = {
    None: "comparators",
    "1": "case 1: N_A, N_B, N_ab known",
    "2": "case 2: N_A, N_B known, N_ab unknown",
    "3": "case 3: N_A, N_B, N_ab, X_A, X_B known",
    "4": "case 4: N_A, N_B, X_A, X_B known, N_ab unknown",
}


def _blocks(report: MonteCarloReport):
    """Group summaries by case, pairing single and dual rows by name."""
    order = []
    table = {}
    for s in report.summaries:
        key = (s.spec.case, s.spec.name)
        if key not in table:
            table[key] = {}
            order.append(key)
        table[key][s.spec.approach] = s
    cases = []
    for case, _ in order:
        if case not in cases:
            cases.append(case)
    return [(case, [(name, table[(case, name)]) for c, name in order if c == case])
            for case in cases]


def header_lines(report: MonteCarloReport, version: str) -> list[str]:
    c = report.config
    return [
        f"dualcal {version}",
        f"seed = {report.seed}",
        f"scenario = {c.overlap}",
        f"sizes = {c.sizes}",
        f"replicates = {report.replicates}",
        f"n_A = {sum(c.n_A)} {tuple(c.n_A)}",
        f"n_B = {c.n_B}",
        f"N_A = {report.N_A}, N_B = {report.N_B}, N_ab = {report.N_ab}",
        f"Y = {report.Y!r}",
    ]


def render_text(report: MonteCarloReport, version: str) -> str:
    lines = header_lines(report, version)
    width = 12
    head = (f"{'estimator':<12}" + "".join(f"{h:>{width}}" for h in ("RB%", "100*RMSE%", "GE%"))
            + " |" + "".join(f"{h:>{width}}" for h in ("RB%", "100*RMSE%", "GE%")))
    lines += ["", f"{'':<12}{'single frame':^{3 * width}} |{'dual frame':^{3 * width}}", head]
    for case, rows in _blocks(report):
        lines += ["", CASE_TITLES.get(case, f"case {case}")]
        for name, cells in rows:
            line = f"{name:<12}"
            for i, approach in enumerate(("single", "dual")):
                s = cells.get(approach)
                vals = (None, None, None) if s is None else (s.rb, s.rmse100, s.ge)
                if i:
                    line += " |"
                line += "".join(f"{format_number(v):>{width}}" for v in vals)
            lines.append(line)
    ci_rows = [s for s in report.summaries if s.ci]
    if ci_rows:
        lines += ["", f"confidence intervals (level {report.ci_level})",
                  f"{'estimator':<28}{'method':<16}{'length':>14}{'inf%':>8}{'sup%':>8}{'cov%':>8}"]
        for s in ci_rows:
            for method, m in s.ci.items():
                lines.append(f"{s.spec.label:<28}{method:<16}{m.length:>14.1f}"
                             f"{m.inferior:>8.1f}{m.superior:>8.1f}{m.coverage:>8.1f}")
    failed = [s for s in report.summaries if s.failures or s.negative_weight_replicates]
    if failed:
        lines += ["", "diagnostics"]
        for s in failed:
            lines.append(f"{s.spec.label}: failures={s.failures} "
                         f"negative_weight_replicates={s.negative_weight_replicates}")
    return "\n".join(lines) + "\n"


def render_csv(report: MonteCarloReport, version: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for line in header_lines(report, version):
        buf.write(f"# {line}\n")
    cols = ["estimator", "approach", "case", "distance", "restricted", "rb_pct",
            "rmse100", "ge_pct", "n", "failures", "negative_weight_replicates"]
    methods = list(report.variance_methods)
    for m in methods:
        cols += [f"{m}_length", f"{m}_inf_pct", f"{m}_sup_pct", f"{m}_cov_pct"]
    writer.writerow(cols)
    for s in report.summaries:
        row = [s.spec.name, s.spec.approach, s.spec.case or "", s.spec.distance or "",
               int(s.spec.restricted), repr(s.rb), repr(s.rmse100),
               "" if s.ge is None else repr(s.ge), s.n, s.failures,
               s.negative_weight_replicates]
        for m in methods:
            ci = s.ci.get(m)
            row += ["", "", "", ""] if ci is None else [
                repr(ci.length), repr(ci.inferior), repr(ci.superior), repr(ci.coverage)]
        writer.writerow(row)
    return buf.getvalue()
