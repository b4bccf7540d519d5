"""Before/after robustness tables, complexity rows and their figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from robusttc import plotting
from robusttc.advtrain import compare, deltas_to_csv
from robusttc.attacks import RobustnessReport, reports_to_csv
from robusttc.errors import GridMismatch
from robusttc.hwcost import cost_report


def complexity_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "params", "flops", "max_tensor", "clean_before", "clean_after"])
    for r in rows:
        w.writerow([r["model"], r["params"], r["flops"], r["max_tensor"],
                    "" if r.get("clean_before") is None else f"{100 * r['clean_before']:.2f}",
                    "" if r.get("clean_after") is None else f"{100 * r['clean_after']:.2f}"])
    return buf.getvalue()


def complexity_row(name, spec, before=None, after=None) -> dict:
    c = cost_report(spec)
    return {"model": name, "params": c.params, "flops": c.flops, "max_tensor": c.max_tensor,
            "clean_before": None if before is None else before.clean,
            "clean_after": None if after is None else after.clean}


def write_report(out_dir, before: list[RobustnessReport], after: list[RobustnessReport] = (),
                 specs: dict | None = None, figures: bool = True) -> dict[str, Path]:
    """Write the delimited tables (and figures) for paired before/after reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    before, after = list(before), list(after)
    if after and len(after) != len(before):
        raise GridMismatch("need one 'after' report per 'before' report")
    grids = {tuple(r.grid) for r in before + after}
    if len(grids) > 1:
        raise GridMismatch("all reports must share one epsilon grid")
    paths = {"before": out / "before.csv"}
    paths["before"].write_text(reports_to_csv(before))
    deltas = []
    if after:
        deltas = [compare(b, a) for b, a in zip(before, after)]
        paths["after"] = out / "after.csv"
        paths["after"].write_text(reports_to_csv(after))
        paths["delta"] = out / "delta.csv"
        paths["delta"].write_text(deltas_to_csv(deltas))
    summary = {"before": [r.to_dict() for r in before], "after": [r.to_dict() for r in after],
               "delta": [d.to_dict() for d in deltas]}
    if specs:
        rows = []
        for i, b in enumerate(before):
            spec = specs.get(b.model_name)
            if spec is not None:
                rows.append(complexity_row(b.model_name, spec, b, after[i] if after else None))
        paths["complexity"] = out / "complexity.csv"
        paths["complexity"].write_text(complexity_csv(rows))
        summary["complexity"] = rows
    paths["summary"] = out / "report.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))
    if figures:
        paths["robustness_fig"] = plotting.plot_robustness(out / "robustness.png", before, after)
        if deltas:
            paths["delta_fig"] = plotting.plot_delta(out / "delta.png", deltas)
    return paths
