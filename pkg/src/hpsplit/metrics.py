"""Oracle loss, the two optimality ratios, and CSV persistence."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .nn import predict

DEGENERATE_INF = 1e-12

DETAIL_FIELDS = ("scenario", "n", "replication", "grid_index", "val_loss", "l0", "diverged")
SUMMARY_FIELDS = ("scenario", "n", "reps", "ratio_a", "ratio_a_se", "ratio_b",
                  "ratio_b_se", "mean_selected_loss", "mean_inf_loss", "excluded_count")


class ContractError(ValueError):
    pass


def fmt(x) -> str:
    """Real numbers are serialized with 17 significant digits."""
    return f"{float(x):.17g}"


def compute_L0(network, test_set) -> float:
    """Mean squared deviation of the network from E(Y|X) over the test set."""
    mean = getattr(test_set, "true_mean", None)
    if mean is None:
        raise ContractError("test set carries no true_mean")
    mean = np.asarray(mean, dtype=float)
    if mean.size == 0:
        raise ContractError("empty test set")
    if not np.all(np.isfinite(mean)):
        raise ContractError("true_mean contains non-finite values")
    r = predict(network, test_set.inputs) - mean
    return float(np.mean(r * r))


@dataclass
class RatioSummary:
    scenario: str
    n: int
    reps: int
    ratio_a: float
    ratio_a_se: float
    ratio_b: float
    ratio_b_se: float
    mean_selected_loss: float
    mean_inf_loss: float
    excluded_count: int
    diverged_count: int = 0

    def row(self):
        return [self.scenario, str(self.n), str(self.reps), fmt(self.ratio_a),
                fmt(self.ratio_a_se), fmt(self.ratio_b), fmt(self.ratio_b_se),
                fmt(self.mean_selected_loss), fmt(self.mean_inf_loss),
                str(self.excluded_count)]


def _jackknife_se(sel, inf):
    r = sel.size
    if r < 2:
        return float("nan")
    s_sel, s_inf = sel.sum(), inf.sum()
    loo = (s_sel - sel) / (s_inf - inf)
    return float(np.sqrt((r - 1) / r * np.sum((loo - loo.mean()) ** 2)))


def aggregate_ratios(records, scenario="", n=None) -> RatioSummary:
    """Average L0(selected)/inf L0 (ratio_a) and the ratio of averages (ratio_b).

    Replications whose inf L0 falls below 1e-12 are excluded and counted.
    Records are sorted by replication id first so the result does not depend
    on their order.
    """
    records = sorted(records, key=lambda r: r.replication_id)
    if not records:
        raise ValueError("aggregate_ratios needs at least one record")
    sel, inf = [], []
    excluded = diverged = 0
    for rec in records:
        diverged += rec.diverged_count
        lo = rec.inf_l0
        if lo < DEGENERATE_INF:
            excluded += 1
            continue
        sel.append(rec.selected_l0)
        inf.append(lo)
    sel, inf = np.array(sel), np.array(inf)
    if n is None:
        n = records[0].n
    if sel.size == 0:
        nan = float("nan")
        return RatioSummary(scenario, n, 0, nan, nan, nan, nan, nan, nan, excluded, diverged)
    per_rep = sel / inf
    ratio_a = float(per_rep.mean())
    se_a = float(per_rep.std(ddof=1) / math.sqrt(per_rep.size)) if per_rep.size > 1 else float("nan")
    return RatioSummary(
        scenario=scenario, n=int(n), reps=int(sel.size),
        ratio_a=ratio_a, ratio_a_se=se_a,
        ratio_b=float(sel.mean() / inf.mean()), ratio_b_se=_jackknife_se(sel, inf),
        mean_selected_loss=float(sel.mean()), mean_inf_loss=float(inf.mean()),
        excluded_count=excluded, diverged_count=diverged,
    )


def detail_rows(scenario, records):
    for rec in sorted(records, key=lambda r: (r.n, r.replication_id)):
        for e in rec.entries:
            yield [scenario, str(rec.n), str(rec.replication_id), str(e.grid_index),
                   fmt(e.validation_loss), fmt(e.oracle_loss), str(int(e.diverged))]


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_records(records_by_scenario, summaries, output_dir, metadata=None):
    """Write detail.csv, summary.csv and metadata.json into ``output_dir``.

    ``records_by_scenario`` maps a scenario label to its replication records.
    Only metadata.json carries a timestamp. Returns the written paths.
    """
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {output_dir}: {exc}") from exc
    detail = os.path.join(output_dir, "detail.csv")
    summary = os.path.join(output_dir, "summary.csv")
    meta = os.path.join(output_dir, "metadata.json")
    rows = []
    for label, recs in records_by_scenario.items():
        rows.extend(detail_rows(label, recs))
    _write_csv(detail, DETAIL_FIELDS, rows)
    _write_csv(summary, SUMMARY_FIELDS, [s.row() for s in summaries])
    payload = dict(metadata or {})
    payload["summaries"] = [asdict(s) for s in summaries]
    try:
        with open(meta, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {meta}: {exc}") from exc
    return {"detail": detail, "summary": summary, "metadata": meta}


class CsvFormatError(ValueError):
    pass


def _parse_float(value, lineno, field):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise CsvFormatError(f"row {lineno}: bad value {value!r} for {field}") from None


def read_summary(path):
    """Parse summary.csv into RatioSummary objects; row numbers count the header as 1."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SUMMARY_FIELDS:
            raise CsvFormatError(f"row 1: expected header {','.join(SUMMARY_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SUMMARY_FIELDS):
                raise CsvFormatError(f"row {lineno}: expected {len(SUMMARY_FIELDS)} fields, got {len(row)}")
            d = dict(zip(SUMMARY_FIELDS, row))
            try:
                n, reps, excl = int(d["n"]), int(d["reps"]), int(d["excluded_count"])
            except ValueError:
                raise CsvFormatError(f"row {lineno}: n, reps and excluded_count must be integers") from None
            vals = {k: _parse_float(d[k], lineno, k) for k in SUMMARY_FIELDS[3:9]}
            out.append(RatioSummary(d["scenario"], n, reps, excluded_count=excl, **vals))
    return out


def read_detail(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DETAIL_FIELDS:
            raise CsvFormatError(f"row 1: expected header {','.join(DETAIL_FIELDS)}")
        for lineno, d in enumerate(reader, start=2):
            rows.append({
                "scenario": d["scenario"], "n": int(d["n"]),
                "replication": int(d["replication"]), "grid_index": int(d["grid_index"]),
                "val_loss": _parse_float(d["val_loss"], lineno, "val_loss"),
                "l0": _parse_float(d["l0"], lineno, "l0"),
                "diverged": d["diverged"] == "1",
            })
    return rows
