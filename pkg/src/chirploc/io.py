"""File formats: raw I/Q dumps, DPS CSV, and result tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from chirploc.locator import LocalizationResult
from chirploc.phase import DpsSequence
from chirploc.receiver import IqTrace

# long-format rows shared by sweeps and baselines
RESULT_FIELDS = ["method", "sweep_value", "seed", "gw_a", "gw_b", "K", "d_hat", "error_m", "peak"]
LOCALIZATION_FIELDS = ["row", "gw_a", "gw_b", "K", "d_hat", "peak", "x", "y", "z", "residual"]
DPS_FIELDS = ["index", "delta_radians", "magnitude", "flag"]

_INT_FIELDS = {"seed", "K", "index", "flag"}
_STR_FIELDS = {"method", "gw_a", "gw_b", "row"}


def format_value(value) -> str:
    """Locale-free text for a CSV cell; floats use the shortest round-trip form."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(value)


def parse_value(field: str, text: str):
    if text == "":
        return None
    if field in _STR_FIELDS:
        return text
    if field in _INT_FIELDS:
        return int(text)
    return float(text)


def write_rows(path, rows: Iterable[dict], fields=RESULT_FIELDS) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            unknown = set(row) - set(fields)
            if unknown:
                raise ValueError(f"unknown columns {sorted(unknown)}")
            writer.writerow([format_value(row.get(f)) for f in fields])


def read_rows(path) -> list:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return [
            {f: parse_value(f, cell) for f, cell in zip(header, line)}
            for line in reader
        ]


def localization_rows(result: LocalizationResult) -> list:
    rows = [
        {"row": "pair", "gw_a": a, "gw_b": b, "K": est.k, "d_hat": est.d_hat, "peak": est.peak}
        for (a, b), est in result.pairwise.items()
    ]
    if result.position is not None:
        x, y, z = (float(c) for c in result.position)
        rows.append({"row": "summary", "x": x, "y": y, "z": z, "residual": result.residual_norm})
    return rows


def write_localization_csv(path, result: LocalizationResult) -> None:
    write_rows(path, localization_rows(result), LOCALIZATION_FIELDS)


def localization_to_dict(result: LocalizationResult) -> dict:
    return {
        "position_m": None if result.position is None else [float(c) for c in result.position],
        "residual_norm_m": result.residual_norm,
        "iterations": result.iterations,
        "converged": result.converged,
        "singular": result.singular,
        "pairs": [
            {
                "gw_a": a,
                "gw_b": b,
                "K": est.k,
                "k_refined": est.k_refined,
                "d_hat_m": est.d_hat,
                "peak": est.peak,
            }
            for (a, b), est in result.pairwise.items()
        ],
    }


def write_dps_csv(path, seq: DpsSequence) -> None:
    rows = (
        {"index": i, "delta_radians": float(v), "magnitude": float(m), "flag": bool(f)}
        for i, (v, m, f) in enumerate(zip(seq.values, seq.magnitude, seq.flags))
    )
    write_rows(path, rows, DPS_FIELDS)


def read_dps_csv(path, f_s: float, t0: float = 0.0) -> DpsSequence:
    rows = read_rows(path)
    return DpsSequence(
        values=[r["delta_radians"] for r in rows],
        f_s=f_s,
        t0=t0,
        magnitude=[r["magnitude"] for r in rows],
        flags=[bool(r["flag"]) for r in rows],
    )


def write_iq(base, trace: IqTrace, fc: Optional[float] = None) -> tuple:
    """Write ``<base>.cf32`` (little-endian float32 I,Q,I,Q...) and ``<base>.json``."""
    base = Path(base)
    data = np.empty(2 * len(trace), dtype="<f4")
    data[0::2] = trace.i
    data[1::2] = trace.q
    raw = base.with_suffix(".cf32")
    meta = base.with_suffix(".json")
    raw.write_bytes(data.tobytes())
    center = fc if fc is not None else trace.fc
    meta.write_text(json.dumps({
        "datatype": "cf32_le",
        "sample_rate_hz": trace.f_s,
        "center_frequency_hz": center,
        "t0_s": trace.t0,
        "num_samples": len(trace),
    }, indent=2, sort_keys=True) + "\n")
    return raw, meta


def read_iq(base) -> IqTrace:
    base = Path(base)
    meta = json.loads(base.with_suffix(".json").read_text())
    if meta.get("datatype") != "cf32_le":
        raise ValueError(f"unsupported datatype {meta.get('datatype')!r}")
    data = np.frombuffer(base.with_suffix(".cf32").read_bytes(), dtype="<f4")
    return IqTrace(
        i=data[0::2].astype(float),
        q=data[1::2].astype(float),
        f_s=meta["sample_rate_hz"],
        t0=meta["t0_s"],
        fc=meta.get("center_frequency_hz"),
    )
