"""Bit-exact file formats at the pipeline boundaries.

Times are microseconds and frequencies MHz in files (matching how the
experiments are usually plotted); everything is seconds and rad/s in memory.
Floats are written with repr so write -> read -> write round-trips
byte-identically.
"""

from __future__ import annotations

import json

import numpy as np
from PIL import Image

from .simkit import ExperimentDataset
from .smassay import HeightMap, ImageFrame, TraceSeries

SCHEMA_VERSION = 1

DATASET_HEADER = "sweep_time_us,n_pulses,F0_counts,F1_counts,reps"
SPECTRUM_HEADER = "omega_rad_s,freq_MHz,S_rad2_s"
T2N_HEADER = "n_pulses,T2_us"
TRACE_HEADER = "spot_id,time_s,intensity"
TITRATION_HEADER = "biotin_fraction,n_spots,area_um2"


class SchemaError(ValueError):
    """Malformed delimited file; message carries line and column."""


def _fmt(x) -> str:
    return repr(float(x))


def _parse_csv(path, header, casts):
    """Strict CSV reader: exact header, fixed column count, typed fields."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise SchemaError(f"{path}: line 1: expected header {header!r}, got {first!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != len(casts):
                raise SchemaError(
                    f"{path}: line {lineno}: expected {len(casts)} columns, got {len(fields)}"
                )
            row = []
            for col, (cast, raw) in enumerate(zip(casts, fields), start=1):
                try:
                    row.append(cast(raw))
                except ValueError:
                    raise SchemaError(
                        f"{path}: line {lineno}, column {col}: cannot parse {raw!r}"
                    ) from None
            rows.append(row)
    return rows


def write_dataset_csv(dataset: ExperimentDataset, path):
    order = np.argsort(dataset.sweep, kind="stable")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DATASET_HEADER + "\n")
        for i in order:
            fh.write(
                f"{_fmt(dataset.sweep[i] * 1e6)},{dataset.n_pulses[i]},"
                f"{dataset.F0_counts[i]},{dataset.F1_counts[i]},{dataset.reps}\n"
            )


def read_dataset_csv(path) -> ExperimentDataset:
    rows = _parse_csv(path, DATASET_HEADER, (float, int, int, int, int))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    reps = set(int(r[4]) for r in rows)
    if len(reps) != 1:
        raise SchemaError(f"{path}: reps column must be constant")
    return ExperimentDataset(
        sweep=arr[:, 0] * 1e-6,
        n_pulses=arr[:, 1].astype(int),
        F0_counts=arr[:, 2].astype(np.int64),
        F1_counts=arr[:, 3].astype(np.int64),
        reps=reps.pop(),
        seed=0,
    )


def write_spectrum_csv(samples, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SPECTRUM_HEADER + "\n")
        for s in sorted(samples, key=lambda s: s.omega):
            fh.write(f"{_fmt(s.omega)},{_fmt(s.omega / (2e6 * np.pi))},{_fmt(s.S)}\n")


def read_t2n_csv(path):
    rows = _parse_csv(path, T2N_HEADER, (int, float))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    Ns = np.array([r[0] for r in rows])
    T2s = np.array([r[1] for r in rows]) * 1e-6
    return Ns, T2s


def write_t2n_csv(Ns, T2s, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(T2N_HEADER + "\n")
        for n, t2 in zip(Ns, T2s):
            fh.write(f"{int(n)},{_fmt(t2 * 1e6)}\n")


def write_json(payload: dict, path):
    payload = dict(payload)
    payload.setdefault("schema_version", SCHEMA_VERSION)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(traces, path):
    if isinstance(traces, TraceSeries):
        traces = [traces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        for tr in traces:
            for t, v in zip(tr.times, tr.intensity):
                fh.write(f"{tr.spot_id},{_fmt(t)},{_fmt(v)}\n")


def read_trace_csv(path):
    rows = _parse_csv(path, TRACE_HEADER, (int, float, float))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    traces = []
    for sid in sorted(set(r[0] for r in rows)):
        sel = [r for r in rows if r[0] == sid]
        traces.append(
            TraceSeries(np.array([r[1] for r in sel]), np.array([r[2] for r in sel]), sid)
        )
    return traces


def read_titration_csv(path):
    rows = _parse_csv(path, TITRATION_HEADER, (float, int, float))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def write_heightmap_csv(height_map: HeightMap, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# lateral_pitch_nm={_fmt(height_map.lateral_pitch)}\n")
        for row in height_map.heights:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_heightmap_csv(path) -> HeightMap:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# lateral_pitch_nm="):
            raise SchemaError(f"{path}: line 1: missing lateral_pitch_nm header")
        pitch = float(first.split("=", 1)[1])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise SchemaError(f"{path}: line {lineno}: cannot parse height row") from None
    if not rows or len(set(len(r) for r in rows)) != 1:
        raise SchemaError(f"{path}: height rows missing or ragged")
    return HeightMap(np.array(rows), pitch)


def write_image_png(frame: ImageFrame, path):
    """16-bit grayscale PNG; intensities are clipped to the uint16 range."""
    data = np.clip(np.round(frame.pixels), 0, 65535).astype(np.uint16)
    Image.fromarray(data).save(path)


def read_image_png(path, pixel_pitch: float) -> ImageFrame:
    img = Image.open(path)
    return ImageFrame(np.asarray(img, dtype=float), pixel_pitch)


def write_image_csv(frame: ImageFrame, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# pixel_pitch_um={_fmt(frame.pixel_pitch)}\n")
        for row in frame.pixels:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_image_csv(path) -> ImageFrame:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# pixel_pitch_um="):
            raise SchemaError(f"{path}: line 1: missing pixel_pitch_um header")
        pitch = float(first.split("=", 1)[1])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise SchemaError(f"{path}: line {lineno}: cannot parse pixel row") from None
    if not rows or len(set(len(r) for r in rows)) != 1:
        raise SchemaError(f"{path}: pixel rows missing or ragged")
    return ImageFrame(np.array(rows), pitch)
