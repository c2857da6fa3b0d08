"""State JSON, CSV tables and 8-bit PGM rasters."""

from __future__ import annotations

import csv
import json

import numpy as np

from .core import Grid, State

__all__ = [
    "state_to_dict",
    "state_from_dict",
    "save_state",
    "load_state",
    "write_csv",
    "write_pgm",
    "read_pgm",
    "u_raster",
    "label_raster",
    "LABEL_GRAY",
]

# gray level per label value NONE, OMEGA1, OMEGA2, E1, E2
LABEL_GRAY = np.array([0, 96, 160, 224, 255], dtype=np.uint8)


def state_to_dict(state: State, spec=None) -> dict:
    d = {
        "grid": state.grid.to_dict(),
        "g_value": float(state.g_value),
        "u": [float(v) for v in state.u.ravel()],
        "labels": [int(v) for v in state.labels.ravel()],
    }
    if spec is not None:
        d["spec"] = spec.to_dict()
    return d


def state_from_dict(d: dict) -> State:
    g = d["grid"]
    grid = Grid(
        nx=int(g["nx"]),
        ny=int(g["ny"]),
        h=float(g["h"]),
        origin=tuple(float(v) for v in g.get("origin", (0.0, 0.0))),
        periodic_y=bool(g.get("periodic_y", False)),
    )
    u = np.asarray(d["u"], dtype=np.float64).reshape(grid.shape)
    labels = np.asarray(d["labels"], dtype=np.int8).reshape(grid.shape)
    return State(grid, u, labels, float(d.get("g_value", 1.0)))


def save_state(path, state: State, spec=None) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state, spec), fh)


def load_state(path) -> State:
    with open(path) as fh:
        return state_from_dict(json.load(fh))


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    """Rows of numbers or strings; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def write_pgm(path, img: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM; row 0 of ``img`` is the top of the picture."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    hgt, wid = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{wid} {hgt}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    wid, hgt = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data, dtype=np.uint8, count=wid * hgt, offset=pos + 1).reshape(hgt, wid)


def u_raster(state: State) -> np.ndarray:
    """u scaled by 255 / g, with y pointing up."""
    v = np.clip(state.u / state.g_value, 0.0, 1.0) * 255.0
    return np.flipud(np.rint(v).astype(np.uint8))


def label_raster(state: State) -> np.ndarray:
    return np.flipud(LABEL_GRAY[state.labels])
