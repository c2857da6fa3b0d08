"""Grid geometry, problem specification and the (u, labels) state container.

Cells are square and cell-centred; arrays are stored with shape ``(ny, nx)``
and indexed ``[j, i]`` so that row ``j`` sits at height
``origin[1] + (j + 0.5) * h``.  Flattening is row-major.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "Disk",
    "Rect",
    "ProblemSpec",
    "Grid",
    "Label",
    "State",
    "GeometryError",
    "make_grid",
    "rasterize",
    "validate",
    "phase_of",
    "face_pairs",
    "boundary_ring",
]


class GeometryError(ValueError):
    """Raised when the fixed sets or the bounding box are inconsistent."""


class Label(enum.IntEnum):
    NONE = 0
    OMEGA1 = 1
    OMEGA2 = 2
    E1 = 3
    E2 = 4


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def contains(self, x, y):
        cx, cy = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cy - r, cx + r, cy + r

    @property
    def diameter(self):
        return 2.0 * self.radius


@dataclass(frozen=True)
class Rect:
    corner: tuple[float, float]
    extents: tuple[float, float]

    def contains(self, x, y):
        x0, y0 = self.corner
        w, hgt = self.extents
        return (x >= x0) & (x <= x0 + w) & (y >= y0) & (y <= y0 + hgt)

    def bounds(self):
        x0, y0 = self.corner
        w, hgt = self.extents
        return x0, y0, x0 + w, y0 + hgt

    @property
    def diameter(self):
        return math.hypot(*self.extents)


Shape = Disk | Rect


def shape_from_dict(d: dict) -> Shape:
    kind = d.get("type")
    if kind == "disk":
        return Disk(tuple(map(float, d["center"])), float(d["radius"]))
    if kind in ("rect", "rectangle"):
        return Rect(tuple(map(float, d["corner"])), tuple(map(float, d["extents"])))
    raise GeometryError(f"unknown shape type {kind!r}")


def shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Disk):
        return {"type": "disk", "center": list(s.center), "radius": s.radius}
    return {"type": "rect", "corner": list(s.corner), "extents": list(s.extents)}


def _point_rect_distance(px, py, rect: Rect) -> float:
    x0, y0, x1, y1 = rect.bounds()
    dx = max(x0 - px, 0.0, px - x1)
    dy = max(y0 - py, 0.0, py - y1)
    return math.hypot(dx, dy)


def shape_distance(a: Shape, b: Shape) -> float:
    """Euclidean distance between two primitives (0 when they intersect)."""
    if isinstance(a, Disk) and isinstance(b, Disk):
        d = math.dist(a.center, b.center) - a.radius - b.radius
        return max(d, 0.0)
    if isinstance(a, Rect) and isinstance(b, Rect):
        ax0, ay0, ax1, ay1 = a.bounds()
        bx0, by0, bx1, by1 = b.bounds()
        dx = max(bx0 - ax1, 0.0, ax0 - bx1)
        dy = max(by0 - ay1, 0.0, ay0 - by1)
        return math.hypot(dx, dy)
    disk, rect = (a, b) if isinstance(a, Disk) else (b, a)
    return max(_point_rect_distance(*disk.center, rect) - disk.radius, 0.0)


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, parameters and resolution of one two-phase problem.

    ``box`` is ``(xmin, ymin, xmax, ymax)``.  ``strip`` turns the box into a
    strip that is periodic in ``y`` and lets the fixed sets fill the two
    ``x``-ends; it is how one-dimensional configurations are embedded.
    """

    box: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    resolution: int = 64
    shapes_E1: tuple[Shape, ...] = ()
    shapes_E2: tuple[Shape, ...] = ()
    beta: float = 1.0
    lam: float = 1.0
    g_value: float = 1.0
    one_phase_mode: bool = False
    strip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shapes_E1", tuple(self.shapes_E1))
        object.__setattr__(self, "shapes_E2", tuple(self.shapes_E2))
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))

    def check(self) -> None:
        if self.beta < 0:
            raise GeometryError("beta must be >= 0")
        if not self.lam > 0:
            raise GeometryError("lambda must be > 0")
        if self.resolution < 8:
            raise GeometryError("resolution must be >= 8")
        if not self.g_value > 0:
            raise GeometryError("g_value must be > 0")
        xmin, ymin, xmax, ymax = self.box
        if not (xmax > xmin and ymax > ymin):
            raise GeometryError("box has non-positive extent")
        if not self.shapes_E1:
            raise GeometryError("shapes_E1 is empty")
        if not self.shapes_E2 and not self.one_phase_mode:
            raise GeometryError("shapes_E2 is empty and one_phase_mode is off")
        for a in self.shapes_E1:
            for b in self.shapes_E2:
                if shape_distance(a, b) <= 0.0:
                    raise GeometryError("E1 and E2 are not at positive distance")

    @property
    def shapes(self):
        return self.shapes_E1 + self.shapes_E2

    def e_distance(self) -> float | None:
        """Distance between E1 and E2, or ``None`` in one-phase mode."""
        if not self.shapes_E2:
            return None
        return min(shape_distance(a, b) for a in self.shapes_E1 for b in self.shapes_E2)

    def to_dict(self) -> dict:
        return {
            "box": list(self.box),
            "resolution": self.resolution,
            "shapes_E1": [shape_to_dict(s) for s in self.shapes_E1],
            "shapes_E2": [shape_to_dict(s) for s in self.shapes_E2],
            "beta": self.beta,
            "lambda": self.lam,
            "g_value": self.g_value,
            "one_phase_mode": self.one_phase_mode,
            "strip": self.strip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(
            box=tuple(d.get("box", (0.0, 0.0, 1.0, 1.0))),
            resolution=int(d.get("resolution", 64)),
            shapes_E1=tuple(shape_from_dict(s) for s in d.get("shapes_E1", [])),
            shapes_E2=tuple(shape_from_dict(s) for s in d.get("shapes_E2", [])),
            beta=float(d.get("beta", 1.0)),
            lam=float(d.get("lambda", 1.0)),
            g_value=float(d.get("g_value", 1.0)),
            one_phase_mode=bool(d.get("one_phase_mode", False)),
            strip=bool(d.get("strip", False)),
        )


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    periodic_y: bool = False

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def size(self):
        return self.nx * self.ny

    def centers(self):
        """Cell-centre coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y)

    def to_dict(self):
        return {
            "nx": self.nx,
            "ny": self.ny,
            "h": self.h,
            "origin": list(self.origin),
            "periodic_y": self.periodic_y,
        }


def make_grid(spec: ProblemSpec) -> Grid:
    """Square-cell grid covering ``spec.box``; the short side is padded."""
    xmin, ymin, xmax, ymax = spec.box
    w, hgt = xmax - xmin, ymax - ymin
    h = max(w, hgt) / spec.resolution
    nx = max(int(round(w / h)), 1)
    ny = max(int(round(hgt / h)), 1)
    if nx * h < w * (1 - 1e-12):
        nx += 1
    if ny * h < hgt * (1 - 1e-12):
        ny += 1
    return Grid(nx=nx, ny=ny, h=h, origin=(xmin, ymin), periodic_y=spec.strip)


@dataclass(frozen=True, eq=False)
class State:
    """Cell field ``u`` with the five-way label field."""

    grid: Grid
    u: np.ndarray
    labels: np.ndarray
    g_value: float = 1.0

    def replace(self, u=None, labels=None) -> "State":
        return State(
            self.grid,
            self.u if u is None else u,
            self.labels if labels is None else labels,
            self.g_value,
        )

    def copy(self) -> "State":
        return State(self.grid, self.u.copy(), self.labels.copy(), self.g_value)

    def fingerprint(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(repr(self.grid.to_dict()).encode())
        m.update(np.ascontiguousarray(self.u, dtype=np.float64).tobytes())
        m.update(np.ascontiguousarray(self.labels, dtype=np.int8).tobytes())
        m.update(repr(float(self.g_value)).encode())
        return m.hexdigest()


def phase_of(labels: np.ndarray) -> np.ndarray:
    """0 outside both phases, 1 on OMEGA1 and E1, 2 on OMEGA2 and E2."""
    lut = np.array([0, 1, 2, 1, 2], dtype=np.int8)
    return lut[labels]


def boundary_ring(grid: Grid) -> np.ndarray:
    """Cells touching a non-periodic side of the box."""
    ring = np.zeros(grid.shape, dtype=bool)
    ring[:, 0] = ring[:, -1] = True
    if not grid.periodic_y:
        ring[0, :] = ring[-1, :] = True
    return ring


@lru_cache(maxsize=32)
def _face_pairs(nx: int, ny: int, periodic_y: bool):
    idx = np.arange(nx * ny).reshape(ny, nx)
    ax = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    bx = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    horiz = [np.zeros(ny * (nx - 1), dtype=bool), np.ones((ny - 1) * nx, dtype=bool)]
    if periodic_y and ny > 1:
        ax.append(idx[-1, :])
        bx.append(idx[0, :])
        horiz.append(np.ones(nx, dtype=bool))
    a = np.concatenate(ax)
    b = np.concatenate(bx)
    vertical_normal = np.concatenate(horiz)
    for arr in (a, b, vertical_normal):
        arr.flags.writeable = False
    return a, b, vertical_normal


def face_pairs(grid: Grid):
    """Flat index arrays ``(a, b, ynormal)`` of all interior faces.

    ``ynormal`` is True for faces separating vertically adjacent cells.
    Box-boundary (ghost) faces are not included.
    """
    return _face_pairs(grid.nx, grid.ny, grid.periodic_y)


def _rasterize_shapes(X, Y, shapes: Sequence[Shape]) -> np.ndarray:
    mask = np.zeros(X.shape, dtype=bool)
    for s in shapes:
        mask |= s.contains(X, Y)
    return mask


def rasterize(spec: ProblemSpec) -> State:
    """Label cells whose centres lie in E1 / E2 and set ``u = g`` there."""
    spec.check()
    grid = make_grid(spec)
    X, Y = grid.centers()
    m1 = _rasterize_shapes(X, Y, spec.shapes_E1)
    m2 = _rasterize_shapes(X, Y, spec.shapes_E2)
    if not m1.any():
        raise GeometryError("E1 rasterizes to no cells")
    if spec.shapes_E2 and not m2.any():
        raise GeometryError("E2 rasterizes to no cells")
    if (m1 & m2).any():
        raise GeometryError("E1 and E2 rasterizations overlap")

    if not spec.strip:
        rho = max(10 * grid.h, max(s.diameter for s in spec.shapes))
        xmin, ymin = grid.origin
        xmax, ymax = xmin + grid.nx * grid.h, ymin + grid.ny * grid.h
        for s in spec.shapes:
            sx0, sy0, sx1, sy1 = s.bounds()
            if sx0 - rho <= xmin or sy0 - rho <= ymin or sx1 + rho >= xmax or sy1 + rho >= ymax:
                raise GeometryError(
                    f"box too small: shapes dilated by margin {rho:.4g} leave the box"
                )

    labels = np.full(grid.shape, Label.NONE, dtype=np.int8)
    labels[m1] = Label.E1
    labels[m2] = Label.E2
    u = np.zeros(grid.shape, dtype=np.float64)
    u[m1 | m2] = spec.g_value
    return State(grid, u, labels, spec.g_value)


def validate(state: State, tol: float = 1e-12) -> list[str]:
    """Return one message per violated invariant, each naming a witness cell."""
    out: list[str] = []
    u, lab, g = state.u, state.labels, state.g_value
    if u.shape != state.grid.shape or lab.shape != state.grid.shape:
        return [f"shape mismatch: u{u.shape} labels{lab.shape} grid{state.grid.shape}"]

    def witness(mask):
        j, i = np.argwhere(mask)[0]
        return f"cell (i={i}, j={j})"

    bad = (lab < 0) | (lab > 4)
    if bad.any():
        out.append(f"label out of range at {witness(bad)}")
        return out
    e = (lab == Label.E1) | (lab == Label.E2)
    m = e & (np.abs(u - g) > tol)
    if m.any():
        out.append(f"u != g_value on fixed set at {witness(m)}")
    m = (lab == Label.NONE) & (u != 0.0)
    if m.any():
        out.append(f"positivity-support: u > 0 on unlabeled cell at {witness(m)}")
    m = boundary_ring(state.grid) & ~e & (u != 0.0)
    if m.any():
        out.append(f"u != 0 on box-boundary cell at {witness(m)}")
    m = (u < -tol) | (u > g + tol) | ~np.isfinite(u)
    if m.any():
        out.append(f"bound 0 <= u <= g violated at {witness(m)}")
    return out
