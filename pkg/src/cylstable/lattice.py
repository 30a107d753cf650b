"""Uniform evaluation lattices and exported density grids."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Lattice:
    """Uniform square lattice centred at the origin (d = 2)."""

    n: int
    h: float

    def __post_init__(self):
        if self.n < 8:
            raise DomainError("lattice needs at least 8 nodes per axis")
        if self.h <= 0:
            raise DomainError("lattice spacing must be positive")

    @property
    def axis(self) -> np.ndarray:
        return self.h * (np.arange(self.n) - (self.n - 1) / 2.0)

    @property
    def extent(self) -> float:
        return float(self.axis[-1])

    @property
    def size(self) -> int:
        return self.n * self.n

    def points(self) -> np.ndarray:
        """All nodes as an (n*n, 2) array, x-major."""
        ax = self.axis
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def node_near(self, p) -> np.ndarray:
        """Coordinates of the nearest lattice node."""
        ax = self.axis
        i = np.clip(np.round((np.asarray(p, float) - ax[0]) / self.h), 0, self.n - 1)
        return ax[0] + self.h * i

    def index_of(self, p) -> tuple[int, int]:
        ax = self.axis
        i = int(round((p[0] - ax[0]) / self.h))
        j = int(round((p[1] - ax[0]) / self.h))
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise DomainError(f"point {p} outside the lattice")
        return i, j

    def quad_weight(self) -> float:
        return self.h * self.h

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.quad_weight())

    def interpolate(self, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Bilinear interpolation with clamping to the boundary value.

        Clamping keeps constants exact and extends decaying grid functions by
        their (small) edge values instead of a hard zero.
        """
        ax = self.axis
        q = (np.asarray(pts, float) - ax[0]) / self.h
        q = np.clip(q, 0.0, self.n - 1 - 1e-12)
        i0 = np.floor(q).astype(np.int64)
        f = q - i0
        v = values.reshape(self.n, self.n)
        fx, fy = f[..., 0], f[..., 1]
        ix, iy = i0[..., 0], i0[..., 1]
        v00 = v[ix, iy]
        v10 = v[ix + 1, iy]
        v01 = v[ix, iy + 1]
        v11 = v[ix + 1, iy + 1]
        return (
            v00 * (1 - fx) * (1 - fy)
            + v10 * fx * (1 - fy)
            + v01 * (1 - fx) * fy
            + v11 * fx * fy
        )


@dataclass
class DensityGrid:
    """Values of a transition density over the lattice, one variable fixed."""

    lattice: Lattice
    t: float
    mode: str                 # "fix_y0" (values over x) or "fix_x0" (values over y)
    point: np.ndarray         # the fixed point
    values: np.ndarray        # flat, lattice x-major
    per_level_l1: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def mass(self) -> float:
        return self.lattice.integrate(self.values)

    def min_value(self) -> float:
        return float(np.min(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("y1,y2,value\n")
        for p, v in zip(self.lattice.points(), self.values):
            buf.write(f"{p[0]:.17g},{p[1]:.17g},{v:.17g}\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        out = {
            "t": self.t,
            "mode": self.mode,
            "point": [float(c) for c in np.asarray(self.point)],
            "lattice": {"n": self.lattice.n, "h": self.lattice.h},
            "per_level_l1": [float(v) for v in self.per_level_l1],
        }
        out.update(self.meta)
        return out

    def save(self, csv_path, json_path) -> None:
        with open(csv_path, "w") as f:
            f.write(self.to_csv())
        with open(json_path, "w") as f:
            json.dump(self.sidecar(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_csv(cls, csv_path, json_path) -> "DensityGrid":
        with open(json_path) as f:
            side = json.load(f)
        lat = Lattice(n=int(side["lattice"]["n"]), h=float(side["lattice"]["h"]))
        raw = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        meta = {k: v for k, v in side.items()
                if k not in ("t", "mode", "point", "lattice", "per_level_l1")}
        return cls(
            lattice=lat, t=float(side["t"]), mode=side["mode"],
            point=np.asarray(side["point"], dtype=float),
            values=raw[:, 2], per_level_l1=list(side.get("per_level_l1", [])),
            meta=meta,
        )
