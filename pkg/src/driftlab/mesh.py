"""Uniform axis-aligned grids masked to a domain, with fields and quadrature.

Nodes live at lo + i*h per axis.  A cell is active when all 2^n of its
corner nodes lie inside the domain; free (unknown) nodes are those whose
every incident cell is active, so nodes on the staircase boundary carry
Dirichlet data.  Ball averages use sub-sampled cut-cell volume fractions.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = [
    "Domain",
    "GridField",
    "GridVectorField",
    "sample_scalar",
    "sample_vector",
    "integrate",
    "fint_ball",
    "ball_cell_fractions",
    "mollify",
    "cell_means",
    "cell_gradients",
    "cell_centers",
    "field_to_csv",
    "field_to_binary",
    "field_from_binary",
]

_SUBSAMPLES = 4  # per axis, for cut-cell volume fractions


class Domain:
    """A box / ball / annulus / box-minus-ball mask on a uniform grid."""

    def __init__(self, kind, lo, hi, h, params=None, n=None):
        self.kind = kind
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.h = float(h)
        self.params = params or {}
        self.n = int(n if n is not None else self.lo.size)
        if self.n < 3:
            raise ValueError("dimension must be at least 3")
        if self.h <= 0.0:
            raise ValueError("grid spacing must be positive")
        steps = (self.hi - self.lo) / self.h
        if np.any(np.abs(steps - np.rint(steps)) > 1e-9 * np.maximum(1.0, np.abs(steps))):
            raise ValueError("box extents must be integer multiples of h")
        self.dims = tuple(int(round(s)) + 1 for s in steps)
        if any(d < 3 for d in self.dims):
            raise ValueError("need at least 2 cells per axis")
        self._build_masks()

    # -- constructors ------------------------------------------------------

    @classmethod
    def box(cls, lo, hi, h):
        return cls("box", lo, hi, h)

    @classmethod
    def ball(cls, center, radius, h, pad_cells: int = 1):
        center = np.asarray(center, dtype=float)
        pad = pad_cells * h
        lo = np.floor((center - radius - pad) / h) * h
        hi = np.ceil((center + radius + pad) / h) * h
        return cls("ball", lo, hi, h, params={"center": center, "radius": float(radius)})

    @classmethod
    def annulus(cls, center, r_inner, r_outer, h, pad_cells: int = 1):
        center = np.asarray(center, dtype=float)
        pad = pad_cells * h
        lo = np.floor((center - r_outer - pad) / h) * h
        hi = np.ceil((center + r_outer + pad) / h) * h
        return cls(
            "annulus", lo, hi, h,
            params={"center": center, "r_inner": float(r_inner), "r_outer": float(r_outer)},
        )

    @classmethod
    def box_minus_ball(cls, lo, hi, center, radius, h):
        return cls(
            "box-minus-ball", lo, hi, h,
            params={"center": np.asarray(center, dtype=float), "radius": float(radius)},
        )

    # -- geometry ----------------------------------------------------------

    def indicator(self, pts: np.ndarray) -> np.ndarray:
        """True for points strictly inside the domain (pts shape (..., n))."""
        pts = np.asarray(pts, dtype=float)
        inside_box = np.all((pts > self.lo - 1e-12) & (pts < self.hi + 1e-12), axis=-1)
        if self.kind == "box":
            return inside_box
        if self.kind == "ball":
            r = np.linalg.norm(pts - self.params["center"], axis=-1)
            return r < self.params["radius"]
        if self.kind == "annulus":
            r = np.linalg.norm(pts - self.params["center"], axis=-1)
            return (r > self.params["r_inner"]) & (r < self.params["r_outer"])
        if self.kind == "box-minus-ball":
            r = np.linalg.norm(pts - self.params["center"], axis=-1)
            return inside_box & (r > self.params["radius"])
        raise ValueError(f"unknown domain kind {self.kind!r}")

    def node_coords(self) -> np.ndarray:
        """Array of node coordinates, shape dims + (n,)."""
        axes = [self.lo[d] + self.h * np.arange(self.dims[d]) for d in range(self.n)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack(grid, axis=-1)

    def _build_masks(self):
        coords = self.node_coords()
        if self.kind == "box":
            self.inside = np.ones(self.dims, dtype=bool)
        else:
            self.inside = self.indicator(coords)
        # active cells: all corners inside
        cell_dims = tuple(d - 1 for d in self.dims)
        active = np.ones(cell_dims, dtype=bool)
        for bits in itertools.product((0, 1), repeat=self.n):
            sl = tuple(slice(b, d - 1 + b) for b, d in zip(bits, self.dims))
            active &= self.inside[sl]
        self.active_cells = active
        if not active.any():
            raise ValueError("domain mask contains no active cells at this resolution")
        labels, ncomp = ndimage.label(active)
        if ncomp != 1:
            raise ValueError(f"domain interior is disconnected ({ncomp} components)")
        # free nodes: every incident cell exists and is active
        padded = np.zeros(self.dims, dtype=bool)
        incident_all = np.ones(self.dims, dtype=bool)
        for bits in itertools.product((0, 1), repeat=self.n):
            padded[:] = False
            sl = tuple(slice(b, d - 1 + b) for b, d in zip(bits, self.dims))
            padded[sl] = active
            incident_all &= padded
        self.free = incident_all
        # active nodes: belong to at least one active cell
        any_incident = np.zeros(self.dims, dtype=bool)
        for bits in itertools.product((0, 1), repeat=self.n):
            sl = tuple(slice(b, d - 1 + b) for b, d in zip(bits, self.dims))
            any_incident[sl] |= active
        self.active_nodes = any_incident
        self.boundary = any_incident & ~incident_all
        self._cell_index = np.argwhere(active)
        self._corner_flat = None

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def num_free(self) -> int:
        return int(self.free.sum())

    def cell_corner_indices(self) -> np.ndarray:
        """Flat node indices of the 2^n corners of every active cell, shape (ncells, 2^n)."""
        if self._corner_flat is None:
            strides = np.array([int(np.prod(self.dims[d + 1:])) for d in range(self.n)])
            base = self._cell_index @ strides
            offs = np.array(
                [sum(b * s for b, s in zip(bits, strides))
                 for bits in itertools.product((0, 1), repeat=self.n)]
            )
            self._corner_flat = base[:, None] + offs[None, :]
        return self._corner_flat

    def cell_lower_corners(self) -> np.ndarray:
        """Coordinates of the lower corner of every active cell, shape (ncells, n)."""
        return self.lo + self.h * self._cell_index

    def measure(self) -> float:
        """Measure of the active-cell region."""
        return float(self.active_cells.sum()) * self.h**self.n

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass
class GridField:
    """Nodal scalar data on a domain grid (values over the full bounding grid)."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.dims:
            raise ValueError("field shape must match grid dims")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def copy(self) -> "GridField":
        return GridField(self.domain, self.values.copy())

    @classmethod
    def zeros(cls, domain: Domain) -> "GridField":
        return cls(domain, np.zeros(domain.dims))


@dataclass
class GridVectorField:
    """Nodal vector data on a domain grid, shape dims + (n,)."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.dims + (self.domain.n,):
            raise ValueError("vector field shape must be dims + (n,)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector field contains non-finite values")

    def magnitude(self) -> GridField:
        return GridField(self.domain, np.linalg.norm(self.values, axis=-1))

    @classmethod
    def zeros(cls, domain: Domain) -> "GridVectorField":
        return cls(domain, np.zeros(domain.dims + (domain.n,)))


def _sample(closure, domain: Domain, singularities, vector: bool):
    coords = domain.node_coords().reshape(-1, domain.n)
    pts = coords.copy()
    if singularities:
        for s in singularities:
            s = np.asarray(s, dtype=float)
            diff = pts - s
            r = np.linalg.norm(diff, axis=-1)
            near = r < domain.h / 2.0
            # offset radially by h/4 (along +e1 for nodes exactly on the pole)
            dirs = np.zeros_like(diff)
            nz = near & (r > 0)
            dirs[nz] = diff[nz] / r[nz, None]
            on_pole = near & (r == 0)
            dirs[on_pole, 0] = 1.0
            pts[near] = s + dirs[near] * (r[near] + domain.h / 4.0)[:, None]
    active = domain.active_nodes.reshape(-1)
    shape = (pts.shape[0], domain.n) if vector else (pts.shape[0],)
    out = np.zeros(shape)
    # closures are only evaluated inside the active region; corner nodes of
    # the bounding box may be outside the closure's domain entirely
    for i in np.flatnonzero(active):
        out[i] = closure(pts[i])
    if not np.all(np.isfinite(out)):
        raise ValueError("closure produced non-finite values at non-singular nodes")
    if vector:
        return GridVectorField(domain, out.reshape(domain.dims + (domain.n,)))
    return GridField(domain, out.reshape(domain.dims))


def sample_scalar(closure, domain: Domain, singularities=None) -> GridField:
    """Sample a scalar closure at the nodes (pole-avoided near singularities)."""
    return _sample(closure, domain, singularities, vector=False)


def sample_vector(closure, domain: Domain, singularities=None) -> GridVectorField:
    """Sample a vector closure at the nodes (pole-avoided near singularities)."""
    return _sample(closure, domain, singularities, vector=True)


def cell_means(f: GridField) -> np.ndarray:
    """Mean of the 2^n corner values per active cell."""
    corners = f.domain.cell_corner_indices()
    return f.values.reshape(-1)[corners].mean(axis=1)


def cell_centers(domain: Domain) -> np.ndarray:
    return domain.cell_lower_corners() + domain.h / 2.0


def cell_gradients(f: GridField) -> np.ndarray:
    """Gradient of the multilinear interpolant at cell centers, shape (ncells, n)."""
    dom = f.domain
    corners = dom.cell_corner_indices()
    vals = f.values.reshape(-1)[corners]  # (ncells, 2^n)
    bits = np.array(list(itertools.product((0, 1), repeat=dom.n)))
    grads = np.empty((vals.shape[0], dom.n))
    for d in range(dom.n):
        plus = bits[:, d] == 1
        grads[:, d] = (vals[:, plus].mean(axis=1) - vals[:, ~plus].mean(axis=1)) / dom.h
    return grads


def integrate(f: GridField) -> float:
    """Integral over the active-cell region (corner-mean quadrature)."""
    return float(cell_means(f).sum()) * f.domain.h**f.domain.n


def ball_cell_fractions(domain: Domain, center, radius: float) -> np.ndarray:
    """Volume fraction of each active cell inside the ball, by 4^n sub-sampling."""
    center = np.asarray(center, dtype=float)
    lower = domain.cell_lower_corners()
    ticks = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES * domain.h
    offs = np.stack(np.meshgrid(*([ticks] * domain.n), indexing="ij"), axis=-1).reshape(-1, domain.n)
    # distance of every sub-sample point from the ball center
    frac = np.zeros(lower.shape[0])
    r2 = radius * radius
    for o in offs:
        d2 = np.sum((lower + o - center) ** 2, axis=-1)
        frac += d2 < r2
    return frac / offs.shape[0]


def fint_ball(f: GridField, center, radius: float) -> float:
    """Average of f over a ball, with cut-cell weights from sub-sampling."""
    frac = ball_cell_fractions(f.domain, center, radius)
    if not np.any(frac > 0.0):
        raise ValueError("ball does not intersect the active region")
    w = frac * f.domain.h**f.domain.n
    return float(np.sum(cell_means(f) * w) / np.sum(w))


def _bump_kernel(domain: Domain, j: int) -> np.ndarray:
    radius = 1.0 / j
    k = int(math.floor(radius / domain.h))
    axes = [np.arange(-k, k + 1) * domain.h] * domain.n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    r2 = np.sum(grid**2, axis=-1) / radius**2
    kern = np.zeros_like(r2)
    inside = r2 < 1.0
    kern[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    s = kern.sum()
    if s <= 0.0:
        raise ValueError("mollifier support below grid resolution")
    return kern / s


def mollify(raw, j: int):
    """Discrete mollification with a normalized compactly supported bump.

    Returns (smoothed field, validity mask): the mask marks the shrunken
    domain of nodes farther than 1/j from the inactive region, where the
    convolution uses only genuine field values.
    """
    domain = raw.domain
    if j < 1:
        raise ValueError("mollification index must be >= 1")
    if 1.0 / j < 2.0 * domain.h:
        raise ValueError("mollifier support radius 1/j must be at least 2h")
    kern = _bump_kernel(domain, j)
    # pad with an inactive border so the array edge counts as outside
    padded = np.pad(domain.active_nodes, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[(slice(1, -1),) * domain.n] * domain.h
    valid = dist > 1.0 / j
    if isinstance(raw, GridVectorField):
        out = np.stack(
            [ndimage.convolve(raw.values[..., d], kern, mode="constant") for d in range(domain.n)],
            axis=-1,
        )
        return GridVectorField(domain, out), valid
    out = ndimage.convolve(raw.values, kern, mode="constant")
    return GridField(domain, out), valid


# -- snapshots -------------------------------------------------------------

_MAGIC = b"DLF1"


def field_to_csv(f: GridField, path: str):
    """Write node coords + value rows for active nodes (17 significant digits)."""
    coords = f.domain.node_coords().reshape(-1, f.domain.n)
    active = f.domain.active_nodes.reshape(-1)
    vals = f.values.reshape(-1)
    with open(path, "w") as fh:
        fh.write(",".join(f"x{d}" for d in range(f.domain.n)) + ",value\n")
        for c, v in zip(coords[active], vals[active]):
            fh.write(",".join(f"{x:.17g}" for x in c) + f",{v:.17g}\n")


def field_to_binary(f: GridField, path: str):
    """Compact snapshot: magic, n, dims, h, lo, count, little-endian doubles."""
    dom = f.domain
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<i", dom.n))
        fh.write(struct.pack(f"<{dom.n}i", *dom.dims))
        fh.write(struct.pack("<d", dom.h))
        fh.write(struct.pack(f"<{dom.n}d", *dom.lo))
        flat = np.ascontiguousarray(f.values, dtype="<f8").reshape(-1)
        fh.write(struct.pack("<q", flat.size))
        fh.write(flat.tobytes())


def field_from_binary(path: str):
    """Read back a binary snapshot; returns (dims, h, lo, values)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field snapshot")
        (n,) = struct.unpack("<i", fh.read(4))
        dims = struct.unpack(f"<{n}i", fh.read(4 * n))
        (h,) = struct.unpack("<d", fh.read(8))
        lo = struct.unpack(f"<{n}d", fh.read(8 * n))
        (count,) = struct.unpack("<q", fh.read(8))
        vals = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
    return dims, h, np.array(lo), vals
