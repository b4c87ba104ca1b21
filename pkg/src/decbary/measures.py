"""Private agent measures, barycenter support grids and transport costs.

Base points are floats on the line and the circle (angles in ``[0, 2pi)``)
and ``(row, col)`` pairs on a 2-D pixel grid. Batches of points are arrays
of shape ``(M,)`` or ``(M, 2)`` respectively.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi
SPACES = ("line", "circle", "grid2d")
COST_KINDS = ("squared_euclidean", "squared_angular")


class SpaceMismatch(ValueError):
    pass


def _dim(space: str) -> int:
    return 2 if space == "grid2d" else 1


@dataclass(frozen=True, eq=False)
class SupportGrid:
    points: np.ndarray
    space: str

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        pts = np.array(self.points, dtype=float)
        if _dim(self.space) == 2:
            pts = pts.reshape(-1, 2)
        else:
            pts = pts.reshape(-1)
        if self.space == "circle":
            pts = np.mod(pts, TWO_PI)
        if len(pts) < 1:
            raise ValueError("support grid needs at least one point")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("support points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @classmethod
    def line(cls, lo: float, hi: float, n: int) -> SupportGrid:
        return cls(np.linspace(lo, hi, n), "line")

    @classmethod
    def circle(cls, n: int) -> SupportGrid:
        return cls(TWO_PI * np.arange(n) / n, "circle")

    @classmethod
    def grid2d(cls, height: int, width: int) -> SupportGrid:
        rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        return cls(np.column_stack([rr.ravel(), cc.ravel()]), "grid2d")

    def __eq__(self, other):
        return (isinstance(other, SupportGrid) and self.space == other.space
                and np.array_equal(self.points, other.points))

    __hash__ = None


def angular_distance(a, b):
    d = np.abs(np.mod(np.asarray(a, float) - np.asarray(b, float), TWO_PI))
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class CostFunction:
    """Transport cost ``c(z_l, y)`` divided by ``scale``."""

    kind: str = "squared_euclidean"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("cost scale must be positive")

    def matrix(self, grid: SupportGrid, ys) -> np.ndarray:
        """Costs for a batch of base points, shape ``(M, n)``."""
        ys = _as_batch(ys, grid.space)
        if self.kind == "squared_angular":
            if grid.space != "circle":
                raise SpaceMismatch("squared_angular cost needs a circle grid")
            c = angular_distance(grid.points[None, :], ys[:, None]) ** 2
        elif grid.space == "grid2d":
            c = (grid.points[None, :, 0] - ys[:, None, 0]) ** 2
            c += (grid.points[None, :, 1] - ys[:, None, 1]) ** 2
        else:
            c = (grid.points[None, :] - ys[:, None]) ** 2
        if self.scale != 1.0:
            c = c / self.scale
        return c


def _as_batch(ys, space: str) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    if _dim(space) == 2:
        if ys.ndim == 1 and ys.shape == (2,):
            ys = ys[None, :]
        if ys.ndim != 2 or ys.shape[1] != 2:
            raise SpaceMismatch(f"grid2d points have shape (2,), got batch shape {ys.shape}")
    else:
        if ys.ndim > 1 and not (ys.ndim == 2 and ys.shape[1] == 1):
            raise SpaceMismatch(f"{space} points are scalars, got batch shape {ys.shape}")
        ys = ys.reshape(-1)
    return ys


def cost_vector(c: CostFunction, g: SupportGrid, y) -> np.ndarray:
    """Vector ``(c(z_1, y), ..., c(z_n, y))`` for a single base point."""
    y = np.asarray(y, dtype=float)
    if _dim(g.space) == 1 and y.ndim != 0:
        raise SpaceMismatch(f"{g.space} point must be a scalar")
    if _dim(g.space) == 2 and y.shape != (2,):
        raise SpaceMismatch("grid2d point must have two coordinates")
    return c.matrix(g, y)[0]


# -- measures ---------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float
    space = "line"

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("Gaussian std must be positive")

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.normal(self.mean, self.std, size)


@dataclass(frozen=True)
class VonMises:
    loc: float
    kappa: float
    space = "circle"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("von Mises concentration must be positive")

    def sample(self, rng: np.random.Generator, size: int | None = None):
        out = vonmises_best_fisher(rng, self.loc, self.kappa, 1 if size is None else size)
        return float(out[0]) if size is None else out


def vonmises_best_fisher(rng: np.random.Generator, loc: float, kappa: float,
                         size: int) -> np.ndarray:
    """Best & Fisher (1979) rejection sampler, angles wrapped to ``[0, 2pi)``.

    Proposals are drawn in blocks from ``rng`` and accepted in order, so the
    output depends only on the stream state.
    """
    if kappa < 1e-8:
        return TWO_PI * rng.random(size)
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(size)
    filled = 0
    while filled < size:
        block = max(16, 2 * (size - filled))
        u = rng.random((3, block))
        z = np.cos(math.pi * u[0])
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u[1] > 0) | (np.log(c / u[1]) + 1.0 - c >= 0)
        theta = np.sign(u[2][accept] - 0.5) * np.arccos(np.clip(f[accept], -1.0, 1.0))
        take = min(len(theta), size - filled)
        out[filled:filled + take] = theta[:take]
        filled += take
    return np.mod(out + loc, TWO_PI)


@dataclass(frozen=True, eq=False)
class Discrete:
    """Finitely supported measure. Zero-weight atoms are dropped and the
    remaining weights renormalized to sum to one."""

    atoms: np.ndarray
    weights: np.ndarray
    space: str = "line"

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        atoms = np.asarray(self.atoms, dtype=float)
        atoms = atoms.reshape(-1, 2) if _dim(self.space) == 2 else atoms.reshape(-1)
        if len(atoms) != len(w):
            raise ValueError(f"{len(atoms)} atoms but {len(w)} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        keep = w > 0
        if not keep.any():
            raise ValueError("discrete measure has zero total mass")
        atoms, w = atoms[keep], w[keep]
        w = w / w.sum()
        if self.space == "circle":
            atoms = np.mod(atoms, TWO_PI)
        for arr in (atoms, w):
            arr.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cdf", np.cumsum(w))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(1 if size is None else size)
        idx = np.minimum(np.searchsorted(self._cdf, u * self._cdf[-1], side="right"),
                         len(self.weights) - 1)
        pts = self.atoms[idx]
        if size is None:
            return pts[0] if _dim(self.space) == 2 else float(pts[0])
        return pts

    def __eq__(self, other):
        return (isinstance(other, Discrete) and self.space == other.space
                and np.array_equal(self.atoms, other.atoms)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None


def sample(o, rng: np.random.Generator, size: int | None = None):
    return o.sample(rng, size)


def image_to_measure(pixels, grid: SupportGrid | None = None) -> Discrete:
    """Normalize a nonnegative 2-D array into a measure on its pixel centers."""
    img = np.asarray(pixels, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if np.any(img < 0) or not np.all(np.isfinite(img)):
        raise ValueError("pixel values must be finite and nonnegative")
    if not np.any(img > 0):
        raise ValueError("image has no positive pixels")
    if grid is None:
        grid = SupportGrid.grid2d(*img.shape)
    elif grid.space != "grid2d" or grid.n != img.size:
        raise SpaceMismatch(f"grid of {grid.n} points does not match image {img.shape}")
    return Discrete(grid.points, img.ravel(), "grid2d")


# -- file formats -------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Load a binary PGM (P5) or a whitespace-separated text matrix."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im, dtype=float)
    arr = np.loadtxt(path, ndmin=2)
    return arr.astype(float)


def write_pgm(array, path) -> None:
    """Write a 2-D array as 8-bit P5, scaled so its maximum maps to 255."""
    from PIL import Image

    a = np.asarray(array, dtype=float)
    top = a.max()
    scaled = np.zeros_like(a) if top <= 0 else np.clip(a / top, 0, 1) * 255.0
    Image.fromarray(np.rint(scaled).astype(np.uint8), mode="L").save(path, format="PPM")


def write_discrete_csv(d: Discrete, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        atoms = d.atoms.reshape(len(d.weights), -1)
        for weight, coords in zip(d.weights, atoms):
            w.writerow([repr(float(weight))] + [repr(float(c)) for c in coords])


def read_discrete_csv(path, space: str = "line") -> Discrete:
    rows = [r for r in csv.reader(open(path, newline="")) if r]
    if not rows:
        raise ValueError(f"{path}: empty measure file")
    weights = [float(r[0]) for r in rows]
    atoms = [[float(x) for x in r[1:]] for r in rows]
    if any(len(a) != _dim(space) for a in atoms):
        raise SpaceMismatch(f"{path}: rows must carry {_dim(space)} coordinate(s) for {space}")
    return Discrete(np.array(atoms), np.array(weights), space)
