"""Uniform 2D grids, discrete calculus, quadrature, and free-space convolution.

Everything downstream (gauge fields, energy functional, reduction solver)
computes on the square [-half_width, half_width]^2 sampled at n points per
axis with spacing 2*half_width/n.  Grid points are

    x_ij = (-half_width + i*spacing, -half_width + j*spacing),

so the right/top edge point half_width itself is not included; for the
rapidly decaying fields handled here the plain scaled sum is a
trapezoid-equivalent quadrature.

Free-space convolution with the singular kernels

    K1(x) = -x1 / (2 pi |x|^2),   K2(x) = -x2 / (2 pi |x|^2),
    LOG(x) = (1/2 pi) log|x|

is carried out by zero-padding to twice the grid size and multiplying
transforms, which avoids periodic wrap-around of these long-range kernels.
Off the origin the kernels are harmonic (or components of a harmonic
gradient), so point sampling at cell centers is accurate to O(h^4) there;
only the origin cell needs care: 0 for K1/K2 by odd symmetry, and the exact
cell average of log for LOG.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft


class KernelId(Enum):
    K1 = "K1"
    K2 = "K2"
    LOG = "LOG"


class TruncationWarning(UserWarning):
    """Field is non-negligible on the boundary ring of its grid."""


class GridMismatchError(ValueError):
    """Two fields living on different grids were combined."""


# mean of log|x| over the unit square [-1/2,1/2]^2; the cell average of
# log|x| over a cell of side h is log(h) + LOG_CELL_MEAN
LOG_CELL_MEAN = -1.0611754268825242

# transform worker count; results are byte-identical for a fixed setting
FFT_WORKERS = 1


@dataclass(frozen=True)
class Grid2D:
    """Square uniform grid on [-half_width, half_width]^2, n points per axis."""

    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 16 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not (self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    def meshes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (X1, X2) with X1 varying along axis 0."""
        return _cached_meshes(self.half_width, self.n)

    def cell_area(self) -> float:
        return self.spacing ** 2


@lru_cache(maxsize=32)
def _cached_meshes(half_width: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    ax = -half_width + (2.0 * half_width / n) * np.arange(n)
    X1, X2 = np.meshgrid(ax, ax, indexing="ij")
    X1.setflags(write=False)
    X2.setflags(write=False)
    return X1, X2


@dataclass(frozen=True)
class Field2D:
    """Real scalar samples on a Grid2D; values[i, j] = f(x1_i, x2_j)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"values shape {v.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field")
        object.__setattr__(self, "values", v)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def field_from_function(grid: Grid2D, fn) -> Field2D:
    X1, X2 = grid.meshes()
    return Field2D(grid, fn(X1, X2))


def zeros_like(grid: Grid2D) -> Field2D:
    return Field2D(grid, np.zeros((grid.n, grid.n)))


def check_same_grid(*fields: Field2D) -> Grid2D:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grids differ: {f.grid} vs {g}")
    return g


def integrate(f: Field2D) -> float:
    """Quadrature of f over the plane: spacing^2 * sum of samples."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite field")
    return float(f.grid.cell_area() * np.sum(f.values))


def gradient(f: Field2D) -> tuple[Field2D, Field2D]:
    """Centered second-order differences (one-sided at the boundary)."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite field")
    h = f.grid.spacing
    d1 = np.gradient(f.values, h, axis=0)
    d2 = np.gradient(f.values, h, axis=1)
    return Field2D(f.grid, d1), Field2D(f.grid, d2)


def boundary_ring_max(values: np.ndarray) -> float:
    return float(
        max(
            np.max(np.abs(values[0, :])),
            np.max(np.abs(values[-1, :])),
            np.max(np.abs(values[:, 0])),
            np.max(np.abs(values[:, -1])),
        )
    )


def skew_gradient(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered difference with zero-extension: an exactly antisymmetric matrix."""
    out = np.zeros_like(values)
    if axis == 0:
        out[:-1, :] += values[1:, :]
        out[1:, :] -= values[:-1, :]
    else:
        out[:, :-1] += values[:, 1:]
        out[:, 1:] -= values[:, :-1]
    out /= 2.0 * h
    return out


def gradient4(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order centered first derivative in the interior, np.gradient edges."""
    out = np.gradient(values, h, axis=axis)
    sl = [slice(None), slice(None)]
    sl[axis] = slice(2, -2)

    def shifted(o):
        s = [slice(None), slice(None)]
        stop = values.shape[axis] - 2 + o
        s[axis] = slice(2 + o, stop if stop != 0 else None)
        return values[tuple(s)]

    out[tuple(sl)] = (
        shifted(-2) - 8.0 * shifted(-1) + 8.0 * shifted(1) - shifted(2)
    ) / (12.0 * h)
    return out


def _kernel_samples(kernel: KernelId, n: int, h: float) -> np.ndarray:
    """Kernel on the wrapped 2n x 2n displacement grid used by the padded FFT."""
    m = 2 * n
    # displacement index order [0, 1, ..., n-1, -n, ..., -1]
    d = (np.arange(m) + n) % m - n
    D1, D2 = np.meshgrid(d * h, d * h, indexing="ij")
    r2 = D1 ** 2 + D2 ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        if kernel is KernelId.K1:
            vals = -D1 / (2.0 * np.pi * r2)
        elif kernel is KernelId.K2:
            vals = -D2 / (2.0 * np.pi * r2)
        else:
            vals = np.log(r2) / (4.0 * np.pi)
    if kernel is KernelId.LOG:
        vals[0, 0] = (np.log(h) + LOG_CELL_MEAN) / (2.0 * np.pi)
    else:
        vals[0, 0] = 0.0
    return vals


@lru_cache(maxsize=16)
def _kernel_fft(kernel: KernelId, n: int, h: float) -> np.ndarray:
    kf = sp_fft.rfft2(_kernel_samples(kernel, n, h), workers=FFT_WORKERS)
    kf.setflags(write=False)
    return kf


def _near_field_correction(kernel: KernelId, grid: Grid2D,
                           values: np.ndarray) -> np.ndarray | None:
    # midpoint sampling of the K kernels carries an h^2 near-field defect
    # -(h^2/4pi) d_i f (exact lattice constant; the d != 0 cells cancel by
    # symmetry); the correction keeps the convolution matrix antisymmetric
    h = grid.spacing
    if kernel is KernelId.K1:
        return (h * h / (4.0 * np.pi)) * skew_gradient(values, h, 0)
    if kernel is KernelId.K2:
        return (h * h / (4.0 * np.pi)) * skew_gradient(values, h, 1)
    return None


def convolve_raw(kernel: KernelId, grid: Grid2D, values: np.ndarray) -> np.ndarray:
    """Aperiodic convolution on raw arrays; no finiteness/boundary checks."""
    n = grid.n
    m = 2 * n
    padded = np.zeros((m, m))
    padded[:n, :n] = values
    kf = _kernel_fft(kernel, n, grid.spacing)
    out = sp_fft.irfft2(sp_fft.rfft2(padded, workers=FFT_WORKERS) * kf,
                        s=(m, m), workers=FFT_WORKERS)
    out = grid.cell_area() * out[:n, :n]
    corr = _near_field_correction(kernel, grid, values)
    if corr is not None:
        out += corr
    return out


def convolve_raw_many(kernels, grid: Grid2D, values: np.ndarray) -> list[np.ndarray]:
    """Convolve one density with several kernels, sharing the forward FFT."""
    n = grid.n
    m = 2 * n
    padded = np.zeros((m, m))
    padded[:n, :n] = values
    fwd = sp_fft.rfft2(padded, workers=FFT_WORKERS)
    area = grid.cell_area()
    out = []
    for k in kernels:
        kf = _kernel_fft(k, n, grid.spacing)
        res = area * sp_fft.irfft2(fwd * kf, s=(m, m), workers=FFT_WORKERS)[:n, :n]
        corr = _near_field_correction(k, grid, values)
        if corr is not None:
            res += corr
        out.append(res)
    return out


def convolve_free_space(kernel: KernelId, f: Field2D) -> Field2D:
    """Free-space (zero-padded) convolution kernel * f on f's grid."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite field")
    peak = f.max_abs()
    if peak > 0 and boundary_ring_max(f.values) > 1e-6 * peak:
        warnings.warn(
            "domain truncation suspect: field non-negligible on the boundary ring",
            TruncationWarning,
            stacklevel=2,
        )
    return Field2D(f.grid, convolve_raw(kernel, f.grid, f.values))


# ---------------------------------------------------------------------------
# discrete operators shared by the energy/reduction modules

def neg_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """5-point -Laplacian with homogeneous Dirichlet data outside the box."""
    out = 4.0 * values.copy()
    out[1:, :] -= values[:-1, :]
    out[:-1, :] -= values[1:, :]
    out[:, 1:] -= values[:, :-1]
    out[:, :-1] -= values[:, 1:]
    out /= h * h
    return out


def inv_helmholtz(values: np.ndarray, h: float, eps2: float = 1.0) -> np.ndarray:
    """Apply (eps2 * (-Laplacian) + I)^-1 via the type-I sine transform.

    The 5-point Dirichlet Laplacian diagonalizes in the sine basis
    sin(pi k (i+1) / (n+1)), so the inverse is exact for the discrete
    operator used by ``neg_laplacian``.
    """
    n = values.shape[0]
    lam = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))) / (h * h)
    denom = 1.0 + eps2 * (lam[:, None] + lam[None, :])
    coeff = sp_fft.dstn(values, type=1, workers=FFT_WORKERS) / denom
    return sp_fft.idstn(coeff, type=1, workers=FFT_WORKERS)


# ---------------------------------------------------------------------------
# serialization

_HEADER_FMT = "# half_width={hw!r} n={n}\n"


def _parse_header(line: str) -> Grid2D:
    parts = dict(tok.split("=") for tok in line.lstrip("# ").split())
    return Grid2D(half_width=float(parts["half_width"]), n=int(parts["n"]))


def save_field(path: str | Path, f: Field2D, fmt: str = "binary") -> None:
    """Write a field with the `# half_width=<v> n=<v>` header line.

    Binary files hold raw little-endian float64 row-major values after the
    header and round-trip bit-exactly.
    """
    path = Path(path)
    header = _HEADER_FMT.format(hw=f.grid.half_width, n=f.grid.n)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(f.values.astype("<f8").tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(header)
            for row in f.values:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    else:
        raise ValueError(f"unknown field format {fmt!r}")


def load_field(path: str | Path) -> Field2D:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii")
        grid = _parse_header(header)
        rest = fh.read()
    n = grid.n
    if len(rest) == 8 * n * n:
        vals = np.frombuffer(rest, dtype="<f8").reshape(n, n).copy()
    else:
        rows = [
            [float(tok) for tok in line.split(",")]
            for line in rest.decode("ascii").strip().splitlines()
        ]
        vals = np.array(rows)
    return Field2D(grid, vals)
