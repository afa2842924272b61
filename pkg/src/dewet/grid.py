"""Uniform rectangular 2D grid, scalar fields, and discrete operators.

All operators assume homogeneous Neumann boundary conditions
(n . grad f = 0) closed with mirrored ghost nodes, which on the boundary
rows is identical to a half-cell finite-volume closure.  With the
trapezoidal quadrature of ``integrate`` this makes ``div_m_grad``
exactly conservative and ``laplacian`` self-adjoint, so discrete energy
identities hold to round-off.

Fields are plain ``(nx, ny)`` float arrays indexed ``f[i, j]`` with node
(i, j) at ``origin + (i*hx, j*hy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered rectangular grid.

    nx, ny are node counts (>= 3 each), hx, hy the spacings.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError(f"spacings must be positive, got hx={self.hx}, hy={self.hy}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def num_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def lx(self) -> float:
        return (self.nx - 1) * self.hx

    @property
    def ly(self) -> float:
        return (self.ny - 1) * self.hy

    @property
    def x(self) -> np.ndarray:
        """Node x-coordinates, shape (nx,)."""
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        """Node y-coordinates, shape (ny,)."""
        return self.origin[1] + self.hy * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays X, Y of shape (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def node_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (1, boundary 1/2, corner 1/4)."""
        wx = np.ones(self.nx)
        wx[0] = wx[-1] = 0.5
        wy = np.ones(self.ny)
        wy[0] = wy[-1] = 0.5
        return np.outer(wx, wy)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    @classmethod
    def from_domain(cls, lx: float, ly: float, nx: int, ny: int,
                    origin: tuple[float, float] = (0.0, 0.0)) -> "Grid":
        """Grid covering [0, lx] x [0, ly] with nx x ny nodes."""
        return cls(nx, ny, lx / (nx - 1), ly / (ny - 1), origin)


@dataclass
class ScalarField:
    """A scalar field sampled on a grid; used for snapshot I/O and state."""

    grid: Grid
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} != grid shape {self.grid.shape}")


def _check_field(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with mirrored-ghost Neumann closure.

    Interior rows are the standard second-order stencil; boundary rows
    use the mirror value f[-1] = f[1], i.e. 2*(f[1]-f[0])/h^2.
    """
    f = _check_field(grid, f)
    out = np.zeros(grid.shape)
    dx = np.diff(f, axis=0) / grid.hx  # x-face gradients, (nx-1, ny)
    dy = np.diff(f, axis=1) / grid.hy
    out[1:-1, :] += (dx[1:, :] - dx[:-1, :]) / grid.hx
    out[0, :] += 2.0 * dx[0, :] / grid.hx
    out[-1, :] += -2.0 * dx[-1, :] / grid.hx
    out[:, 1:-1] += (dy[:, 1:] - dy[:, :-1]) / grid.hy
    out[:, 0] += 2.0 * dy[:, 0] / grid.hy
    out[:, -1] += -2.0 * dy[:, -1] / grid.hy
    return out


def face_mobilities(grid: Grid, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic-mean mobilities on x-faces and y-faces."""
    m = _check_field(grid, m)
    mx = 0.5 * (m[1:, :] + m[:-1, :])
    my = 0.5 * (m[:, 1:] + m[:, :-1])
    return mx, my


def div_m_grad(grid: Grid, m: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Conservative div(m grad f) with zero-flux boundary faces.

    Face mobilities are arithmetic means of the adjacent node values of
    m; the trapezoid-weighted integral of the output telescopes to zero
    exactly.
    """
    f = _check_field(grid, f)
    mx, my = face_mobilities(grid, m)
    fx = mx * np.diff(f, axis=0) / grid.hx  # fluxes on x-faces
    fy = my * np.diff(f, axis=1) / grid.hy
    out = np.zeros(grid.shape)
    out[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / grid.hx
    out[0, :] += 2.0 * fx[0, :] / grid.hx
    out[-1, :] += -2.0 * fx[-1, :] / grid.hx
    out[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / grid.hy
    out[:, 0] += 2.0 * fy[:, 0] / grid.hy
    out[:, -1] += -2.0 * fy[:, -1] / grid.hy
    return out


def gradient(grid: Grid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal gradient: centered in the interior, one-sided at boundaries."""
    f = _check_field(grid, f)
    gx = np.gradient(f, grid.hx, axis=0, edge_order=1)
    gy = np.gradient(f, grid.hy, axis=1, edge_order=1)
    return gx, gy


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Trapezoidal quadrature of f over the domain."""
    f = _check_field(grid, f)
    return float(np.sum(f * grid.node_weights()) * grid.hx * grid.hy)


def gradient_energy_density_integral(grid: Grid, f: np.ndarray) -> float:
    """Integral of |grad f|^2 using face differences.

    This is the discretization compatible with ``laplacian``: the
    quadrature-weighted Laplacian is exactly minus the gradient of this
    quantity, which is what makes the discrete energy-stability
    identities exact.
    """
    f = _check_field(grid, f)
    dx2 = (np.diff(f, axis=0) / grid.hx) ** 2  # (nx-1, ny)
    dy2 = (np.diff(f, axis=1) / grid.hy) ** 2
    wx = np.ones(grid.nx)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny)
    wy[0] = wy[-1] = 0.5
    ex = np.sum(dx2 * wy[None, :])
    ey = np.sum(dy2 * wx[:, None])
    return float((ex + ey) * grid.hx * grid.hy)


# ---------------------------------------------------------------------------
# Field snapshot I/O
#
# Plain-text CSV: a header line with column names, one line with
# nx, ny, hx, hy, time, then one line per x-row of node values.
# All floats printed with 17 significant digits so the round-trip is
# bit exact.
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def write_field(path, field: ScalarField) -> None:
    g = field.grid
    lines = ["nx,ny,hx,hy,time"]
    lines.append(",".join([str(g.nx), str(g.ny), _FMT % g.hx, _FMT % g.hy, _FMT % field.time]))
    for i in range(g.nx):
        lines.append(",".join(_FMT % v for v in field.data[i, :]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "nx,ny,hx,hy,time":
            raise ValueError(f"unexpected snapshot header: {header!r}")
        meta = fh.readline().strip().split(",")
        nx, ny = int(meta[0]), int(meta[1])
        hx, hy, time = float(meta[2]), float(meta[3]), float(meta[4])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (nx, ny):
        raise ValueError(f"snapshot data shape {data.shape}, expected {(nx, ny)}")
    return ScalarField(Grid(nx, ny, hx, hy), data, time)
