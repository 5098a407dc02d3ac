"""Radial discretization of functions on R^3.

A radial profile u(r) on [0, r_max] is sampled on a uniform mesh.  Volume
integrals use weights that already contain the 4*pi*r^2 factor, so that
``quad(grid, f)`` approximates the integral of f over the ball.

Two quadratures live side by side:

* nodal weights (``grid.weights``) for zeroth-order terms such as the
  mass and the power term;
* edge weights (``grid.edge_weights``) for the Dirichlet integral, which
  is assembled from the difference quotients on each cell.  This is the
  conservative form: the discrete Laplacian is defined as the Riesz
  representative of the Dirichlet form, so ``quad(laplacian(u) * u)``
  reproduces ``dirichlet`` to round-off.

The node at r = 0 carries zero volume and is excluded from every
functional.  Its stored value is cosmetic and is kept consistent with an
even extension by :func:`fill_origin`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidExponentError, InvalidGridError, InvalidScaleError, ShapeError

DEFAULT_R_MAX = 20.0
DEFAULT_N = 2048
MIN_NODES = 16

# end corrections of the trapezoid rule (Gregory), exact for cubics
_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial mesh with volume quadrature weights.

    Attributes:
        r_max: truncation radius.
        n: number of nodes.
        nodes: r_i = i*h, i = 0..n-1.
        weights: nodal volume weights, ``weights[0] == 0``.
        edge_weights: exact shell volumes of the cells [r_i, r_{i+1}],
            with the innermost cell switched off.
    """

    r_max: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    edge_weights: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.r_max / (self.n - 1)

    def __repr__(self) -> str:
        return f"RadialGrid(r_max={self.r_max!r}, n={self.n!r})"

    def same_as(self, other: "RadialGrid") -> bool:
        return self.n == other.n and self.r_max == other.r_max


def make_grid(r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_N) -> RadialGrid:
    """Build the uniform mesh on [0, r_max] with ``n`` nodes."""
    if not np.isfinite(r_max) or r_max <= 0:
        raise InvalidGridError(f"r_max must be positive, got {r_max!r}")
    if int(n) != n or n < MIN_NODES:
        raise InvalidGridError(f"need an integer n >= {MIN_NODES}, got {n!r}")
    n = int(n)
    r_max = float(r_max)
    nodes = np.linspace(0.0, r_max, n)
    h = r_max / (n - 1)

    c = np.ones(n)
    c[:3] = _GREGORY
    c[-3:] = _GREGORY[::-1]
    weights = 4.0 * np.pi * h * c * nodes**2
    weights[0] = 0.0

    edge = 4.0 * np.pi * (nodes[1:] ** 3 - nodes[:-1] ** 3) / 3.0
    # u is flat on [0, h] for an even profile; dropping that cell keeps
    # the origin node out of every functional
    edge[0] = 0.0
    for arr in (nodes, weights, edge):
        arr.setflags(write=False)
    return RadialGrid(r_max=r_max, n=n, nodes=nodes, weights=weights, edge_weights=edge)


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Samples of a radial profile with u(r_max) = 0."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ShapeError(f"expected {self.grid.n} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile contains non-finite samples")
        if values[-1] != 0.0:
            raise ValueError("profile must vanish at r_max (Dirichlet truncation)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_samples(cls, grid: RadialGrid, values) -> "RadialFunction":
        """Wrap raw samples, zeroing the last one and refilling the origin."""
        values = np.array(values, dtype=float)
        if values.shape != (grid.n,):
            raise ShapeError(f"expected {grid.n} samples, got shape {values.shape}")
        values[-1] = 0.0
        return cls(grid, fill_origin(values))

    @classmethod
    def from_callable(cls, grid: RadialGrid, f) -> "RadialFunction":
        values = np.asarray(f(grid.nodes), dtype=float)
        values = values.copy()
        values[-1] = 0.0
        return cls(grid, values)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialFunction":
        return cls(grid, np.zeros(grid.n))

    def __mul__(self, s: float) -> "RadialFunction":
        return RadialFunction(self.grid, self.values * float(s))

    __rmul__ = __mul__

    def __abs__(self) -> "RadialFunction":
        return RadialFunction(self.grid, np.abs(self.values))


def fill_origin(values: np.ndarray) -> np.ndarray:
    """Set ``values[0]`` from the even quadratic through nodes 1 and 2.

    Works in place and returns the array.
    """
    values[0] = (4.0 * values[1] - values[2]) / 3.0
    return values


def gaussian(grid: RadialGrid, width: float = 1.0, amplitude: float = 1.0) -> RadialFunction:
    """``amplitude * exp(-(r/width)^2)`` with the Dirichlet tail applied."""
    return RadialFunction.from_callable(
        grid, lambda r: amplitude * np.exp(-((r / width) ** 2))
    )


def _samples(grid: RadialGrid, f) -> np.ndarray:
    if isinstance(f, RadialFunction):
        f = f.values
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise ShapeError(f"expected {grid.n} samples, got shape {f.shape}")
    return f


def quad(grid: RadialGrid, f) -> float:
    """Volume integral of the sampled radial function ``f``."""
    return float(grid.weights @ _samples(grid, f))


def d_dr(grid: RadialGrid, u) -> np.ndarray:
    """Second-order finite-difference derivative u'(r).

    Central differences inside, a one-sided three-point stencil at r_max,
    and u'(0) = 0 from the even extension.
    """
    v = _samples(grid, u)
    h = grid.h
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = 0.0
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return out


def dirichlet(grid: RadialGrid, u) -> float:
    """Discrete Dirichlet integral of |Du|^2 over R^3."""
    v = _samples(grid, u)
    slope = np.diff(v) / grid.h
    return float(grid.edge_weights @ slope**2)


def stiffness_apply(grid: RadialGrid, u) -> np.ndarray:
    """Half the gradient of :func:`dirichlet` with respect to the samples.

    Returns the nodal vector K u with u.K.u = dirichlet(u).
    """
    v = _samples(grid, u)
    flux = grid.edge_weights * np.diff(v) / grid.h**2
    out = np.zeros_like(v)
    out[:-1] -= flux
    out[1:] += flux
    return out


def stiffness_bands(grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the symmetric tridiagonal matrix K."""
    s = grid.edge_weights / grid.h**2
    diag = np.zeros(grid.n)
    diag[:-1] += s
    diag[1:] += s
    return diag, -s


def laplacian(grid: RadialGrid, u) -> np.ndarray:
    """Discrete -(u'' + 2u'/r) as the Riesz representative of the Dirichlet form.

    Undefined at the zero-volume origin node; the value of node 1 is
    copied there so the returned array is continuous.
    """
    ku = stiffness_apply(grid, u)
    out = np.empty_like(ku)
    out[1:] = ku[1:] / grid.weights[1:]
    out[0] = out[1]
    return out


def rescale(u: RadialFunction, t: float) -> RadialFunction:
    """Fiber map u_t(r) = t * u(r / t) by linear interpolation.

    Samples that map beyond the original support are zero, and the
    Dirichlet sample at r_max is enforced.
    """
    if not np.isfinite(t) or t <= 0:
        raise InvalidScaleError(f"scale must be positive, got {t!r}")
    if t == 1.0:
        return u
    r = u.grid.nodes
    values = t * np.interp(r / t, r, u.values, right=0.0)
    values[-1] = 0.0
    return RadialFunction(u.grid, values)


def norms(u: RadialFunction, q: float | None = None) -> dict:
    """Dirichlet integral, squared L^2 norm and optionally the L^q integral."""
    g = u.grid
    out = {"dirichlet": dirichlet(g, u), "l2sq": quad(g, u.values**2)}
    if q is not None:
        if q < 1:
            raise InvalidExponentError(f"q must be >= 1, got {q!r}")
        out["lq"] = quad(g, np.abs(u.values) ** q)
    return out


def write_profile_csv(path, u: RadialFunction, column: str = "value") -> None:
    g = u.grid
    lines = [f"# r_max={g.r_max!r} n={g.n}", f"r,{column}"]
    lines += [f"{r!r},{v!r}" for r, v in zip(g.nodes.tolist(), u.values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(line: str) -> tuple[float, int]:
    fields = dict(tok.split("=", 1) for tok in line.lstrip("#").split())
    try:
        return float(fields["r_max"]), int(fields["n"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad profile header: {line!r}") from exc


def read_profile_csv(path) -> RadialFunction:
    """Read a profile written by :func:`write_profile_csv`."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing '# r_max=.. n=..' header")
    r_max, n = _parse_header(text[0])
    data = np.loadtxt(text[2:], delimiter=",", ndmin=2)
    grid = make_grid(r_max, n)
    if data.shape != (n, 2):
        raise ShapeError(f"{path}: expected {n} rows of r,value")
    if not np.allclose(data[:, 0], grid.nodes, rtol=0, atol=1e-12 * r_max):
        raise ValueError(f"{path}: r column does not match a uniform grid")
    return RadialFunction(grid, data[:, 1])
