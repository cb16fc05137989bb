"""4D box lattices, fields with zero exterior extension, and difference operators.

The domain is the box [0,n]^4 of integer sites (equivalently mesh width
h = 1/n after rescaling to the unit cube).  Fields store only the box;
everything outside is identically zero, and the operators implement that
convention through padding rather than ever materializing the exterior.

Two layers are exposed:

* array kernels (``diff_units``, ``laplacian_units``, ``bilaplacian_units``)
  that act on raw ndarrays in lattice units (unit spacing, zero outside the
  array's bounding box) -- these are what the solvers consume;
* ``Field``-level operations that carry the mesh width h = 1/n and return
  properly scaled quantities (``apply_diff``, ``apply_laplacian``,
  ``apply_bilaplacian``, ``norms``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

Site = tuple[int, int, int, int]

DIM = 4

#: Magic bytes of the field binary format.
FIELD_MAGIC = b"MBF1"


@dataclass(frozen=True)
class GridSpec:
    """Box lattice [0,n]^4 with sites at integer coordinates 0..n per axis."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"grid side count must be positive, got {self.n}")

    @property
    def h(self) -> Fraction:
        """Mesh width 1/n, exact."""
        return Fraction(1, self.n)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n + 1,) * DIM

    @property
    def site_count(self) -> int:
        return (self.n + 1) ** DIM

    @property
    def center(self) -> Site:
        return (self.n // 2,) * DIM

    def contains(self, site) -> bool:
        return all(0 <= v <= self.n for v in site)

    def linear_index(self, site) -> int:
        """Lexicographic linearization of a site."""
        if not self.contains(site):
            raise ValueError(f"site {site} outside [0,{self.n}]^4")
        m = self.n + 1
        i = 0
        for v in site:
            i = i * m + int(v)
        return i

    def site_from_linear(self, index: int) -> Site:
        m = self.n + 1
        if not 0 <= index < m**DIM:
            raise ValueError(f"linear index {index} out of range")
        coords = []
        for _ in range(DIM):
            coords.append(index % m)
            index //= m
        return tuple(reversed(coords))

    def boundary_distance(self, site) -> int:
        """d_N(v): lattice distance to the box boundary; 0 iff on the boundary."""
        return min(min(int(v), self.n - int(v)) for v in site)

    def position(self, site) -> np.ndarray:
        """Continuous position h*v of a site in the unit cube."""
        return np.asarray(site, dtype=float) / self.n


# ---------------------------------------------------------------------------
# array kernels (lattice units, zero extension outside the array)
# ---------------------------------------------------------------------------


def diff_units(a: np.ndarray, axis: int, forward: bool = True) -> np.ndarray:
    """Forward or backward difference with unit spacing and zero extension.

    The result has the same shape as ``a``; values just outside the array are
    taken to be zero.
    """
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if forward:
        # (a(x+e) - a(x)); the +e neighbour of the last slab is zero
        dst[axis] = slice(None, -1)
        src[axis] = slice(1, None)
        out[tuple(dst)] = a[tuple(src)]
        out -= a
    else:
        # (a(x) - a(x-e)); the -e neighbour of the first slab is zero
        out += a
        dst[axis] = slice(1, None)
        src[axis] = slice(None, -1)
        out[tuple(dst)] -= a[tuple(src)]
    return out


def laplacian_units(a: np.ndarray) -> np.ndarray:
    """9-point discrete Laplacian with unit spacing, zero outside the array."""
    out = -2.0 * DIM * a
    for axis in range(DIM):
        lo = [slice(None)] * DIM
        hi = [slice(None)] * DIM
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += a[tuple(hi)]
        out[tuple(hi)] += a[tuple(lo)]
    return out


def bilaplacian_units(a: np.ndarray) -> np.ndarray:
    """Discrete Bilaplacian (Laplacian applied twice), unit spacing.

    The intermediate Laplacian lives on the grown box, so the composition
    sees every nonzero value even though the input box stays fixed.
    """
    w = laplacian_units(np.pad(a, 1))
    return laplacian_units(w)[(slice(1, -1),) * DIM]


def bilaplacian_stencil() -> list[tuple[Site, float]]:
    """The direct Bilaplacian stencil: the 9-point Laplacian convolved with itself.

    Center coefficient 72, axis neighbours -16, planar diagonals 2, double
    steps 1; the coefficients sum to zero.
    """
    lap = {(0, 0, 0, 0): -2.0 * DIM}
    for axis in range(DIM):
        for s in (1, -1):
            off = [0] * DIM
            off[axis] = s
            lap[tuple(off)] = 1.0
    conv: dict[Site, float] = {}
    for o1, c1 in lap.items():
        for o2, c2 in lap.items():
            key = tuple(a + b for a, b in zip(o1, o2))
            conv[key] = conv.get(key, 0.0) + c1 * c2
    return sorted(conv.items())


def bilaplacian_stencil_units(a: np.ndarray) -> np.ndarray:
    """Bilaplacian via the direct stencil; must match :func:`bilaplacian_units`."""
    p = np.pad(a, 2)
    out = np.zeros_like(a)
    n0 = a.shape
    for off, coeff in bilaplacian_stencil():
        sl = tuple(slice(2 + o, 2 + o + s) for o, s in zip(off, n0))
        out += coeff * p[sl]
    return out


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass
class Field:
    """Real-valued function on the box sites, identically zero outside."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        """Sample a vectorized callable fn(x1,x2,x3,x4) at the site positions."""
        axes = np.meshgrid(*(np.arange(grid.n + 1) / grid.n,) * DIM, indexing="ij", sparse=True)
        return cls(grid, np.asarray(fn(*axes), dtype=float) * np.ones(grid.shape))

    def value_at(self, site) -> float:
        """Evaluate with the zero exterior convention."""
        if self.grid.contains(site):
            return float(self.values[tuple(int(v) for v in site)])
        return 0.0

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def apply_diff(field: Field, axis: int, direction: str = "forward") -> Field:
    """Difference quotient (v(x±h e_a) − v(x))/(±h) on the box, zero extension."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    if not 1 <= axis <= DIM:
        raise ValueError(f"axis must be in 1..{DIM}, got {axis}")
    d = diff_units(field.values, axis - 1, forward=(direction == "forward"))
    return Field(field.grid, d * field.grid.n)


def apply_laplacian(field: Field) -> Field:
    """Discrete Laplacian at mesh width h, restricted to the box."""
    h2 = float(field.grid.h) ** 2
    return Field(field.grid, laplacian_units(field.values) / h2)


def apply_bilaplacian(field: Field, via_stencil: bool = False) -> Field:
    """Discrete Bilaplacian at mesh width h, restricted to the box.

    The double-Laplacian path and the direct-stencil path agree to roundoff;
    both are kept so each can serve as the other's oracle.
    """
    h4 = float(field.grid.h) ** 4
    kern = bilaplacian_stencil_units if via_stencil else bilaplacian_units
    return Field(field.grid, kern(field.values) / h4)


@dataclass(frozen=True)
class FieldNorms:
    l2h: float
    linfh: float
    w22h: float


def norms(field: Field) -> FieldNorms:
    """L^2_h, L^inf_h and W^{2,2}_h norms of the zero-extended field.

    All sums run over the whole lattice (hZ)^4; the gradient and the mixed
    second differences therefore pick up the boundary layer of the zero
    extension, which is exactly what the approximation estimates measure.
    """
    h = float(field.grid.h)
    a = np.pad(field.values, 2)
    l2sq = h**4 * float(np.sum(a * a))
    linf = float(np.max(np.abs(a))) if a.size else 0.0
    gradsq = 0.0
    hesssq = 0.0
    for i in range(DIM):
        di = diff_units(a, i, forward=True) / h
        gradsq += h**4 * float(np.sum(di * di))
        for j in range(DIM):
            dij = diff_units(di, j, forward=False) / h
            hesssq += h**4 * float(np.sum(dij * dij))
    return FieldNorms(
        l2h=np.sqrt(l2sq),
        linfh=linf,
        w22h=np.sqrt(l2sq + gradsq + hesssq),
    )


def inner_l2h(u: Field, v: Field) -> float:
    """(u, v)_{L^2_h} over the box (equals the lattice-wide product)."""
    h = float(u.grid.h)
    return h**4 * float(np.sum(u.values * v.values))


# ---------------------------------------------------------------------------
# cutoff profile
# ---------------------------------------------------------------------------


def _smoothstep_quintic(t: np.ndarray) -> np.ndarray:
    """C^2 monotone ramp from 0 at t=0 to 1 at t=1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def cutoff_profile(rho) -> np.ndarray:
    """Radial profile: 1 on [0,1/2], 0 on [1,inf), quintic ramp between."""
    rho = np.asarray(rho, dtype=float)
    return 1.0 - _smoothstep_quintic(2.0 * rho - 1.0)


def cutoff(grid: GridSpec, center, radius: float) -> Field:
    """Restriction to the lattice of the radial cutoff at scale ``radius``.

    Equals 1 within radius/2 of the continuous position of ``center`` and 0
    beyond ``radius``.
    """
    if radius <= 0:
        raise ValueError("cutoff radius must be positive")
    c = np.asarray(center, dtype=float) / grid.n
    axes = np.meshgrid(*(np.arange(grid.n + 1) / grid.n,) * DIM, indexing="ij", sparse=True)
    r2 = sum((ax - cc) ** 2 for ax, cc in zip(axes, c))
    return Field(grid, cutoff_profile(np.sqrt(r2) / radius))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def field_to_bytes(field: Field) -> bytes:
    """Flat binary: 16-byte header (magic, n as u32 LE, 8 reserved zero bytes)
    followed by float64 LE values in lexicographic site order."""
    header = FIELD_MAGIC + struct.pack("<I", field.grid.n) + b"\x00" * 8
    return header + field.values.astype("<f8").tobytes(order="C")


def field_from_bytes(data: bytes) -> Field:
    if data[:4] != FIELD_MAGIC:
        raise ValueError("not a field binary (bad magic)")
    (n,) = struct.unpack("<I", data[4:8])
    grid = GridSpec(n)
    count = grid.site_count
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=16)
    return Field(grid, vals.reshape(grid.shape).copy())


def save_field(field: Field, path) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def field_to_json(field: Field) -> str:
    """JSON export, only sensible for small grids (n <= 8)."""
    if field.grid.n > 8:
        raise ValueError("JSON export is limited to grids with n <= 8")
    doc = {"n": field.grid.n, "values": field.values.ravel().tolist()}
    return json.dumps(doc, indent=2, sort_keys=True)


def field_from_json(text: str) -> Field:
    doc = json.loads(text)
    grid = GridSpec(int(doc["n"]))
    vals = np.asarray(doc["values"], dtype=float).reshape(grid.shape)
    return Field(grid, vals)
