"""Discrete maps from a disk of radius r into R^{2n}.

A ``DiskGrid`` is the Cartesian lattice over [-r, r]^2 with an odd node
count per axis (so the origin is a node), restricted to the closed disk
|z| <= r.  The interior mask |z| <= r - 2h marks where centered differences
are trusted; the remaining boundary ring uses one-sided stencils pointing
inward (second order where two inward neighbors exist).  All sup-type
diagnostics are taken over the interior mask only, so the lower-order ring
never pollutes convergence measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (InvalidGrid, InvalidParams, OutsideDisk,
                     OutsideInterpolationRange)
from .structure import ComplexConvention

_MASK_SLACK = 1e-12


class DiskGrid:
    """Lattice discretization of the closed disk of radius r."""

    def __init__(self, r: float, N: int):
        self.r = float(r)
        self.N = int(N)
        self.h = 2.0 * self.r / (self.N - 1)
        self.xs = np.linspace(-self.r, self.r, self.N)
        X, Y = np.meshgrid(self.xs, self.xs, indexing="ij")
        self.X, self.Y = X, Y
        self.Z = X + 1j * Y
        self.R2 = X * X + Y * Y
        rr = self.r * self.r
        self.mask = self.R2 <= rr * (1.0 + _MASK_SLACK)
        rin = self.r - 2.0 * self.h
        if rin > 0:
            self.interior = self.mask & (self.R2 <= rin * rin * (1.0 + _MASK_SLACK))
        else:
            self.interior = np.zeros_like(self.mask)
        self._center = (self.N - 1) // 2
        self._dx = None
        self._dy = None
        self._cg = None
        self._ring_ext = None

    @property
    def node_count(self) -> int:
        return int(self.mask.sum())

    @property
    def center_index(self) -> tuple:
        return (self._center, self._center)

    def nodes(self) -> np.ndarray:
        """Coordinates (m, 2) of the retained nodes, row-major order."""
        return np.stack([self.X[self.mask], self.Y[self.mask]], axis=-1)

    def same_geometry(self, other: "DiskGrid") -> bool:
        return self.N == other.N and abs(self.r - other.r) <= 1e-12 * max(self.r, other.r)

    def scaled(self, factor: float) -> "DiskGrid":
        """Grid with all coordinates multiplied by ``factor``; the retention
        masks are shared, so node sets correspond one to one."""
        if not factor > 0:
            raise InvalidGrid("scale factor must be positive")
        g = object.__new__(DiskGrid)
        g.r = self.r * factor
        g.N = self.N
        g.h = self.h * factor
        g.xs = self.xs * factor
        g.X = self.X * factor
        g.Y = self.Y * factor
        g.Z = self.Z * factor
        g.R2 = self.R2 * factor * factor
        g.mask = self.mask
        g.interior = self.interior
        g._center = self._center
        g._dx = None
        g._dy = None
        g._cg = None
        g._ring_ext = None
        return g

    # Difference operators act on flattened (N*N, c) arrays; rows for nodes
    # outside the mask are zero.
    def _diff_matrix(self, axis: int) -> sp.csr_matrix:
        N, h = self.N, self.h
        coord = self.X if axis == 0 else self.Y
        idx = np.arange(N * N).reshape(N, N)

        def neighbor(j, k, d):
            return (j + d, k) if axis == 0 else (j, k + d)

        rows, cols, vals = [], [], []

        jj, kk = np.nonzero(self.interior)
        for d, w in ((1, 0.5 / h), (-1, -0.5 / h)):
            nj, nk = neighbor(jj, kk, d)
            rows.append(idx[jj, kk])
            cols.append(idx[nj, nk])
            vals.append(np.full(jj.shape, w))

        # boundary ring: one-sided stencils pointing inward, second order
        # where two inward neighbors exist (first order would leave an
        # h-independent noise floor in densities built from derivatives)
        ring = self.mask & ~self.interior
        jj, kk = np.nonzero(ring)
        if jj.size:
            c = coord[jj, kk]
            prefer = np.where(c > 0, -1, 1)

            def available(d, step=1):
                nj, nk = neighbor(jj, kk, d * step)
                ok = (nj >= 0) & (nj < N) & (nk >= 0) & (nk < N)
                res = np.zeros(jj.shape, dtype=bool)
                res[ok] = self.mask[nj[ok], nk[ok]]
                return res

            ok1 = available(prefer)
            ok2 = available(-prefer)
            dirs = np.where(ok1, prefer, np.where(ok2, -prefer, 0))
            deep = available(dirs, step=2) & (dirs != 0)

            sel = (dirs != 0) & deep
            if sel.any():
                js, ks, ds = jj[sel], kk[sel], dirs[sel]
                n1 = neighbor(js, ks, ds)
                n2 = neighbor(js, ks, 2 * ds)
                rows.extend([idx[js, ks]] * 3)
                cols.extend([idx[js, ks], idx[n1], idx[n2]])
                vals.extend([-1.5 * ds / h, 2.0 * ds / h, -0.5 * ds / h])
            sel = (dirs != 0) & ~deep
            if sel.any():
                js, ks, ds = jj[sel], kk[sel], dirs[sel]
                n1 = neighbor(js, ks, ds)
                rows.extend([idx[js, ks]] * 2)
                cols.extend([idx[n1], idx[js, ks]])
                vals.extend([ds / h, -ds / h])

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals).astype(np.float64)
        return sp.coo_matrix((vals, (rows, cols)), shape=(N * N, N * N)).tocsr()

    def ring_extension(self) -> sp.csr_matrix:
        """Operator replacing boundary-ring samples of a nodal field by the
        linear inward extrapolation of its interior values (along the
        dominant coordinate axis).  Fields assembled from ring derivatives
        carry O(h)-level noise; solvers extend their densities through this
        operator so the noise never feeds back into the interior."""
        if self._ring_ext is not None:
            return self._ring_ext
        N = self.N
        idx = np.arange(N * N).reshape(N, N)
        rows, cols, vals = [], [], []
        jj, kk = np.nonzero(self.mask & ~self.interior)
        interior_rows = np.nonzero(self.interior.ravel())[0]
        rows.extend(interior_rows)
        cols.extend(interior_rows)
        vals.extend(np.ones(interior_rows.size))
        for j, k in zip(jj, kk):
            x, y = self.X[j, k], self.Y[j, k]
            if abs(x) >= abs(y):
                step = (-1 if x > 0 else 1, 0)
            else:
                step = (0, -1 if y > 0 else 1)
            a = None
            ja, ka = j, k
            dist = 0
            for _ in range(8):
                ja, ka = ja + step[0], ka + step[1]
                dist += 1
                if not (0 <= ja < N and 0 <= ka < N):
                    break
                if self.interior[ja, ka]:
                    a = (ja, ka, dist)
                    break
            if a is None:
                rows.append(idx[j, k])
                cols.append(idx[j, k])
                vals.append(1.0)
                continue
            jb, kb = a[0] + step[0], a[1] + step[1]
            if 0 <= jb < N and 0 <= kb < N and self.interior[jb, kb]:
                rows.extend([idx[j, k], idx[j, k]])
                cols.extend([idx[a[0], a[1]], idx[jb, kb]])
                vals.extend([1.0 + a[2], -float(a[2])])
            else:
                rows.append(idx[j, k])
                cols.append(idx[a[0], a[1]])
                vals.append(1.0)
        self._ring_ext = sp.coo_matrix(
            (np.asarray(vals), (np.asarray(rows), np.asarray(cols))),
            shape=(N * N, N * N)).tocsr()
        return self._ring_ext

    def dx_apply(self, values: np.ndarray) -> np.ndarray:
        if self._dx is None:
            self._dx = self._diff_matrix(0)
        flat = values.reshape(self.N * self.N, -1)
        return (self._dx @ flat).reshape(values.shape)

    def dy_apply(self, values: np.ndarray) -> np.ndarray:
        if self._dy is None:
            self._dy = self._diff_matrix(1)
        flat = values.reshape(self.N * self.N, -1)
        return (self._dy @ flat).reshape(values.shape)

    def __repr__(self):
        return f"DiskGrid(r={self.r}, N={self.N}, nodes={self.node_count})"


def make_grid(r: float, N: int) -> DiskGrid:
    """Build the disk lattice; N must be odd and at least 3."""
    if not (isinstance(N, (int, np.integer)) and N % 2 == 1 and N >= 3):
        raise InvalidGrid(f"node count per axis must be an odd integer >= 3, got {N!r}")
    if not (np.isfinite(r) and r > 0):
        raise InvalidGrid(f"radius must be a positive finite number, got {r!r}")
    return DiskGrid(float(r), int(N))


# Catmull-Rom weights; third-order accurate, used only by internal
# resampling (public interpolation stays bilinear).
def _cr_weights(s: np.ndarray) -> np.ndarray:
    s2 = s * s
    s3 = s2 * s
    return np.stack([
        -0.5 * s3 + s2 - 0.5 * s,
        1.5 * s3 - 2.5 * s2 + 1.0,
        -1.5 * s3 + 2.0 * s2 + 0.5 * s,
        0.5 * s3 - 0.5 * s2,
    ])


@dataclass
class DiskMap:
    """Grid samples of a map disk -> R^{2n}; values are zero off the disk."""

    grid: DiskGrid
    values: np.ndarray
    convention: ComplexConvention = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape[:2] != (self.grid.N, self.grid.N) or vals.ndim != 3:
            raise InvalidParams(f"values must have shape (N, N, 2n), got {vals.shape}")
        if vals.shape[2] % 2 or vals.shape[2] < 2:
            raise InvalidParams("last axis must have even length 2n")
        if not np.all(np.isfinite(vals[self.grid.mask])):
            raise InvalidParams("map has non-finite values at retained nodes")
        self.values = np.where(self.grid.mask[..., None], vals, 0.0)
        if self.convention is None:
            self.convention = ComplexConvention(vals.shape[2] // 2)

    @classmethod
    def from_function(cls, grid: DiskGrid, fn, n: int = 1) -> "DiskMap":
        """Sample fn(Z) -> (N, N, 2n) on the grid."""
        vals = np.asarray(fn(grid.Z), dtype=np.float64)
        return cls(grid, vals, ComplexConvention(n))

    @property
    def n(self) -> int:
        return self.values.shape[2] // 2

    def copy(self) -> "DiskMap":
        return DiskMap(self.grid, self.values.copy(), self.convention)

    def component_complex(self, m: int) -> np.ndarray:
        return self.values[..., 2 * m] + 1j * self.values[..., 2 * m + 1]

    def value_at_center(self) -> np.ndarray:
        c = self.grid.center_index
        return self.values[c[0], c[1], :].copy()

    def sup_norm(self, interior_only: bool = False) -> float:
        region = self.grid.interior if interior_only else self.grid.mask
        if not region.any():
            return 0.0
        return float(np.max(np.abs(self.values[region])))

    def sample(self, points, method: str = "bilinear") -> np.ndarray:
        """Interpolate at points (complex array or (m, 2)); returns (m, 2n).

        ``bilinear`` needs the full surrounding cell; ``cubic`` uses a 4x4
        Catmull-Rom stencil and silently falls back to bilinear where that
        stencil leaves the disk.
        """
        pts = np.asarray(points)
        if pts.dtype.kind != "c":
            pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
            pts = pts[..., 0] + 1j * pts[..., 1]
        pts = np.atleast_1d(pts)
        g = self.grid
        radius = np.abs(pts)
        limit = g.r - g.h
        bad = radius > limit * (1.0 + 1e-12)
        if bad.any():
            z = pts[np.argmax(radius)]
            raise OutsideInterpolationRange(
                f"point {z} at |z|={abs(z):.6g} beyond interpolation limit {limit:.6g}")

        fx = (pts.real + g.r) / g.h
        fy = (pts.imag + g.r) / g.h
        # Snap to exact node coordinates so stored values are returned verbatim.
        fx = np.where(np.abs(fx - np.rint(fx)) < 1e-9, np.rint(fx), fx)
        fy = np.where(np.abs(fy - np.rint(fy)) < 1e-9, np.rint(fy), fy)
        j = np.clip(np.floor(fx).astype(int), 0, g.N - 2)
        k = np.clip(np.floor(fy).astype(int), 0, g.N - 2)
        s = fx - j
        t = fy - k

        corners_ok = (g.mask[j, k] & g.mask[j + 1, k]
                      & g.mask[j, k + 1] & g.mask[j + 1, k + 1])
        if not corners_ok.all():
            i = int(np.argmin(corners_ok))
            raise OutsideInterpolationRange(
                f"cell around point {pts[i]} extends beyond the disk")

        v = self.values
        bil = ((1 - s) * (1 - t))[:, None] * v[j, k] \
            + (s * (1 - t))[:, None] * v[j + 1, k] \
            + ((1 - s) * t)[:, None] * v[j, k + 1] \
            + (s * t)[:, None] * v[j + 1, k + 1]
        if method == "bilinear":
            return bil
        if method != "cubic":
            raise InvalidParams(f"unknown interpolation method {method!r}")

        ok = (j >= 1) & (j + 2 < g.N) & (k >= 1) & (k + 2 < g.N)
        if ok.any():
            ji, ki = j[ok], k[ok]
            block_ok = np.ones(ji.shape, dtype=bool)
            for a in range(-1, 3):
                for b in range(-1, 3):
                    block_ok &= g.mask[ji + a, ki + b]
            ok[np.nonzero(ok)[0][~block_ok]] = False
        out = bil
        if ok.any():
            ji, ki = j[ok], k[ok]
            wx = _cr_weights(s[ok])
            wy = _cr_weights(t[ok])
            acc = np.zeros((ji.size, v.shape[2]))
            for a in range(4):
                for b in range(4):
                    w = (wx[a] * wy[b])[:, None]
                    acc += w * v[ji + a - 1, ki + b - 1]
            out = bil.copy()
            out[ok] = acc
        return out


def eval_interp(u: DiskMap, z) -> np.ndarray:
    """Bilinear interpolation at a single point of the disk; exact at nodes
    and for affine maps.  Requires |z| <= r - h with the surrounding cell
    fully inside the disk."""
    out = u.sample(np.atleast_1d(np.asarray(z, dtype=np.complex128)), method="bilinear")
    return out[0]


def resample(source: DiskMap, grid: DiskGrid, transform=None,
             method: str = "cubic") -> DiskMap:
    """Sample ``source`` (optionally precomposed with ``transform``) at the
    retained nodes of ``grid``; off-disk lattice corners are never touched."""
    pts = grid.Z[grid.mask]
    if transform is not None:
        pts = transform(pts)
    vals = np.zeros((grid.N, grid.N, source.values.shape[-1]))
    vals[grid.mask] = source.sample(pts, method=method)
    return DiskMap(grid, vals, source.convention)


def d_dz(u: DiskMap) -> DiskMap:
    """Wirtinger derivative (d/dx - i d/dy)/2, per complex component."""
    ux = u.grid.dx_apply(u.values)
    uy = u.grid.dy_apply(u.values)
    return DiskMap(u.grid, 0.5 * (ux - u.convention.mul_i(uy)), u.convention)


def d_dzbar(u: DiskMap) -> DiskMap:
    """Conjugate Wirtinger derivative (d/dx + i d/dy)/2."""
    ux = u.grid.dx_apply(u.values)
    uy = u.grid.dy_apply(u.values)
    return DiskMap(u.grid, 0.5 * (ux + u.convention.mul_i(uy)), u.convention)


def poincare_distance(a, b, r: float = 1.0) -> float:
    """Hyperbolic distance on the disk of radius r:
    arctanh(|r (a - b)| / |r^2 - conj(a) b|)."""
    a = complex(a)
    b = complex(b)
    if abs(a) >= r or abs(b) >= r:
        raise OutsideDisk(f"points must lie strictly inside the disk of radius {r}")
    num = r * abs(a - b)
    den = abs(r * r - np.conj(a) * b)
    return float(np.arctanh(num / den))


@dataclass
class MobiusAutomorphism:
    """Conformal self-map of the disk of radius r swapping 0 and z0."""

    z0: complex
    r: float

    def __post_init__(self):
        self.z0 = complex(self.z0)
        if abs(self.z0) >= self.r:
            raise OutsideDisk(f"|z0|={abs(self.z0):.6g} must be < r={self.r}")

    def __call__(self, z):
        z = np.asarray(z, dtype=np.complex128)
        rr = self.r * self.r
        return rr * (self.z0 - z) / (rr - np.conj(self.z0) * z)


def mobius_swap(z0, r: float = 1.0) -> MobiusAutomorphism:
    """The involutive disk automorphism with L(0) = z0 and L(z0) = 0."""
    return MobiusAutomorphism(complex(z0), float(r))


def sup_poincare_derivative(f: DiskMap, weight_radius: float | None = None):
    """Maximum over interior nodes of |df/dx(z)| (r^2 - |z|^2) / r^2.

    Returns ``(s, zstar)`` with the attaining node; ties are broken by the
    smallest |z|, then lexicographic (x, y) order, so downstream recentering
    is deterministic.  ``weight_radius`` overrides the radius used in the
    weight (the grid's own radius by default), which is what makes the
    quantity comparable across maps sampled on shrunken domains.
    """
    g = f.grid
    if not g.interior.any():
        return 0.0, 0j
    r = g.r if weight_radius is None else float(weight_radius)
    dx = g.dx_apply(f.values)
    norms = np.linalg.norm(dx, axis=-1)
    weight = (r * r - g.R2) / (r * r)
    vals = norms[g.interior] * weight[g.interior]
    xs = g.X[g.interior]
    ys = g.Y[g.interior]
    r2 = g.R2[g.interior]
    order = np.lexsort((ys, xs, r2, -vals))
    best = order[0]
    return float(vals[best]), complex(xs[best], ys[best])


def to_csv(u: DiskMap, path_or_file) -> None:
    """Write retained nodes as CSV rows: x, y, value components."""
    g = u.grid
    cols = [g.X[g.mask], g.Y[g.mask]]
    cols.extend(u.values[g.mask][:, i] for i in range(u.values.shape[2]))
    data = np.stack(cols, axis=-1)
    header = "x,y," + ",".join(f"v{i}" for i in range(u.values.shape[2]))
    if hasattr(path_or_file, "write"):
        np.savetxt(path_or_file, data, delimiter=",", header=header, comments="")
    else:
        with open(path_or_file, "w", encoding="utf-8") as fh:
            np.savetxt(fh, data, delimiter=",", header=header, comments="")


def to_json_obj(u: DiskMap) -> dict:
    """JSON envelope with grid metadata and node values."""
    g = u.grid
    return {
        "kind": "diskmap",
        "grid": {"r": g.r, "N": g.N, "h": g.h},
        "n": u.n,
        "pairing": "interleaved",
        "interpolation": "bilinear",
        "nodes": np.stack([g.X[g.mask], g.Y[g.mask]], axis=-1).tolist(),
        "values": u.values[g.mask].tolist(),
    }


def from_json_obj(obj: dict) -> DiskMap:
    if obj.get("kind") != "diskmap":
        raise InvalidParams("not a diskmap envelope")
    g = make_grid(obj["grid"]["r"], obj["grid"]["N"])
    vals = np.zeros((g.N, g.N, 2 * obj["n"]))
    vals[g.mask] = np.asarray(obj["values"], dtype=np.float64)
    return DiskMap(g, vals, ComplexConvention(obj["n"]))

