"""Almost complex structures on chart domains and flat tori.

A structure is a point-dependent real ``2n x 2n`` matrix field ``J`` with
``J(p)^2 = -Id``.  The module fixes the identification of C^n with R^{2n}
(interleaved coordinates), validates structure fields, and computes the
complex-dilatation matrix

    q(v) = (Jst + J(v))^{-1} (Jst - J(v)),

which measures the deviation of ``J`` from the constant standard structure
``Jst`` at the point ``v``.  ``q`` vanishes exactly where ``J = Jst``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, Singular, UnknownName


class ComplexConvention:
    """Identification of C^n with R^{2n} in interleaved order (x1, y1, ..., xn, yn).

    ``jst`` is the block-diagonal integer matrix with 2x2 blocks
    ``[[0, -1], [1, 0]]``; multiplying a real vector by ``jst`` equals
    multiplying the corresponding complex vector by ``i``.
    """

    def __init__(self, n: int):
        n = int(n)
        if n < 1:
            raise InvalidParams(f"complex dimension must be >= 1, got {n}")
        self.n = n
        self.dim = 2 * n
        jst = np.zeros((self.dim, self.dim), dtype=np.int64)
        for k in range(n):
            jst[2 * k, 2 * k + 1] = -1
            jst[2 * k + 1, 2 * k] = 1
        self.jst = jst
        self.jst_f = jst.astype(np.float64)

    def mul_i(self, v: np.ndarray) -> np.ndarray:
        """Multiply real-represented vectors (..., 2n) by i."""
        v = np.asarray(v, dtype=np.float64)
        out = np.empty_like(v)
        out[..., 0::2] = -v[..., 1::2]
        out[..., 1::2] = v[..., 0::2]
        return out

    def cmul(self, z, v: np.ndarray) -> np.ndarray:
        """Multiply real-represented vectors by a complex scalar (broadcasts).

        ``z`` may be a scalar or an array; the result has shape
        ``np.shape(z) + (2n,)`` when ``v`` is a single vector.
        """
        z = np.asarray(z, dtype=np.complex128)
        v = np.asarray(v, dtype=np.float64)
        return z.real[..., None] * v + z.imag[..., None] * self.mul_i(v)

    def to_complex(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return v[..., 0::2] + 1j * v[..., 1::2]

    def from_complex(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.complex128)
        out = np.empty(w.shape[:-1] + (2 * w.shape[-1],), dtype=np.float64)
        out[..., 0::2] = w.real
        out[..., 1::2] = w.imag
        return out

    def __repr__(self):
        return f"ComplexConvention(n={self.n})"


@dataclass
class DomainDescriptor:
    """Where a structure field lives.

    ``chart-ball``: the Euclidean ball ``|p - center| <= radius`` in R^{2n}
    (radius may be ``inf`` for a full chart).  ``flat-torus``: R^{2n} modulo
    the unit lattice Z^{2n}; maps are carried in the universal cover and
    point comparison reduces modulo the lattice.
    """

    kind: str
    dim: int
    center: np.ndarray | None = None
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in ("chart-ball", "flat-torus"):
            raise InvalidParams(f"unknown domain kind {self.kind!r}")
        if self.center is None:
            self.center = np.zeros(self.dim)
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.shape != (self.dim,):
            raise InvalidParams("domain center has wrong dimension")
        if not self.radius > 0:
            raise InvalidParams("chart-ball radius must be positive")

    @property
    def is_torus(self) -> bool:
        return self.kind == "flat-torus"

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Reduce cover points to the fundamental domain [0,1)^{2n} (torus only)."""
        points = np.asarray(points, dtype=np.float64)
        if not self.is_torus:
            return points
        return points - np.floor(points)

    def shortest_delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Difference b - a, reduced to the shortest lattice representative on a torus."""
        d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
        if self.is_torus:
            d = d - np.round(d)
        return d

    def point_gap(self, a: np.ndarray, b: np.ndarray) -> float:
        """Distance between two points (modulo the lattice on a torus)."""
        return float(np.linalg.norm(self.shortest_delta(a, b)))

    def contains(self, points: np.ndarray, slack: float = 1e-9) -> bool:
        """Whether every point lies in the domain (always true on a torus)."""
        if self.is_torus or not math.isfinite(self.radius):
            return True
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dist = np.linalg.norm(points - self.center, axis=-1)
        return bool(np.all(dist <= self.radius + slack))


@dataclass
class StructureField:
    """A point-dependent matrix field J with J^2 = -Id on its domain.

    ``eval_fn`` maps an (m, 2n) array of points to an (m, 2n, 2n) array of
    matrices.  On a torus the points are wrapped to the fundamental domain
    before evaluation, so lattice translates produce bit-identical values.
    """

    convention: ComplexConvention
    domain: DomainDescriptor
    eval_fn: object
    name: str = "custom"
    params: dict = field(default_factory=dict)
    smoothness_note: str = "assumed twice continuously differentiable"
    cond_cap: float = 1e8

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Evaluate J at one point (2n,) or a batch (m, 2n)."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.convention.dim:
            raise InvalidParams(
                f"points have dimension {pts.shape[-1]}, expected {self.convention.dim}")
        pts = self.domain.wrap(pts)
        out = np.asarray(self.eval_fn(pts), dtype=np.float64)
        if out.shape != (pts.shape[0], self.convention.dim, self.convention.dim):
            raise InvalidParams("structure evaluation returned a wrong shape")
        return out[0] if single else out


@dataclass
class ValidationReport:
    max_residual: float
    tol: float
    passed: bool
    cond_max: float
    n_samples: int
    invalid_samples: list

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "tol": self.tol,
            "passed": self.passed,
            "cond_max": self.cond_max,
            "n_samples": self.n_samples,
            "invalid_samples": [[int(i), msg] for i, msg in self.invalid_samples],
        }


def validate_structure(J: StructureField, samples: np.ndarray, tol: float = 1e-10) -> ValidationReport:
    """Check ``J(p)^2 + Id ~ 0`` over sample points.

    Reports the worst residual (max absolute entry of ``J^2 + Id``) and the
    worst condition number of ``Jst + J(p)``, which predicts where the
    dilatation matrix is computable.  Evaluation failures at individual
    samples are collected instead of raised.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    eye = np.eye(J.convention.dim)
    invalid: list = []
    try:
        mats = J.eval(samples)
        valid_idx = np.arange(samples.shape[0])
    except Exception:
        rows = []
        valid_idx = []
        for i, p in enumerate(samples):
            try:
                rows.append(J.eval(p))
                valid_idx.append(i)
            except Exception as exc:  # noqa: BLE001 - reported, not raised
                invalid.append((i, str(exc)))
        mats = np.array(rows) if rows else np.zeros((0, J.convention.dim, J.convention.dim))
        valid_idx = np.asarray(valid_idx, dtype=int)

    if mats.shape[0]:
        resid = np.max(np.abs(np.einsum("mij,mjk->mik", mats, mats) + eye))
        cond_max = float(np.max(np.linalg.cond(J.convention.jst_f + mats)))
    else:
        resid, cond_max = math.inf, math.inf
    passed = (not invalid) and resid <= tol
    return ValidationReport(float(resid), float(tol), bool(passed), cond_max,
                            samples.shape[0], invalid)


def q_matrix(J: StructureField, v: np.ndarray) -> np.ndarray:
    """Complex-dilatation matrix (Jst + J(v))^{-1} (Jst - J(v)) at one point.

    Raises ``Singular`` when ``Jst + J(v)`` is not reliably invertible,
    which signals that ``v`` lies outside the region where the structure can
    be treated as a perturbation of the standard one.
    """
    v = np.asarray(v, dtype=np.float64)
    jst = J.convention.jst_f
    jv = J.eval(v)
    m = jst + jv
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > J.cond_cap:
        raise Singular(f"Jst + J(v) has condition {cond:.3e} at v={v.tolist()}")
    return np.linalg.solve(m, jst - jv)


def q_field(J: StructureField, points: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
    """Batched dilatation matrices at (m, 2n) points.

    ``labels`` (optional, same leading length) improves the error message
    when a point fails the conditioning cap.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    jst = J.convention.jst_f
    mats = J.eval(points)
    m = jst + mats
    conds = np.linalg.cond(m)
    worst = int(np.argmax(conds))
    if not np.isfinite(conds[worst]) or conds[worst] > J.cond_cap:
        where = labels[worst] if labels is not None else points[worst]
        raise Singular(
            f"Jst + J ill conditioned (cond={conds[worst]:.3e}) at {np.asarray(where).tolist()}")
    return np.linalg.solve(m, jst[None, :, :] - mats)


def _named_shape(name: str, periodic: bool):
    if name != "sin":
        raise UnknownName(f"unknown perturbation shape {name!r}")
    freq = 2.0 * math.pi if periodic else 1.0

    def sigma(points: np.ndarray) -> np.ndarray:
        return np.sin(freq * points[..., 0])

    return sigma


def _conjugation_eval(conv: ComplexConvention, epsilon: float, b_field):
    eye = np.eye(conv.dim)

    def eval_fn(points: np.ndarray) -> np.ndarray:
        b = np.asarray(b_field(points), dtype=np.float64)
        s = eye + epsilon * b
        return s @ conv.jst_f @ np.linalg.inv(s)

    return eval_fn


def gallery(name: str, n: int = 1, epsilon: float = 0.1, perturbation="sin",
            radius: float = math.inf, center=None, validate: bool = True,
            tol: float = 1e-10) -> StructureField:
    """Build one of the named example structures.

    ``standard``        constant Jst on a chart ball.
    ``conjugated``      J(p) = S(p) Jst S(p)^{-1} with S(p) = Id + eps*B(p);
                        the conjugation preserves J^2 = -Id by construction.
    ``torus-flat``      constant Jst on the unit flat torus.
    ``torus-perturbed`` the conjugated construction with a 1-periodic B.

    ``perturbation`` is either the name of a builtin scalar shape ("sin",
    vanishing at the origin and at lattice points) applied to the elementary
    matrix E_00, or a callable mapping (m, 2n) points to (m, 2n, 2n) bounded
    matrices B(p).
    """
    names = ("standard", "conjugated", "torus-flat", "torus-perturbed")
    if name not in names:
        raise UnknownName(f"unknown gallery structure {name!r}; choose from {names}")
    conv = ComplexConvention(n)
    periodic = name.startswith("torus")
    if periodic:
        domain = DomainDescriptor("flat-torus", conv.dim)
    else:
        domain = DomainDescriptor("chart-ball", conv.dim, center=center, radius=radius)

    if name in ("standard", "torus-flat"):
        jst = conv.jst_f

        def eval_fn(points: np.ndarray) -> np.ndarray:
            return np.broadcast_to(jst, (points.shape[0],) + jst.shape).copy()

        params = {"n": n}
        fld = StructureField(conv, domain, eval_fn, name=name, params=params)
    else:
        if not 0.0 <= epsilon < 1.0:
            raise InvalidParams(f"epsilon must lie in [0, 1), got {epsilon}")
        if callable(perturbation):
            b_field = perturbation
            shape_name = getattr(perturbation, "__name__", "callable")
        else:
            sigma = _named_shape(perturbation, periodic)
            e00 = np.zeros((conv.dim, conv.dim))
            e00[0, 0] = 1.0

            def b_field(points: np.ndarray) -> np.ndarray:
                return sigma(points)[..., None, None] * e00

            shape_name = perturbation
        params = {"n": n, "epsilon": epsilon, "perturbation": shape_name}
        fld = StructureField(conv, domain, _conjugation_eval(conv, epsilon, b_field),
                             name=name, params=params)

    if validate:
        lattice = _validation_lattice(domain, conv.dim)
        report = validate_structure(fld, lattice, tol=tol)
        if not report.passed:
            raise InvalidParams(
                f"gallery {name!r} failed validation: max residual "
                f"{report.max_residual:.3e}, {len(report.invalid_samples)} invalid samples")
    return fld


def _validation_lattice(domain: DomainDescriptor, dim: int, per_axis: int = 5) -> np.ndarray:
    if domain.is_torus:
        axis = np.linspace(0.0, 1.0, per_axis, endpoint=False)
    else:
        b = 1.0 if not math.isfinite(domain.radius) else 0.9 * domain.radius
        axis = np.linspace(-b, b, per_axis)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    if not domain.is_torus:
        pts = pts + domain.center
    return pts
