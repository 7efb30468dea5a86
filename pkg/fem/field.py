"""
Field Module - Finite element functions, norms and boundary fluxes.

A Field binds a coefficient vector to an FeSpace. It evaluates itself
and its gradient at arbitrary points, integrates L2 / H1 / weighted
Sobolev norms by element quadrature and samples its normal derivative
on a labelled boundary segment as a BoundaryFlux, which can be fed back
to the assembly as Neumann data.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from geometry.mesh import Mesh
from .quadrature import SEVEN_POINT, TriangleRule, gauss_line_rule
from .space import FeSpace, barycentric_gradients, shape_gradients, shape_values


logger = logging.getLogger(__name__)

NORM_KINDS = ('L2', 'H1', 'H1semi')

Box = Tuple[Tuple[float, float], Tuple[float, float]]


class Field:
    """
    A finite element function.

    Attributes:
        space: Finite element space
        coefficients: One value per dof
        name: Label used in logs and file headers
    """

    def __init__(self, space: FeSpace, coefficients: np.ndarray,
                 name: str = 'u'):
        coefficients = np.array(coefficients, dtype=float).reshape(-1)
        if len(coefficients) != space.dof_count:
            raise ValueError(
                f"Field {name}: {len(coefficients)} coefficients for "
                f"{space.dof_count} dofs")
        if not np.all(np.isfinite(coefficients)):
            raise ValueError(f"Field {name} has non-finite coefficients")
        self.space = space
        self.coefficients = coefficients
        self.coefficients.setflags(write=False)
        self.name = name

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def order(self) -> int:
        return self.space.order

    def values(self, points: np.ndarray, strict: bool = True,
               fill: float = np.nan) -> np.ndarray:
        """
        Field values at points.

        Args:
            points: (n, 2) points
            strict: raise PointOutsideMeshError for points outside
            fill: value returned for outside points when not strict

        Returns:
            (n,) values
        """
        tris, phi, _, inside = self.space.evaluate_basis(points, strict)
        c = self.coefficients[self.space.cell_dofs[tris]]
        return np.where(inside, np.einsum('ni,ni->n', phi, c), fill)

    def gradients(self, points: np.ndarray, strict: bool = True,
                  fill: float = np.nan) -> np.ndarray:
        """(n, 2) gradients at points."""
        tris, _, grads, inside = self.space.evaluate_basis(points, strict)
        c = self.coefficients[self.space.cell_dofs[tris]]
        return np.where(inside[:, None], np.einsum('nid,ni->nd', grads, c),
                        fill)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.values(points)

    def with_coefficients(self, coefficients: np.ndarray,
                          name: Optional[str] = None) -> 'Field':
        return Field(self.space, coefficients, name or self.name)

    def element_quadrature(self, rule: TriangleRule = SEVEN_POINT,
                           tris: Optional[np.ndarray] = None):
        """
        Values and gradients at element quadrature points.

        Args:
            rule: Triangle rule
            tris: Triangles to sample (all by default)

        Returns:
            ((M, Q, 2) points, (M, Q) weights including the area,
             (M, Q) values, (M, Q, 2) gradients)
        """
        mesh = self.mesh
        if tris is None:
            tris = np.arange(mesh.num_triangles)
        corners = mesh.vertices[mesh.triangles[tris]]
        glam, det = barycentric_gradients(corners)
        c = self.coefficients[self.space.cell_dofs[tris]]
        phi = shape_values(self.order, rule.barycentric)
        grads = shape_gradients(self.order, rule.barycentric[None, :, :],
                                glam[:, None, :, :])
        weights = rule.weights[None, :] * (0.5 * det)[:, None]
        return (rule.points(corners), weights, c @ phi.T,
                np.einsum('mqid,mi->mqd', grads, c))

    def write(self, prefix: Union[str, Path]) -> Tuple[Path, Path]:
        """Write <prefix>.mesh and <prefix>.field (17 significant digits)."""
        prefix = Path(prefix)
        mesh_path = self.mesh.write(prefix.with_suffix('.mesh'))
        field_path = prefix.with_suffix('.field')
        lines = [f"field order {self.order} dofs {self.space.dof_count}"]
        lines += [f"{v:.17g}" for v in self.coefficients]
        field_path.write_text('\n'.join(lines) + '\n')
        return mesh_path, field_path

    @classmethod
    def read(cls, prefix: Union[str, Path],
             bottom_curve: Optional[Callable] = None) -> 'Field':
        """Read a field written by write()."""
        prefix = Path(prefix)
        mesh = Mesh.read(prefix.with_suffix('.mesh'), bottom_curve).validate()
        lines = prefix.with_suffix('.field').read_text().split('\n')
        head = lines[0].split()
        if head[0] != 'field' or head[1::2] != ['order', 'dofs']:
            raise ValueError(f"{prefix}.field: bad header '{lines[0]}'")
        order, count = int(head[2]), int(head[4])
        values = np.array([float(v) for v in lines[1:1 + count]])
        return cls(FeSpace(mesh, order), values, name=prefix.stem)

    def __str__(self) -> str:
        return (f"Field({self.name}, P{self.order}, "
                f"dofs={self.space.dof_count}, mesh={self.mesh.name})")

    def __repr__(self) -> str:
        return self.__str__()


def evaluate(field: Field, point: Sequence[float]) -> float:
    """Value of field at a single point; raises outside the mesh."""
    return float(field.values(np.asarray(point, dtype=float)[None, :])[0])


def _box_mask(mesh: Mesh, subdomain: Optional[Box]) -> np.ndarray:
    if subdomain is None:
        return np.arange(mesh.num_triangles)
    (x0, x1), (y0, y1) = subdomain
    c = mesh.centroids()
    inside = ((c[:, 0] >= x0) & (c[:, 0] <= x1)
              & (c[:, 1] >= y0) & (c[:, 1] <= y1))
    tris = np.flatnonzero(inside)
    if len(tris) == 0:
        raise ValueError(
            f"Subdomain {subdomain} contains no triangle of {mesh.name}")
    return tris


def _combine(kind: str, weights: np.ndarray, values: np.ndarray,
             grads: np.ndarray) -> float:
    if kind not in NORM_KINDS:
        raise ValueError(f"Unknown norm '{kind}', expected one of {NORM_KINDS}")
    total = 0.0
    if kind in ('L2', 'H1'):
        total += float(np.sum(weights * values ** 2))
    if kind in ('H1', 'H1semi'):
        total += float(np.sum(weights * np.sum(grads ** 2, axis=-1)))
    return float(np.sqrt(total))


def norm(field: Field, kind: str = 'L2',
         subdomain: Optional[Box] = None) -> float:
    """
    L2, H1 or H1-seminorm of a field.

    Args:
        field: Field to measure
        kind: 'L2', 'H1' or 'H1semi'
        subdomain: ((x0, x1), (y0, y1)); triangles whose centroid lies in
            the box are integrated

    Returns:
        Norm value
    """
    tris = _box_mask(field.mesh, subdomain)
    _, w, u, g = field.element_quadrature(SEVEN_POINT, tris)
    return _combine(kind, w, u, g)


def error_norm(field: Field, exact: Callable[[np.ndarray], np.ndarray],
               kind: str = 'L2',
               exact_gradient: Optional[Callable] = None,
               subdomain: Optional[Box] = None) -> float:
    """Norm of field - exact, the exact solution sampled at quadrature points."""
    tris = _box_mask(field.mesh, subdomain)
    pts, w, u, g = field.element_quadrature(SEVEN_POINT, tris)
    flat = pts.reshape(-1, 2)
    du = u - np.asarray(exact(flat), dtype=float).reshape(u.shape)
    dg = g
    if kind != 'L2':
        if exact_gradient is None:
            raise ValueError(f"{kind} error needs the exact gradient")
        dg = g - np.asarray(exact_gradient(flat), dtype=float).reshape(g.shape)
    return _combine(kind, w, du, dg)


def difference_norm(a: Field, b: Field, kind: str = 'L2',
                    subdomain: Optional[Box] = None,
                    fill: Optional[float] = None,
                    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None
                    ) -> float:
    """
    Norm of a - b for fields on different meshes.

    Quadrature runs on the triangles of a; b is evaluated at those points.

    Args:
        a: Field providing the quadrature
        b: Field evaluated at the quadrature points of a
        kind: 'L2', 'H1' or 'H1semi'
        subdomain: Optional integration box
        fill: Value of b (and zero gradient) where a point of a falls
            outside the mesh of b; None raises instead
        weight: Optional weight multiplying the integrand

    Returns:
        Norm value
    """
    tris = _box_mask(a.mesh, subdomain)
    pts, w, u, g = a.element_quadrature(SEVEN_POINT, tris)
    flat = pts.reshape(-1, 2)
    strict = fill is None
    fill = 0.0 if fill is None else fill
    du = u - b.values(flat, strict, fill).reshape(u.shape)
    dg = g
    if kind != 'L2':
        dg = g - b.gradients(flat, strict, 0.0).reshape(g.shape)
    if weight is not None:
        w = w * np.asarray(weight(flat), dtype=float).reshape(w.shape)
    return _combine(kind, w, du, dg)


def weighted_norm(field: Field, m: int, alpha: float,
                  origin: Sequence[float] = (0.0, 0.0),
                  subdomain: Optional[Box] = None) -> float:
    """
    Weighted Sobolev norm with weight (1 + rho^2)^(alpha + |lambda| - m)
    on |D^lambda v|^2, rho the distance to origin, |lambda| <= m.

    Args:
        field: Field to measure
        m: Derivative order, 0 or 1
        alpha: Weight exponent
        origin: Centre of the weight
        subdomain: Optional integration box

    Returns:
        Norm value
    """
    if m not in (0, 1):
        raise ValueError(f"Weighted norms of order {m} are not supported")
    tris = _box_mask(field.mesh, subdomain)
    pts, w, u, g = field.element_quadrature(SEVEN_POINT, tris)
    base = 1.0 + np.sum((pts - np.asarray(origin, dtype=float)) ** 2, axis=-1)
    total = np.sum(w * base ** (alpha - m) * u ** 2)
    if m == 1:
        total += np.sum(w * base ** alpha * np.sum(g ** 2, axis=-1))
    return float(np.sqrt(total))


# ----------------------------------------------------------------------
# Boundary fluxes
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BoundaryFlux:
    """
    Normal derivative of a field sampled on a labelled segment.

    On every edge the sampled values define a quadratic through three
    Gauss points, which reproduces the (linear) normal derivative of a
    P2 field exactly. Axis-aligned segments can be evaluated at any point;
    the flux extends by zero past the ends of the segment.

    Attributes:
        label: Boundary label
        points: (K, 3, 2) Gauss points per edge
        normals: (K, 2) outward normals
        values: (K, 3) normal derivatives at the Gauss points
        weights: (K, 3) quadrature weights (edge length included)
        axis: 0 for a vertical segment x = level, 1 for a horizontal one,
            None otherwise
        level: Constant coordinate of an axis-aligned segment
    """
    label: str
    points: np.ndarray
    normals: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    axis: Optional[int] = None
    level: Optional[float] = None

    @property
    def _along(self) -> int:
        return 1 - self.axis

    def extent(self) -> Tuple[float, float]:
        if self.axis is None:
            raise ValueError(f"{self.label} is not axis-aligned")
        s = self.points[..., self._along]
        return float(s.min()), float(s.max())

    def _panels(self):
        rule = gauss_line_rule(3)
        s = self.points[..., self._along]
        # parameter t in [0, 1] along each edge, increasing with s
        lo = (s[:, 0] * rule.nodes[2] - s[:, 2] * rule.nodes[0]) \
            / (rule.nodes[2] - rule.nodes[0])
        hi = lo + (s[:, 2] - s[:, 0]) / (rule.nodes[2] - rule.nodes[0])
        start, stop = np.minimum(lo, hi), np.maximum(lo, hi)
        order = np.argsort(start)
        return start[order], stop[order], order, lo, hi, rule.nodes

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Flux at points of an axis-aligned segment, zero beyond its ends."""
        if self.axis is None:
            raise ValueError(f"{self.label} is not axis-aligned")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = pts[:, self._along]
        start, stop, order, lo, hi, nodes = self._panels()
        k = np.clip(np.searchsorted(start, s, side='right') - 1, 0,
                    len(start) - 1)
        edge = order[k]
        inside = (s >= start[0] - 1e-12) & (s <= stop[-1] + 1e-12)
        t = (s - lo[edge]) / (hi[edge] - lo[edge])
        basis = np.ones((len(s), 3))
        for i in range(3):
            for j in range(3):
                if i != j:
                    basis[:, i] *= (t - nodes[j]) / (nodes[i] - nodes[j])
        out = np.einsum('ni,ni->n', basis, self.values[edge])
        return np.where(inside, out, 0.0)

    def scaled(self, factor: float) -> 'BoundaryFlux':
        return BoundaryFlux(self.label, self.points, self.normals,
                            factor * self.values, self.weights, self.axis,
                            self.level)

    def integral(self) -> float:
        return float(np.sum(self.weights * self.values))

    def integral_abs(self) -> float:
        return float(np.sum(self.weights * np.abs(self.values)))

    def __str__(self) -> str:
        return (f"BoundaryFlux({self.label}, edges={len(self.values)}, "
                f"int|q|={self.integral_abs():.4e})")

    def __repr__(self) -> str:
        return self.__str__()


def boundary_normal_derivative(field: Field, label: str) -> BoundaryFlux:
    """
    Sample grad(field) . n on a labelled boundary segment.

    Args:
        field: Field, ideally P2 (P1 gives piecewise constant fluxes)
        label: Boundary label

    Returns:
        BoundaryFlux with three Gauss samples per edge
    """
    if field.order == 1:
        logger.warning("%s: normal derivative of a P1 field is piecewise "
                       "constant", field.name)
    mesh = field.mesh
    idx = mesh.edges_with_label(label)
    if len(idx) == 0:
        raise ValueError(f"Mesh {mesh.name} has no '{label}' boundary")
    edges = mesh.oriented_boundary[idx]
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    rule = gauss_line_rule(3)
    pts = a[:, None, :] + rule.nodes[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    normals = mesh.outward_normals[idx]

    # barycentric coordinates inside the owning triangle
    tris = mesh.boundary_owner[idx]
    corners = mesh.vertices[mesh.triangles[tris]]
    glam, _ = barycentric_gradients(corners)
    centroid = corners.mean(axis=1)
    bary = 1.0 / 3.0 + np.einsum('kid,kqd->kqi', glam,
                                 pts - centroid[:, None, :])
    grads = shape_gradients(field.order, bary, glam[:, None, :, :])
    c = field.coefficients[field.space.cell_dofs[tris]]
    grad_u = np.einsum('kqid,ki->kqd', grads, c)
    values = np.einsum('kqd,kd->kq', grad_u, normals)

    axis, level = None, None
    for ax in (0, 1):
        coords = np.r_[a[:, ax], b[:, ax]]
        if np.ptp(coords) <= 1e-12 * max(1.0, np.abs(coords).max()):
            axis, level = ax, float(coords.mean())
    return BoundaryFlux(label, pts, normals, values,
                        rule.weights[None, :] * length[:, None], axis, level)
