"""
Assembly Module - Stiffness assembly and boundary conditions.

assemble_laplace builds the Laplace stiffness matrix (and an optional
load vector) element by element; apply_bcs turns it into a solvable
system by adding Robin and Neumann boundary terms, merging periodic
dofs and eliminating Dirichlet dofs symmetrically.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from scipy import sparse

from geometry.mesh import DEGENERATE_AREA, Mesh, MeshError
from .quadrature import gauss_line_rule, triangle_rule
from .space import (FeSpace, barycentric_gradients, edge_shape_values,
                    shape_gradients, shape_values)


logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-13

Data = Union[float, Callable[[np.ndarray], np.ndarray]]


def _as_values(data: Data, points: np.ndarray) -> np.ndarray:
    if callable(data):
        values = np.asarray(data(points), dtype=float).reshape(-1)
        return np.broadcast_to(values, (len(points),)).copy()
    return np.full(len(points), float(data))


# ----------------------------------------------------------------------
# Boundary conditions
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Dirichlet:
    """u = value on the segment."""
    value: Data = 0.0

    def values(self, points: np.ndarray) -> np.ndarray:
        return _as_values(self.value, points)


@dataclass(frozen=True)
class NeumannFlux:
    """Outward normal derivative du/dn = flux on the segment."""
    flux: Data = 0.0

    def values(self, points: np.ndarray) -> np.ndarray:
        return _as_values(self.flux, points)


@dataclass(frozen=True)
class Robin:
    """u = alpha du/dnu with nu the inward normal, alpha > 0."""
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(
                f"Robin coefficient must be positive, got {self.alpha} "
                f"(use Dirichlet for alpha = 0)")


@dataclass(frozen=True)
class Periodic:
    """Segment merged with its periodic partner through Mesh.periodic_pairs."""


@dataclass(frozen=True)
class Natural:
    """Homogeneous Neumann; nothing to assemble."""


Condition = Union[Dirichlet, NeumannFlux, Robin, Periodic, Natural]


class BcSpec:
    """
    One boundary condition per boundary label.

    Labels absent from a mesh are ignored when the spec is applied, so a
    single spec can serve a family of meshes.
    """

    def __init__(self, conditions: Optional[Dict[str, Condition]] = None,
                 **by_label: Condition):
        self.conditions: Dict[str, Condition] = dict(conditions or {})
        self.conditions.update(by_label)

    def __getitem__(self, label: str) -> Condition:
        return self.conditions[label]

    def __contains__(self, label: str) -> bool:
        return label in self.conditions

    def with_condition(self, label: str, condition: Condition) -> 'BcSpec':
        return BcSpec({**self.conditions, label: condition})

    def validate(self, mesh: Mesh) -> None:
        missing = [lbl for lbl in mesh.labels if lbl not in self.conditions]
        if missing:
            raise ValueError(
                f"Boundary conditions missing for labels {missing} "
                f"of mesh {mesh.name}")
        periodic = [lbl for lbl in mesh.labels
                    if isinstance(self.conditions[lbl], Periodic)]
        if periodic and (mesh.periodic_pairs is None
                         or not len(mesh.periodic_pairs)):
            raise ValueError(
                f"Periodic condition on {periodic} but mesh {mesh.name} "
                f"has no periodic pairs")

    def __str__(self) -> str:
        parts = [f"{lbl}={type(c).__name__}"
                 for lbl, c in sorted(self.conditions.items())]
        return f"BcSpec({', '.join(parts)})"

    def __repr__(self) -> str:
        return self.__str__()


# ----------------------------------------------------------------------
# Systems
# ----------------------------------------------------------------------
@dataclass(eq=False)
class SparseSystem:
    """
    A linear system A x = b over a finite element space.

    Before apply_bcs the unknowns are all dofs of the space. Afterwards
    the unknowns are the free dofs of the periodic-reduced numbering;
    prolongation maps reduced coefficients back to the full space.

    Attributes:
        matrix: Symmetric sparse operator
        rhs: Right-hand side
        space: Finite element space
        constraint_log: Applied transformations, in order
        prolongation: (dof_count, n_reduced) periodic merge, or None
        free: Reduced indices of the unknowns, or None before apply_bcs
        fixed: Reduced indices of Dirichlet dofs
        fixed_values: Dirichlet values at fixed
        coupling: Block A[free, fixed] of the reduced matrix
        base_rhs: Reduced right-hand side at free before elimination
        singular: True when nothing pins the constant mode
    """
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    space: FeSpace
    constraint_log: List[str] = field(default_factory=list)
    prolongation: Optional[sparse.csr_matrix] = None
    free: Optional[np.ndarray] = None
    fixed: Optional[np.ndarray] = None
    fixed_values: Optional[np.ndarray] = None
    coupling: Optional[sparse.csr_matrix] = None
    base_rhs: Optional[np.ndarray] = None
    singular: bool = False

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def constrained(self) -> bool:
        return self.free is not None

    @property
    def to_reduced(self) -> np.ndarray:
        """Reduced index of every dof of the space."""
        if self.prolongation is None:
            return np.arange(self.space.dof_count)
        return self.prolongation.tocoo().col

    def symmetry_error(self) -> float:
        """max |A - A^T| relative to max |A|."""
        diff = abs(self.matrix - self.matrix.T)
        scale = max(abs(self.matrix).max(), 1e-300)
        return float(diff.max() / scale) if diff.nnz else 0.0

    def with_dirichlet_values(self, values: np.ndarray) -> 'SparseSystem':
        """Same system with new Dirichlet values (only the rhs changes)."""
        values = np.asarray(values, dtype=float)
        return SparseSystem(
            self.matrix, self.base_rhs - self.coupling @ values, self.space,
            self.constraint_log, self.prolongation, self.free, self.fixed,
            values, self.coupling, self.base_rhs, self.singular)

    def expand(self, solution: np.ndarray) -> np.ndarray:
        """Full-space coefficients from a solution of this system."""
        x = np.asarray(solution, dtype=float)
        if not self.constrained:
            return x.copy()
        n_reduced = (self.prolongation.shape[1] if self.prolongation is not None
                     else self.space.dof_count)
        reduced = np.zeros(n_reduced)
        reduced[self.free] = x
        reduced[self.fixed] = self.fixed_values
        if self.prolongation is None:
            return reduced
        return self.prolongation @ reduced


def element_stiffness(corners: np.ndarray, order: int = 1) -> np.ndarray:
    """
    Local stiffness matrices int grad(phi_i) . grad(phi_j).

    Args:
        corners: (3, 2) or (M, 3, 2) vertex coordinates, counterclockwise
        order: 1 or 2

    Returns:
        (nloc, nloc) or (M, nloc, nloc) matrices
    """
    corners = np.asarray(corners, dtype=float)
    single = corners.ndim == 2
    corners = corners.reshape(-1, 3, 2)
    glam, det = barycentric_gradients(corners)
    rule = triangle_rule(2 * order)
    grads = shape_gradients(order, rule.barycentric[None, :, :],
                            glam[:, None, :, :])
    local = np.einsum('q,mqid,mqjd->mij', rule.weights, grads, grads)
    local *= 0.5 * det[:, None, None]
    return local[0] if single else local


def assemble_laplace(space: FeSpace,
                     source: Optional[Callable[[np.ndarray], np.ndarray]] = None
                     ) -> SparseSystem:
    """
    Assemble the stiffness matrix and the load vector int source * v.

    Args:
        space: Finite element space
        source: Optional right-hand side function of (n, 2) points

    Returns:
        Unconstrained SparseSystem (zero rhs when source is None)

    Raises:
        MeshError: for a degenerate triangle
    """
    mesh = space.mesh
    corners = mesh.vertices[mesh.triangles]
    areas = 0.5 * barycentric_gradients(corners)[1]
    worst = int(np.argmin(areas))
    if areas[worst] < DEGENERATE_AREA:
        raise MeshError(
            f"{mesh.name}: degenerate triangle {worst} "
            f"{corners[worst].tolist()} with area {areas[worst]:.3e}")

    local = element_stiffness(corners, space.order)
    dofs = space.cell_dofs
    nloc = space.local_size
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = space.dof_count
    matrix = sparse.coo_matrix((local.ravel(), (rows, cols)),
                               shape=(n, n)).tocsr()
    matrix.sum_duplicates()

    rhs = np.zeros(n)
    log = [f"stiffness P{space.order}: {mesh.num_triangles} elements, "
           f"{n} dofs, {triangle_rule(2 * space.order).size}-point rule"]
    if source is not None:
        rule = triangle_rule(2 * space.order + 1)
        points = rule.points(corners)
        f = _as_values(source, points.reshape(-1, 2)).reshape(len(corners), -1)
        phi = shape_values(space.order, rule.barycentric)
        load = np.einsum('q,mq,qi->mi', rule.weights, f, phi) * areas[:, None]
        rhs = np.bincount(dofs.ravel(), weights=load.ravel(), minlength=n)
        log.append(f"load vector: {rule.size}-point rule")

    system = SparseSystem(matrix, rhs, space, log)
    asym = system.symmetry_error()
    if asym > SYMMETRY_TOL:
        raise RuntimeError(f"Assembled stiffness is not symmetric ({asym:.3e})")
    logger.debug("%s", log[0])
    return system


# ----------------------------------------------------------------------
# Boundary terms
# ----------------------------------------------------------------------
def _edge_quadrature(space: FeSpace, label: str, n: int = 3):
    """Trace dofs, lengths, weights, trace basis and points on a label."""
    idx = space.mesh.edges_with_label(label)
    dofs = space.boundary_dofs[idx]
    verts = space.mesh.vertices
    a, b = verts[dofs[:, 0]], verts[dofs[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    rule = gauss_line_rule(n)
    phi = edge_shape_values(space.order, rule.nodes)
    points = a[:, None, :] + rule.nodes[None, :, None] * (b - a)[:, None, :]
    return dofs, length, rule.weights, phi, points


def boundary_quadrature(space: FeSpace, label: str, n: int = 3):
    """
    Gauss points and weights on the edges of a label.

    Returns:
        ((K, n, 2) points, (K, n) weights including edge lengths)
    """
    _, length, w, _, points = _edge_quadrature(space, label, n)
    return points, w[None, :] * length[:, None]


def boundary_mass(space: FeSpace, label: str,
                  coefficient: float = 1.0) -> sparse.csr_matrix:
    """coefficient * int_label u v as a dof_count x dof_count matrix."""
    dofs, length, w, phi, _ = _edge_quadrature(space, label)
    local = np.einsum('q,qi,qj->ij', w, phi, phi)
    blocks = coefficient * length[:, None, None] * local[None, :, :]
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = space.dof_count
    return sparse.coo_matrix((blocks.ravel(), (rows, cols)),
                             shape=(n, n)).tocsr()


def boundary_load(space: FeSpace, label: str, flux: Data) -> np.ndarray:
    """int_label flux * v as a dof vector."""
    dofs, length, w, phi, points = _edge_quadrature(space, label)
    q = _as_values(flux, points.reshape(-1, 2)).reshape(points.shape[:2])
    local = np.einsum('q,eq,qi->ei', w, q, phi) * length[:, None]
    return np.bincount(dofs.ravel(), weights=local.ravel(),
                       minlength=space.dof_count)


def periodic_prolongation(space: FeSpace) -> sparse.csr_matrix:
    """
    Merge right-hand dofs into their left partners.

    Returns:
        (dof_count, n_reduced) 0/1 matrix P with u_full = P u_reduced
    """
    mesh = space.mesh
    master = np.arange(space.dof_count)
    pairs = mesh.periodic_pairs
    partner = {int(l): int(r) for l, r in pairs}
    master[pairs[:, 1]] = pairs[:, 0]
    if space.order == 2:
        lookup = mesh.edge_lookup
        n = mesh.num_vertices
        for a, b in mesh.boundary_edges.tolist():
            if a in partner and b in partner:
                left = lookup[(min(a, b), max(a, b))]
                pa, pb = partner[a], partner[b]
                right = lookup.get((min(pa, pb), max(pa, pb)))
                if right is not None and right != left:
                    master[n + right] = n + left
    keep, reduced = np.unique(master, return_inverse=True)
    return sparse.csr_matrix(
        (np.ones(space.dof_count), (np.arange(space.dof_count), reduced)),
        shape=(space.dof_count, len(keep)))


def apply_bcs(system: SparseSystem, space: FeSpace,
              bcs: BcSpec) -> SparseSystem:
    """
    Apply boundary conditions to an assembled system.

    Robin segments add (1/alpha) int u v to the matrix, Neumann segments
    add int flux v to the rhs, periodic segments merge dofs through a
    prolongation P (A -> P^T A P) and Dirichlet dofs are eliminated
    symmetrically. Where Dirichlet segments meet, labels are applied in
    sorted order and the first value wins.

    Args:
        system: Unconstrained system from assemble_laplace
        space: The system's space
        bcs: Conditions covering every label of the mesh

    Returns:
        Constrained SparseSystem over the free dofs
    """
    if system.constrained:
        raise ValueError("System already has boundary conditions applied")
    mesh = space.mesh
    bcs.validate(mesh)
    matrix = system.matrix.tocsr(copy=True)
    rhs = system.rhs.copy()
    log = list(system.constraint_log)

    anchored = False
    dirichlet_dofs: List[np.ndarray] = []
    dirichlet_values: List[np.ndarray] = []
    periodic = False
    for label in mesh.labels:
        cond = bcs[label]
        if isinstance(cond, Robin):
            matrix = matrix + boundary_mass(space, label, 1.0 / cond.alpha)
            anchored = True
            log.append(f"{label}: Robin alpha={cond.alpha:.6g}")
        elif isinstance(cond, NeumannFlux):
            rhs += boundary_load(space, label, cond.flux)
            log.append(f"{label}: Neumann flux (3-point Gauss)")
        elif isinstance(cond, Dirichlet):
            dofs = space.label_dofs(label)
            dirichlet_dofs.append(dofs)
            dirichlet_values.append(cond.values(space.dof_coords[dofs]))
            log.append(f"{label}: Dirichlet on {len(dofs)} dofs")
        elif isinstance(cond, Periodic):
            periodic = True
        else:
            log.append(f"{label}: natural")

    prolongation = None
    if periodic:
        prolongation = periodic_prolongation(space)
        matrix = (prolongation.T @ matrix @ prolongation).tocsr()
        rhs = prolongation.T @ rhs
        to_reduced = prolongation.tocoo().col
        log.append(f"periodic merge: {space.dof_count} -> "
                   f"{prolongation.shape[1]} dofs")
    else:
        to_reduced = np.arange(space.dof_count)

    n = matrix.shape[0]
    fixed_values = np.full(n, np.nan)
    for dofs, values in zip(dirichlet_dofs, dirichlet_values):
        red = to_reduced[dofs]
        unset = np.isnan(fixed_values[red])
        fixed_values[red[unset]] = values[unset]
    fixed = np.flatnonzero(~np.isnan(fixed_values))
    anchored = anchored or len(fixed) > 0
    free = np.setdiff1d(np.arange(n), fixed)
    values = fixed_values[fixed]

    a_free = matrix[free][:, free].tocsr()
    coupling = matrix[free][:, fixed].tocsr()
    base_rhs = rhs[free]
    if len(free):
        diag = a_free.diagonal()
        if diag.min() <= 0.0:
            raise RuntimeError(
                f"Non-positive diagonal {diag.min():.3e} after elimination")
    log.append(f"eliminated {len(fixed)} Dirichlet dofs, {len(free)} free")

    if not anchored:
        logger.warning("%s: no Dirichlet or Robin segment, system is singular",
                       mesh.name)
    return SparseSystem(a_free, base_rhs - coupling @ values, space, log,
                        prolongation, free, fixed, values, coupling, base_rhs,
                        singular=not anchored)
