"""
Space Module - Lagrange P1/P2 finite element spaces on triangles.

Local P2 numbering: vertices 0, 1, 2, then the midpoints of the local
edges (0,1), (1,2), (2,0). Global edge dofs follow the vertex dofs in
the order of Mesh.edges.
"""

from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse

from geometry.mesh import Mesh


def shape_values(order: int, bary: np.ndarray) -> np.ndarray:
    """
    Local basis values.

    Args:
        order: 1 or 2
        bary: (..., 3) barycentric coordinates

    Returns:
        (..., 3) or (..., 6) values
    """
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    if order == 1:
        return np.stack([l0, l1, l2], axis=-1)
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)


def shape_gradients(order: int, bary: np.ndarray,
                    grad_lambda: np.ndarray) -> np.ndarray:
    """
    Local basis gradients.

    Args:
        order: 1 or 2
        bary: (..., 3) barycentric coordinates
        grad_lambda: (..., 3, 2) gradients of the barycentric coordinates

    Returns:
        (..., 3, 2) or (..., 6, 2) gradients
    """
    if order == 1:
        shape = np.broadcast_shapes(bary.shape[:-1], grad_lambda.shape[:-2])
        return np.broadcast_to(grad_lambda, shape + (3, 2)).copy()
    lam = bary[..., :, None]
    g = grad_lambda
    l0, l1, l2 = lam[..., 0, :], lam[..., 1, :], lam[..., 2, :]
    g0, g1, g2 = g[..., 0, :], g[..., 1, :], g[..., 2, :]
    return np.stack([(4 * l0 - 1) * g0, (4 * l1 - 1) * g1, (4 * l2 - 1) * g2,
                     4 * (l0 * g1 + l1 * g0), 4 * (l1 * g2 + l2 * g1),
                     4 * (l2 * g0 + l0 * g2)], axis=-2)


def barycentric_gradients(corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of the barycentric coordinates of triangles.

    Args:
        corners: (n, 3, 2) vertex coordinates

    Returns:
        ((n, 3, 2) gradients, (n,) twice the signed areas)
    """
    x, y = corners[..., 0], corners[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) \
        - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.stack([
        np.stack([y[:, 1] - y[:, 2], x[:, 2] - x[:, 1]], axis=-1),
        np.stack([y[:, 2] - y[:, 0], x[:, 0] - x[:, 2]], axis=-1),
        np.stack([y[:, 0] - y[:, 1], x[:, 1] - x[:, 0]], axis=-1),
    ], axis=1)
    return g / det[:, None, None], det


def edge_shape_values(order: int, t: np.ndarray) -> np.ndarray:
    """Trace basis on an edge a -> b at parameter t: [a, b] or [a, b, mid]."""
    if order == 1:
        return np.stack([1 - t, t], axis=-1)
    return np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)],
                    axis=-1)


class FeSpace:
    """
    Continuous Lagrange space of order 1 or 2 on a mesh.

    Attributes:
        mesh: Underlying mesh
        order: Polynomial order
        cell_dofs: (M, 3) or (M, 6) global dofs per triangle
        dof_coords: (dof_count, 2) nodal points
    """

    def __init__(self, mesh: Mesh, order: int = 2):
        """
        Args:
            mesh: Validated mesh
            order: 1 or 2
        """
        if order not in (1, 2):
            raise ValueError(f"Only P1 and P2 are supported, got order {order}")
        self.mesh = mesh
        self.order = order
        n = mesh.num_vertices
        if order == 1:
            self.cell_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            self.cell_dofs = np.hstack([mesh.triangles,
                                        n + mesh.triangle_edges])
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                          + mesh.vertices[mesh.edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mids])

    @property
    def dof_count(self) -> int:
        return len(self.dof_coords)

    @property
    def local_size(self) -> int:
        return 3 if self.order == 1 else 6

    def lambda_gradients(self, tris: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Barycentric gradients and determinants of the given triangles."""
        return barycentric_gradients(self.mesh.vertices[self.mesh.triangles[tris]])

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        """(K, 2) or (K, 3) trace dofs [a, b(, mid)] per boundary edge."""
        edges = self.mesh.oriented_boundary
        if self.order == 1:
            return edges.copy()
        lookup = self.mesh.edge_lookup
        mids = np.array([lookup[(min(a, b), max(a, b))] for a, b in edges.tolist()],
                        dtype=np.int64)
        return np.column_stack([edges, self.mesh.num_vertices + mids])

    def label_dofs(self, label: str) -> np.ndarray:
        idx = self.mesh.edges_with_label(label)
        if len(idx) == 0:
            return np.array([], dtype=np.int64)
        return np.unique(self.boundary_dofs[idx])

    def evaluate_basis(self, points: np.ndarray, strict: bool = True):
        """
        Locate points and evaluate the local basis there.

        Returns:
            (triangles, (n, nloc) values, (n, nloc, 2) gradients,
             inside mask); rows for outside points are zero
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tris, bary = self.mesh.locate(pts, strict=strict)
        inside = tris >= 0
        safe = np.where(inside, tris, 0)
        values = shape_values(self.order, bary)
        glam, _ = self.lambda_gradients(safe)
        grads = shape_gradients(self.order, bary, glam)
        values[~inside] = 0.0
        grads[~inside] = 0.0
        return safe, values, grads, inside

    def interpolation_matrix(self, points: np.ndarray, strict: bool = True,
                             derivative: Optional[int] = None) -> sparse.csr_matrix:
        """
        Sparse operator mapping coefficients to values at points.

        Args:
            points: (n, 2) evaluation points
            strict: raise for points outside the mesh
            derivative: None for values, 0 or 1 for a partial derivative

        Returns:
            (n, dof_count) CSR matrix; rows of outside points are empty
        """
        tris, values, grads, _ = self.evaluate_basis(points, strict)
        data = values if derivative is None else grads[..., derivative]
        rows = np.repeat(np.arange(len(tris)), self.local_size)
        cols = self.cell_dofs[tris].ravel()
        return sparse.csr_matrix((data.ravel(), (rows, cols)),
                                 shape=(len(tris), self.dof_count))

    def interpolate(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Nodal interpolant coefficients of func."""
        return np.asarray(func(self.dof_coords), dtype=float).reshape(-1)

    def __str__(self) -> str:
        return (f"FeSpace(P{self.order}, dofs={self.dof_count}, "
                f"mesh={self.mesh.name})")

    def __repr__(self) -> str:
        return self.__str__()
