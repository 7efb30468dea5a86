"""
Mesh Module - Conforming triangulations with labelled boundaries.

The Mesh class holds vertices, counterclockwise triangles, labelled
boundary edges and optional periodic vertex pairs. It validates its own
invariants, locates points by a walking search and reads/writes the
plain-text mesh format.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .profile import LABELS


logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-14
PERIODIC_TOL = 1e-12
HULL_TOL = 1e-9


class MeshError(ValueError):
    """A mesh invariant does not hold or a mesh could not be built."""


class PointOutsideMeshError(ValueError):
    """A query point lies outside the mesh."""

    def __init__(self, point, distance: float):
        self.point = tuple(float(c) for c in point)
        self.distance = float(distance)
        super().__init__(
            f"Point ({self.point[0]:.6g}, {self.point[1]:.6g}) is outside "
            f"the mesh (distance {self.distance:.3e})")


@njit(cache=True)
def _barycentric(px, py, x0, y0, x1, y1, x2, y2):
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / det
    l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / det
    return 1.0 - l1 - l2, l1, l2, det


@njit(cache=True)
def _locate_kernel(points, vertices, triangles, neighbors, starts, tol):
    n = points.shape[0]
    m = triangles.shape[0]
    found = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    gap = np.zeros(n)
    lam = np.zeros(3)
    for p in range(n):
        px = points[p, 0]
        py = points[p, 1]
        t = starts[p]
        # walk toward the point across the most violated edge
        for _ in range(4 * m + 16):
            a = triangles[t, 0]
            b = triangles[t, 1]
            c = triangles[t, 2]
            l0, l1, l2, det = _barycentric(
                px, py, vertices[a, 0], vertices[a, 1],
                vertices[b, 0], vertices[b, 1], vertices[c, 0], vertices[c, 1])
            lam[0] = l0
            lam[1] = l1
            lam[2] = l2
            j = 0
            for k in range(1, 3):
                if lam[k] < lam[j]:
                    j = k
            if lam[j] >= -1e-12:
                found[p] = t
                bary[p, 0] = lam[0]
                bary[p, 1] = lam[1]
                bary[p, 2] = lam[2]
                break
            nxt = neighbors[t, j]
            if nxt < 0:
                break
            t = nxt
        if found[p] >= 0:
            continue
        # exhaustive fallback: smallest distance outside any triangle
        best = -1
        best_gap = 1e300
        for t in range(m):
            a = triangles[t, 0]
            b = triangles[t, 1]
            c = triangles[t, 2]
            l0, l1, l2, det = _barycentric(
                px, py, vertices[a, 0], vertices[a, 1],
                vertices[b, 0], vertices[b, 1], vertices[c, 0], vertices[c, 1])
            lam[0] = l0
            lam[1] = l1
            lam[2] = l2
            worst = 0.0
            for k in range(3):
                if lam[k] < 0.0:
                    i0 = triangles[t, (k + 1) % 3]
                    i1 = triangles[t, (k + 2) % 3]
                    ex = vertices[i1, 0] - vertices[i0, 0]
                    ey = vertices[i1, 1] - vertices[i0, 1]
                    d = -lam[k] * det / np.sqrt(ex * ex + ey * ey)
                    if d > worst:
                        worst = d
            if worst < best_gap:
                best_gap = worst
                best = t
                bary[p, 0] = lam[0]
                bary[p, 1] = lam[1]
                bary[p, 2] = lam[2]
                if worst == 0.0:
                    break
        gap[p] = best_gap
        if best_gap <= tol:
            found[p] = best
    return found, bary, gap


def _segment_distance(points: np.ndarray, a: np.ndarray,
                      b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments [a_k, b_k]."""
    d = b - a
    length2 = np.maximum(np.einsum('kd,kd->k', d, d), 1e-300)
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum('pkd,kd->pk', rel, d) / length2, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * d[None, :, :]
    return np.sqrt(((points[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming triangulation with labelled boundary edges.

    Attributes:
        vertices: (N, 2) vertex coordinates
        triangles: (M, 3) counterclockwise vertex indices
        boundary_edges: (K, 2) vertex index pairs
        boundary_labels: K labels, one per boundary edge
        periodic_pairs: optional (P, 2) (left vertex, right vertex) pairs
        bottom_curve: optional x -> y description of the Bottom boundary,
            used to place new Bottom vertices during refinement
        name: descriptive name
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: Tuple[str, ...]
    periodic_pairs: Optional[np.ndarray] = None
    bottom_curve: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = 'mesh'

    def __post_init__(self):
        object.__setattr__(self, 'vertices',
                           np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, 'triangles',
                           np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, 'boundary_edges',
                           np.asarray(self.boundary_edges, dtype=np.int64)
                           .reshape(-1, 2))
        object.__setattr__(self, 'boundary_labels',
                           tuple(str(lbl) for lbl in self.boundary_labels))
        if self.periodic_pairs is not None:
            object.__setattr__(self, 'periodic_pairs',
                               np.asarray(self.periodic_pairs, dtype=np.int64)
                               .reshape(-1, 2))

    # ------------------------------------------------------------------
    # Topology
    # ------------------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _edge_data(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) unique edges, sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(M, 3) global edge index of local edges (0,1), (1,2), (2,0)."""
        return self._edge_data[1]

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(M, 3) triangle across the edge opposite local vertex j, or -1."""
        tri_edges = self.triangle_edges
        owners = np.full((len(self.edges), 2), -1, dtype=np.int64)
        flat_t = np.repeat(np.arange(self.num_triangles), 3)
        flat_e = tri_edges.ravel()
        order = np.argsort(flat_e, kind='stable')
        sorted_e = flat_e[order]
        first = np.r_[True, sorted_e[1:] != sorted_e[:-1]]
        owners[sorted_e[first], 0] = flat_t[order][first]
        owners[sorted_e[~first], 1] = flat_t[order][~first]
        # local edge (j+1, j+2) is opposite vertex j
        opposite_edge = tri_edges[:, [1, 2, 0]]
        o = owners[opposite_edge]
        me = np.arange(self.num_triangles)[:, None]
        return np.where(o[..., 0] == me, o[..., 1], o[..., 0])

    @cached_property
    def edge_lookup(self) -> Dict[Tuple[int, int], int]:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    @cached_property
    def boundary_owner(self) -> np.ndarray:
        """For each boundary edge, the triangle containing it."""
        tri_edges = self.triangle_edges
        edge_owner = np.full(len(self.edges), -1, dtype=np.int64)
        edge_owner[tri_edges.ravel()] = np.repeat(
            np.arange(self.num_triangles), 3)
        keys = np.sort(self.boundary_edges, axis=1)
        idx = np.array([self.edge_lookup.get((int(a), int(b)), -1)
                        for a, b in keys], dtype=np.int64)
        if np.any(idx < 0):
            raise MeshError("Boundary edge is not an edge of any triangle")
        return edge_owner[idx]

    @cached_property
    def oriented_boundary(self) -> np.ndarray:
        """Boundary edges oriented with the domain on their left."""
        out = self.boundary_edges.copy()
        tris = self.triangles[self.boundary_owner]
        for k, (a, b) in enumerate(out):
            tri = list(tris[k])
            i = tri.index(a)
            if tri[(i + 1) % 3] != b:
                out[k] = (b, a)
        return out

    @cached_property
    def outward_normals(self) -> np.ndarray:
        e = self.oriented_boundary
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        length = np.linalg.norm(d, axis=1)
        return np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

    @property
    def labels(self) -> List[str]:
        return sorted(set(self.boundary_labels))

    def edges_with_label(self, label: str) -> np.ndarray:
        """Indices into boundary_edges carrying the given label."""
        return np.array([k for k, lbl in enumerate(self.boundary_labels)
                         if lbl == label], dtype=np.int64)

    def vertices_with_label(self, label: str) -> np.ndarray:
        idx = self.edges_with_label(label)
        return np.unique(self.boundary_edges[idx]) if len(idx) else \
            np.array([], dtype=np.int64)

    def vertex_graph(self) -> nx.Graph:
        """Vertex adjacency graph of the triangulation."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_vertices))
        graph.add_edges_from(map(tuple, self.edges))
        return graph

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def edge_lengths(self) -> np.ndarray:
        """(M, 3) lengths of local edges (0,1), (1,2), (2,0)."""
        p = self.vertices[self.triangles]
        return np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)

    def diameters(self) -> np.ndarray:
        return self.edge_lengths().max(axis=1)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def h_min(self) -> float:
        return float(self.diameters().min())

    @property
    def h_max(self) -> float:
        return float(self.diameters().max())

    def quality(self) -> np.ndarray:
        """Twice inradius over circumradius; 1 for equilateral triangles."""
        lengths = self.edge_lengths()
        a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
        return (b + c - a) * (c + a - b) * (a + b - c) / (a * b * c)

    def distance_to_boundary(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        e = self.boundary_edges
        out = np.empty(len(pts))
        for start in range(0, len(pts), 256):
            chunk = pts[start:start + 256]
            out[start:start + 256] = _segment_distance(
                chunk, self.vertices[e[:, 0]], self.vertices[e[:, 1]])
        return out

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------
    def validate(self) -> 'Mesh':
        """
        Check conformity, orientation, labelling and periodic pairing.

        Returns:
            The mesh itself, for chaining

        Raises:
            MeshError: on the first violated invariant
        """
        n = self.num_vertices
        if self.triangles.size == 0:
            raise MeshError(f"{self.name}: no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise MeshError(f"{self.name}: triangle index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError(f"{self.name}: non-finite vertex coordinates")

        areas = self.signed_areas()
        worst = int(np.argmin(areas))
        if areas[worst] < DEGENERATE_AREA:
            raise MeshError(
                f"{self.name}: triangle {worst} "
                f"{self.triangles[worst].tolist()} has signed area "
                f"{areas[worst]:.3e}")

        _, _, counts = self._edge_data
        if counts.max() > 2:
            bad = self.edges[int(np.argmax(counts))]
            raise MeshError(
                f"{self.name}: edge {bad.tolist()} shared by "
                f"{counts.max()} triangles")
        topo = {tuple(e) for e in self.edges[counts == 1].tolist()}
        if len(self.boundary_labels) != len(self.boundary_edges):
            raise MeshError(f"{self.name}: boundary label count mismatch")
        declared = [tuple(sorted(e)) for e in self.boundary_edges.tolist()]
        if len(set(declared)) != len(declared):
            raise MeshError(f"{self.name}: boundary edge labelled twice")
        if set(declared) != topo:
            missing = topo - set(declared)
            extra = set(declared) - topo
            raise MeshError(
                f"{self.name}: boundary labelling mismatch "
                f"({len(missing)} unlabelled, {len(extra)} not on boundary)")
        unknown = set(self.boundary_labels) - set(LABELS)
        if unknown:
            raise MeshError(f"{self.name}: unknown labels {sorted(unknown)}")

        if not nx.is_connected(self.vertex_graph()):
            raise MeshError(f"{self.name}: triangulation is not connected")

        if self.periodic_pairs is not None and len(self.periodic_pairs):
            y = self.vertices[:, 1]
            gap = np.abs(y[self.periodic_pairs[:, 0]]
                         - y[self.periodic_pairs[:, 1]])
            if gap.max() > PERIODIC_TOL:
                raise MeshError(
                    f"{self.name}: periodic pair mismatch {gap.max():.3e}")
        return self

    # ------------------------------------------------------------------
    # Point location
    # ------------------------------------------------------------------
    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids())

    def locate(self, points: np.ndarray,
               strict: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """
        Find the containing triangle and barycentric coordinates.

        Args:
            points: (n, 2) query points
            strict: raise for points outside the mesh instead of
                returning index -1

        Returns:
            (triangle indices, (n, 3) barycentric coordinates)
        """
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        if len(pts) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros((0, 3))
        _, starts = self._centroid_tree.query(pts)
        found, bary, gap = _locate_kernel(
            pts, self.vertices, self.triangles, self.neighbors,
            np.asarray(starts, dtype=np.int64), HULL_TOL)
        outside = found < 0
        if strict and np.any(outside):
            k = int(np.argmax(outside))
            dist = float(self.distance_to_boundary(pts[k:k + 1])[0])
            raise PointOutsideMeshError(pts[k], dist)
        # points within tolerance outside are clamped onto the triangle
        bary = np.clip(bary, 0.0, None)
        bary /= np.maximum(bary.sum(axis=1, keepdims=True), 1e-300)
        return found, bary

    def contains(self, points: np.ndarray) -> np.ndarray:
        found, _ = self.locate(points, strict=False)
        return found >= 0

    # ------------------------------------------------------------------
    # Text I/O
    # ------------------------------------------------------------------
    def write(self, path: Union[str, Path]) -> Path:
        """Write the mesh in the plain-text format (17 significant digits)."""
        path = Path(path)
        lines = [f"vertices {self.num_vertices} triangles "
                 f"{self.num_triangles} edges {len(self.boundary_edges)}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        lines += [f"{i} {j} {lbl}" for (i, j), lbl
                  in zip(self.boundary_edges, self.boundary_labels)]
        if self.periodic_pairs is not None and len(self.periodic_pairs):
            lines.append(f"periodic {len(self.periodic_pairs)}")
            lines += [f"{i} {j}" for i, j in self.periodic_pairs]
        path.write_text('\n'.join(lines) + '\n')
        return path

    @classmethod
    def read(cls, path: Union[str, Path],
             bottom_curve: Optional[Callable] = None) -> 'Mesh':
        """
        Read a mesh written by write().

        Args:
            path: Mesh file
            bottom_curve: Optional Bottom description to reattach

        Returns:
            Mesh instance
        """
        path = Path(path)
        lines = path.read_text().split('\n')
        head = lines[0].split()
        if head[0::2] != ['vertices', 'triangles', 'edges']:
            raise MeshError(f"{path}: bad mesh header '{lines[0]}'")
        n, m, k = (int(v) for v in head[1::2])
        pos = 1
        verts = np.array([[float(v) for v in lines[pos + i].split()]
                          for i in range(n)]).reshape(n, 2)
        pos += n
        tris = np.array([[int(v) for v in lines[pos + i].split()]
                         for i in range(m)], dtype=np.int64).reshape(m, 3)
        pos += m
        edges, labels = [], []
        for i in range(k):
            a, b, lbl = lines[pos + i].split()
            edges.append((int(a), int(b)))
            labels.append(lbl)
        pos += k
        pairs = None
        if pos < len(lines) and lines[pos].startswith('periodic'):
            count = int(lines[pos].split()[1])
            pairs = np.array([[int(v) for v in lines[pos + 1 + i].split()]
                              for i in range(count)],
                             dtype=np.int64).reshape(count, 2)
        return cls(verts, tris, np.array(edges, dtype=np.int64).reshape(-1, 2),
                   tuple(labels), pairs, bottom_curve, name=path.stem)

    def __str__(self) -> str:
        return (f"Mesh(name='{self.name}', vertices={self.num_vertices}, "
                f"triangles={self.num_triangles}, labels={self.labels})")

    def __repr__(self) -> str:
        return self.__str__()
