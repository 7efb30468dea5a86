"""
Builders Module - Mesh generators for every domain family.

A structured generator covers the unit square. Everything with a rough
bottom goes through PolygonMesher: the boundary is a loop of
parametrised segments (vertices placed exactly on the curve), the
interior is filled with graded lattice rows, triangulated by Delaunay,
boundary edges are recovered by midpoint insertion and the interior is
smoothed over the vertex adjacency graph.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from matplotlib.path import Path as PolygonPath
from scipy.spatial import Delaunay, cKDTree

from .mesh import Mesh, MeshError
from .profile import DomainKind, DomainSpec, GradingSpec
from .refinement import refine_toward_corner


logger = logging.getLogger(__name__)

# Size growth per unit distance away from the rough bottom
GRADE = 0.3
# Interior points keep this fraction of the local size off the boundary
KEEP_OFF = 0.6
SMOOTHING_ROUNDS = 3
RECOVERY_PASSES = 8
# Dense sampling used to place vertices by arc length, per period
ARC_SAMPLES = 1024


def build_unit_square_mesh(H: float) -> Mesh:
    """
    Structured mesh of [0,1]^2 with ceil(1/H) cells per side.

    Args:
        H: Target cell size, 0 < H <= 1

    Returns:
        Validated Mesh with labels Bottom, Top, Left, Right
    """
    if not 0.0 < H <= 1.0:
        raise ValueError(f"Unit square mesh size must be in (0, 1], got {H}")
    n = int(math.ceil(round(1.0 / H, 9)))
    grid = np.arange(n + 1) / n
    xs, ys = np.meshgrid(grid, grid)
    vertices = np.column_stack([xs.ravel(), ys.ravel()])

    def v(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    lower = np.column_stack([v(i, j), v(i + 1, j), v(i + 1, j + 1)])
    upper = np.column_stack([v(i, j), v(i + 1, j + 1), v(i, j + 1)])
    triangles = np.vstack([lower, upper])

    k = np.arange(n)
    edges = np.vstack([
        np.column_stack([v(k, 0), v(k + 1, 0)]),
        np.column_stack([v(n, k), v(n, k + 1)]),
        np.column_stack([v(k + 1, n), v(k, n)]),
        np.column_stack([v(0, k + 1), v(0, k)]),
    ])
    labels = ('Bottom',) * n + ('Right',) * n + ('Top',) * n + ('Left',) * n
    mesh = Mesh(vertices, triangles, edges, labels,
                bottom_curve=lambda x: np.zeros_like(np.asarray(x, float)),
                name=f'unit_square_n{n}')
    return mesh.validate()


@dataclass
class Segment:
    """
    One labelled piece of a boundary loop.

    Attributes:
        label: Boundary label of every edge on the segment
        key: Name of the parameter array the segment is placed from;
            two segments sharing a key are periodic twins
        place: Maps an ascending parameter array to (n, 2) points
        reverse: Traverse the parameters in descending order
    """
    label: str
    key: str
    place: Callable[[np.ndarray], np.ndarray]
    reverse: bool = False


def triangle_quality(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = points[triangles]
    lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
    a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    return (b + c - a) * (c + a - b) * (a + b - c) / (a * b * c)


def _signed_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = points[triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


class PolygonMesher:
    """
    Boundary-fitted Delaunay mesher for a loop of parametrised segments.

    Segments are listed counterclockwise; the last point of each segment
    must coincide with the first point of the next one.
    """

    def __init__(self, segments: Sequence[Segment],
                 params: Dict[str, np.ndarray],
                 size: Callable[[np.ndarray], np.ndarray],
                 name: str = 'mesh'):
        """
        Args:
            segments: Boundary loop, counterclockwise
            params: Ascending parameter arrays, by segment key
            size: Local target element size at (n, 2) points
            name: Name given to the resulting mesh
        """
        self.segments = list(segments)
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}
        self.size = size
        self.name = name

    def _loop(self) -> Tuple[np.ndarray, List[str], List[np.ndarray]]:
        """Loop points, per-edge labels and per-segment vertex indices."""
        pieces, labels, counts = [], [], []
        for seg in self.segments:
            p = self.params[seg.key]
            pts = seg.place(p[::-1] if seg.reverse else p)
            pieces.append(pts[:-1])
            labels += [seg.label] * (len(pts) - 1)
            counts.append(len(pts))
        points = np.vstack(pieces)
        total = len(points)
        indices, start = [], 0
        for count in counts:
            idx = start + np.arange(count)
            idx[-1] = (start + count - 1) % total
            indices.append(idx)
            start += count - 1
        return points, labels, indices

    def _interior(self, loop: np.ndarray) -> np.ndarray:
        xmin, ymin = loop.min(axis=0)
        xmax, ymax = loop.max(axis=0)
        width = xmax - xmin
        rows, k = [], 0
        y = ymin
        while y < ymax:
            s = float(self.size(np.array([[0.5 * (xmin + xmax), y]]))[0])
            n = max(1, int(round(width / s)))
            shift = 0.5 if k % 2 else 0.0
            xs = xmin + (np.arange(n + 1) + shift) * width / n
            rows.append(np.column_stack([xs, np.full(len(xs), y)]))
            y += s * math.sqrt(3.0) / 2.0
            k += 1
        candidates = np.vstack(rows)

        inside = PolygonPath(loop).contains_points(candidates)
        candidates = candidates[inside]
        closed = np.vstack([loop, loop[:1]])
        frac = np.arange(8) / 8.0
        dense = (closed[:-1, None, :] * (1.0 - frac)[None, :, None]
                 + closed[1:, None, :] * frac[None, :, None]).reshape(-1, 2)
        dist, _ = cKDTree(dense).query(candidates)
        keep = dist >= KEEP_OFF * self.size(candidates)
        return candidates[keep]

    @staticmethod
    def _triangulate(points: np.ndarray, loop: np.ndarray) -> np.ndarray:
        tris = Delaunay(points).simplices.astype(np.int64)
        areas = _signed_areas(points, tris)
        flip = areas < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        tris = tris[np.abs(areas) > 1e-14]
        centroids = points[tris].mean(axis=1)
        inside = PolygonPath(loop).contains_points(centroids)
        return tris[inside]

    @staticmethod
    def _boundary_edges(triangles: np.ndarray) -> set:
        local = np.sort(np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]],
                                   triangles[:, [2, 0]]]), axis=1)
        edges, counts = np.unique(local, axis=0, return_counts=True)
        return {tuple(e) for e in edges[counts == 1].tolist()}

    def _recover(self, missing: List[int]) -> None:
        """Insert the parameter midpoint of every missing loop edge."""
        missing = set(missing)
        inserts: Dict[str, List[float]] = {}
        edge = 0
        for seg in self.segments:
            p = self.params[seg.key]
            q = p[::-1] if seg.reverse else p
            for i in range(len(q) - 1):
                if edge in missing:
                    inserts.setdefault(seg.key, []).append(
                        0.5 * (q[i] + q[i + 1]))
                edge += 1
        for key, values in inserts.items():
            self.params[key] = np.unique(np.r_[self.params[key], values])
            logger.debug("%s: inserted %d boundary points on '%s'",
                         self.name, len(values), key)

    def _smooth(self, points: np.ndarray, triangles: np.ndarray,
                n_fixed: int) -> np.ndarray:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(points)))
        graph.add_edges_from(np.vstack([triangles[:, [0, 1]],
                                        triangles[:, [1, 2]],
                                        triangles[:, [2, 0]]]).tolist())
        adjacency = nx.to_scipy_sparse_array(graph, nodelist=list(range(len(points))),
                                             format='csr')
        degree = np.asarray(adjacency.sum(axis=1)).ravel()
        for _ in range(SMOOTHING_ROUNDS):
            target = (adjacency @ points) / degree[:, None]
            moved = points.copy()
            moved[n_fixed:] = target[n_fixed:]
            q_old = triangle_quality(points, triangles)
            for _ in range(5):
                q_new = triangle_quality(moved, triangles)
                bad = ((_signed_areas(moved, triangles) <= 1e-14)
                       | ((q_new < q_old) & (q_new < 0.5)))
                if not np.any(bad):
                    break
                revert = np.unique(triangles[bad])
                revert = revert[revert >= n_fixed]
                if len(revert) == 0:
                    break
                moved[revert] = points[revert]
            points = moved
        return points

    def build(self, periodic: Optional[Tuple[int, int]] = None,
              bottom_curve: Optional[Callable] = None) -> Mesh:
        """
        Generate the mesh.

        Args:
            periodic: Indices (left, right) of twin segments whose
                vertices are paired
            bottom_curve: Bottom description stored on the mesh

        Returns:
            Validated Mesh
        """
        for attempt in range(RECOVERY_PASSES + 1):
            loop, labels, indices = self._loop()
            interior = self._interior(loop)
            points = np.vstack([loop, interior])
            triangles = self._triangulate(points, loop)
            n_loop = len(loop)
            loop_edges = [tuple(sorted((k, (k + 1) % n_loop)))
                          for k in range(n_loop)]
            topo = self._boundary_edges(triangles)
            missing = [k for k, e in enumerate(loop_edges) if e not in topo]
            if not missing:
                extra = topo - set(loop_edges)
                if extra:
                    raise MeshError(
                        f"{self.name}: {len(extra)} spurious boundary edges")
                break
            if attempt == RECOVERY_PASSES:
                raise MeshError(
                    f"{self.name}: {len(missing)} boundary edges not "
                    f"recovered after {RECOVERY_PASSES} passes")
            self._recover(missing)

        points = self._smooth(points, triangles, n_loop)
        edges = np.array([(k, (k + 1) % n_loop) for k in range(n_loop)],
                         dtype=np.int64)
        pairs = None
        if periodic is not None:
            left, right = periodic
            pairs = np.column_stack([indices[left][::-1], indices[right]])

        # drop lattice points that ended up unused
        used = np.unique(triangles)
        remap = np.full(len(points), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        if np.any(remap[:n_loop] < 0):
            raise MeshError(f"{self.name}: boundary vertex left unconnected")
        mesh = Mesh(points[used], remap[triangles], remap[edges],
                    tuple(labels),
                    None if pairs is None else remap[pairs],
                    bottom_curve, name=self.name)
        logger.debug("%s: %d vertices, %d triangles, q_min=%.3f",
                     self.name, mesh.num_vertices, mesh.num_triangles,
                     float(mesh.quality().min()))
        return mesh.validate()


def _arc_length_params(curve: Callable, a: float, b: float,
                       spacing: float, period: float) -> np.ndarray:
    """Abscissae splitting the curve y = curve(x) into equal arcs."""
    samples = ARC_SAMPLES * max(1, int(math.ceil((b - a) / period))) + 1
    x = np.linspace(a, b, samples)
    y = curve(x)
    s = np.r_[0.0, np.cumsum(np.hypot(np.diff(x), np.diff(y)))]
    n = max(1, int(math.ceil(s[-1] / spacing)))
    params = np.interp(np.linspace(0.0, s[-1], n + 1), s, x)
    params[0], params[-1] = a, b
    return params


def _graded_params(start: float, stop: float,
                   size: Callable[[float], float]) -> np.ndarray:
    """Ascending points from start to stop with local spacing size(y)."""
    ys = [start]
    while ys[-1] < stop:
        ys.append(ys[-1] + size(ys[-1]))
    if len(ys) > 2 and stop - ys[-2] < 0.5 * (ys[-1] - ys[-2]):
        ys.pop()
    ys = np.array(ys)
    ys = start + (ys - start) * (stop - start) / (ys[-1] - start)
    ys[-1] = stop
    return ys


def _uniform_params(start: float, stop: float, h: float) -> np.ndarray:
    n = max(1, int(math.ceil((stop - start) / h - 1e-9)))
    return np.linspace(start, stop, n + 1)


def _size_function(h: float, bottom_h: float,
                   rough_top: float) -> Callable[[np.ndarray], np.ndarray]:
    def size(points: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(points)[:, 1]
        return np.minimum(h, bottom_h + GRADE * np.maximum(0.0, y - rough_top))
    return size


def _vertical(x: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: np.column_stack([np.full(len(y), x), y])


def _horizontal(y: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.column_stack([x, np.full(len(x), y)])


def _on_curve(curve: Callable) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.column_stack([x, curve(x)])


def build_cell_mesh(spec: DomainSpec, h: float,
                    bottom_h: Optional[float] = None) -> Mesh:
    """
    Mesh of the truncated periodic cell (0,1) x (f(y1), L).

    Args:
        spec: CellTruncated domain
        h: Element size away from the bottom
        bottom_h: Element size along the rough bottom (default h/2)

    Returns:
        Mesh with labels Bottom, Right, ArtificialTop, Left and fully
        populated periodic pairs
    """
    if spec.kind != DomainKind.CELL_TRUNCATED:
        raise ValueError(f"Expected a CellTruncated domain, got {spec.kind}")
    if not 0.0 < h <= 0.5:
        raise ValueError(f"Cell mesh size must be in (0, 0.5], got {h}")
    spec.profile.validate()
    f = spec.profile
    L = float(spec.truncation_L)
    bottom_h = h / 2 if bottom_h is None else bottom_h
    _, rough_top = f.bounds()
    size = _size_function(h, bottom_h, rough_top)

    params = {
        'bottom': _arc_length_params(f, 0.0, 1.0, bottom_h, 1.0),
        'side': _graded_params(float(f(0.0)), L,
                               lambda y: float(size(np.array([[0.0, y]]))[0])),
        'top': _uniform_params(0.0, 1.0, h),
    }
    segments = [
        Segment('Bottom', 'bottom', _on_curve(f)),
        Segment('Right', 'side', _vertical(1.0)),
        Segment('ArtificialTop', 'top', _horizontal(L), reverse=True),
        Segment('Left', 'side', _vertical(0.0), reverse=True),
    ]
    mesher = PolygonMesher(segments, params, size, name=f'cell_L{L:g}')
    return mesher.build(periodic=(3, 1), bottom_curve=f)


def build_quarter_plane_mesh(spec: DomainSpec, h: float,
                             grading: Optional[GradingSpec] = None,
                             bottom_h: Optional[float] = None) -> Mesh:
    """
    Mesh of the rough quarter-plane truncated at y1 = L and y2 = L.

    The Out side is meshed on the reflected profile s -> f(-s); callers
    map s back to y1 = -s.

    Args:
        spec: QuarterPlaneIn or QuarterPlaneOut domain
        h: Element size in the far field
        grading: Optional grading toward the corner (0, g(0))
        bottom_h: Element size along the rough bottom (default h/2)

    Returns:
        Mesh with labels Bottom, ArtificialSide, ArtificialTop, Left
    """
    if spec.kind not in (DomainKind.QUARTER_PLANE_IN,
                         DomainKind.QUARTER_PLANE_OUT):
        raise ValueError(f"Expected a quarter-plane domain, got {spec.kind}")
    spec.profile.validate()
    g = spec.bottom_curve()
    L = float(spec.truncation_L)
    bottom_h = h / 2 if bottom_h is None else bottom_h
    rough_top = float(g(np.linspace(0.0, 1.0, 4097)).max())
    size = _size_function(h, bottom_h, rough_top)
    side_size = lambda y: float(size(np.array([[0.0, y]]))[0])

    params = {
        'bottom': _arc_length_params(g, 0.0, L, bottom_h, 1.0),
        'far': _graded_params(float(g(L)), L, side_size),
        'top': _uniform_params(0.0, L, h),
        'near': _graded_params(float(g(0.0)), L, side_size),
    }
    segments = [
        Segment('Bottom', 'bottom', _on_curve(g)),
        Segment('ArtificialSide', 'far', _vertical(L)),
        Segment('ArtificialTop', 'top', _horizontal(L), reverse=True),
        Segment('Left', 'near', _vertical(0.0), reverse=True),
    ]
    side = 'in' if spec.kind == DomainKind.QUARTER_PLANE_IN else 'out'
    mesher = PolygonMesher(segments, params, size,
                           name=f'quarter_plane_{side}_L{L:g}')
    mesh = mesher.build(bottom_curve=g)

    if grading is not None:
        corner = np.asarray(grading.corner, dtype=float)
        if mesh.distance_to_boundary(corner[None, :])[0] > 1e-9:
            raise ValueError(
                f"Grading corner {tuple(corner)} is not on the boundary")
        mesh = refine_toward_corner(mesh, grading)
    return mesh


def build_sublayer_mesh(spec: DomainSpec, h: Optional[float] = None,
                        bottom_h: Optional[float] = None) -> Mesh:
    """
    Mesh of the rough sublayer eps f(x1/eps) < x2 < eps/10.

    Args:
        spec: Sublayer (or RoughFull) domain
        h: Element size at the interface (default eps/12)
        bottom_h: Element size along the rough bottom (default h/2)

    Returns:
        Mesh with labels Bottom, Right, Interface, Left
    """
    if spec.kind == DomainKind.ROUGH_FULL:
        spec = spec.sublayer()
    if spec.kind != DomainKind.SUBLAYER:
        raise ValueError(f"Expected a Sublayer domain, got {spec.kind}")
    spec.profile.validate()
    eps = spec.epsilon
    curve = spec.bottom_curve()
    top = spec.interface_height
    h = eps / 12 if h is None else h
    bottom_h = h / 2 if bottom_h is None else bottom_h
    rough_top = eps * spec.profile.bounds()[1]
    size = _size_function(h, bottom_h, rough_top)
    side_size = lambda y: float(size(np.array([[0.0, y]]))[0])

    params = {
        'bottom': _arc_length_params(curve, 0.0, 1.0, bottom_h, eps),
        'right': _graded_params(float(curve(1.0)), top, side_size),
        'top': _uniform_params(0.0, 1.0, h),
        'left': _graded_params(float(curve(0.0)), top, side_size),
    }
    segments = [
        Segment('Bottom', 'bottom', _on_curve(curve)),
        Segment('Right', 'right', _vertical(1.0)),
        Segment('Interface', 'top', _horizontal(top), reverse=True),
        Segment('Left', 'left', _vertical(0.0), reverse=True),
    ]
    mesher = PolygonMesher(segments, params, size,
                           name=f'sublayer_eps{eps:.4g}')
    return mesher.build(bottom_curve=curve)


def build_rough_composite(spec: DomainSpec, H: float,
                          grading: GradingSpec) -> Tuple[Mesh, Mesh]:
    """
    Overlapping mesh pair for the Schwarz solver.

    Args:
        spec: RoughFull domain
        H: Structured size of the top mesh on the unit square
        grading: Grading of the sublayer toward the outlet corner

    Returns:
        (top mesh on [0,1]^2, graded sublayer mesh)
    """
    if spec.kind != DomainKind.ROUGH_FULL:
        raise ValueError(f"Expected a RoughFull domain, got {spec.kind}")
    if spec.interface_height < 2 * grading.target_h_min:
        raise ValueError(
            f"Overlap eps/10 = {spec.interface_height:.3g} is below twice "
            f"the corner size {grading.target_h_min:.3g}")
    top = build_unit_square_mesh(H)
    sub = build_sublayer_mesh(spec.sublayer(), h=grading.background_h)
    sub = refine_toward_corner(sub, grading)
    logger.info("Composite eps=%.4g: top %d vertices, sublayer %d vertices "
                "(h_min=%.3e, h_max=%.3e)", spec.epsilon, top.num_vertices,
                sub.num_vertices, sub.h_min, sub.h_max)
    return top, sub
