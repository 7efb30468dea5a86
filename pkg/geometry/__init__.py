"""
Geometry Module - Rough profiles, domain descriptions and meshes.
"""

from .profile import RoughProfile, DomainKind, DomainSpec, GradingSpec, LABELS
from .mesh import Mesh, MeshError, PointOutsideMeshError
from .refinement import refine_toward_corner
from .builders import (
    build_unit_square_mesh, build_cell_mesh, build_quarter_plane_mesh,
    build_sublayer_mesh, build_rough_composite
)

__all__ = [
    'RoughProfile',
    'DomainKind',
    'DomainSpec',
    'GradingSpec',
    'LABELS',
    'Mesh',
    'MeshError',
    'PointOutsideMeshError',
    'refine_toward_corner',
    'build_unit_square_mesh',
    'build_cell_mesh',
    'build_quarter_plane_mesh',
    'build_sublayer_mesh',
    'build_rough_composite'
]
