"""Capacity, content and John-constant experiments on dyadic box-union domains."""
from .geometry import Box, DomainSpec, GeometryError, VoxelGrid, distance_field, rasterize

__all__ = ["Box", "DomainSpec", "GeometryError", "VoxelGrid", "distance_field", "rasterize"]
__version__ = "0.1.0"
