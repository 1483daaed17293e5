"""Constraint discovery and re-parameterization for CSG models."""

from ._core import (
    DimensionMismatch,
    Error,
    InfeasibleProjection,
    InvalidArgument,
    Model,
    ParseError,
    Space,
    VariationDocument,
    discover,
    enumerate_candidates,
    load_model,
    load_space,
    load_variations,
    render,
    sample_cameras,
    tessellate,
)

__all__ = [
    "DimensionMismatch",
    "Error",
    "InfeasibleProjection",
    "InvalidArgument",
    "Model",
    "ParseError",
    "Space",
    "VariationDocument",
    "discover",
    "enumerate_candidates",
    "load_model",
    "load_space",
    "load_variations",
    "render",
    "sample_cameras",
    "tessellate",
]
