"""Unions of constrained quartic implicit primitives.

A shape is a set of closed quartic surfaces combined by pointwise minimum of
their polynomial values; the package fits such unions to watertight meshes,
ray-traces them in closed form, extracts triangle meshes, and scores results.

Submodules with heavy optional dependencies (extract, metrics, render) load
lazily through attribute access.
"""

from importlib import import_module

from .fit import (
    FitConfig,
    FitDivergedError,
    FitResult,
    NonFiniteGradientError,
    evaluate_loss,
    fit,
    total_loss_and_grad,
)
from .mesh import (
    SampleSet,
    TriMesh,
    WatertightnessError,
    build_sample_set,
    load_obj,
    load_sample_set,
    normalize,
    sample_surface,
    save_obj,
    save_sample_set,
)
from .primitive import AssembledPrimitive, RawPrimitiveParams, assemble, is_empty
from .quartic import RayHit, ray_intersect, ray_intersect_batch, solve_quartic
from .scene import (
    DegenerateGradientError,
    IntegrityError,
    Scene,
    SchemaError,
    load_scene,
    prune,
    save_scene,
)

__version__ = "0.1.0"

_LAZY_SUBMODULES = ("extract", "metrics", "render", "shapes", "cli", "lossplot")


def __getattr__(name: str):
    if name in _LAZY_SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "AssembledPrimitive",
    "DegenerateGradientError",
    "FitConfig",
    "FitDivergedError",
    "FitResult",
    "IntegrityError",
    "NonFiniteGradientError",
    "RawPrimitiveParams",
    "RayHit",
    "SampleSet",
    "Scene",
    "SchemaError",
    "TriMesh",
    "WatertightnessError",
    "assemble",
    "build_sample_set",
    "evaluate_loss",
    "fit",
    "is_empty",
    "load_obj",
    "load_sample_set",
    "load_scene",
    "normalize",
    "prune",
    "ray_intersect",
    "ray_intersect_batch",
    "sample_surface",
    "save_obj",
    "save_sample_set",
    "save_scene",
    "solve_quartic",
    "total_loss_and_grad",
    "__version__",
]
