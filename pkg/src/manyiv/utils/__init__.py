from manyiv.utils.linalg import (
    ProjectionError,
    ProjectionResult,
    build_projection,
    group_projection,
    residualize,
    retained_columns,
)

__all__ = [
    "ProjectionError",
    "ProjectionResult",
    "build_projection",
    "group_projection",
    "residualize",
    "retained_columns",
]
