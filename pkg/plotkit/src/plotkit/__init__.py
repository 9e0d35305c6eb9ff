"""Figure rendering for the particle-filter benchmark CSVs."""
from .figures import (
    KINDS,
    EmptyData,
    FigureSpec,
    MissingColumn,
    PlotError,
    build_figure,
    render,
)

__all__ = [
    "KINDS",
    "EmptyData",
    "FigureSpec",
    "MissingColumn",
    "PlotError",
    "build_figure",
    "render",
]

__version__ = "0.1.0"
