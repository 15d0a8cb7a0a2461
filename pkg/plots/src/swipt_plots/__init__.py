"""Figure rendering for cfswipt sweep CSVs."""

from .render import FIGURE_KINDS, PlotSpec, SchemaError, load_series, load_trace, render, render_all

__all__ = ["FIGURE_KINDS", "PlotSpec", "SchemaError", "load_series", "load_trace",
           "render", "render_all"]
