"""Software rasterizer: EWA projection, tiled alpha compositing, view stats."""

from gslift.raster.projection import (
    ProjectedGaussians,
    eval_sh_colors,
    project_gaussians,
    sort_by_depth,
)
from gslift.raster.render import (
    RenderBuffers,
    load_contributor_dump,
    render_frame,
    save_color_png,
    save_contributor_dump,
)
from gslift.raster.stats import ViewStats, accumulate_view_stats, merge_view_stats

__all__ = [
    "ProjectedGaussians",
    "eval_sh_colors",
    "project_gaussians",
    "sort_by_depth",
    "RenderBuffers",
    "render_frame",
    "save_color_png",
    "save_contributor_dump",
    "load_contributor_dump",
    "ViewStats",
    "accumulate_view_stats",
    "merge_view_stats",
]
