from .card import LayoutPlan, VizError, layout, render_graph_card, render_thumbnail
from .font import draw_text, text_mask

__all__ = ["LayoutPlan", "VizError", "layout", "render_graph_card", "render_thumbnail",
           "draw_text", "text_mask"]
