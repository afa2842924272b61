from dewet_plots.figures import FigureSpec, MissingColumn, render

__all__ = ["FigureSpec", "MissingColumn", "render"]
