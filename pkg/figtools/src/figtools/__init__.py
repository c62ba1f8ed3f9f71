"""Figure rendering for the underbag toolkit's CSV/JSON outputs."""

from .recipes import FigureRecipe, SchemaError, load_recipe
from .render import render

__version__ = "0.1.0"
