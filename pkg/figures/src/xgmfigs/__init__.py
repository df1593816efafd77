"""Figure rendering for xgmsim experiment archives."""

from .figures import KINDS, FigureSpec, render
from .io import RunDirError, load_manifest, load_rates, load_summary, load_trajectories

__version__ = "0.1.0"
