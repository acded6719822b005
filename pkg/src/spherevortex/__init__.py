"""Point vortices and vortex patches on the rotating unit sphere."""

__version__ = "0.1.0"
