"""Multiple inlier structures robust estimation.

Segments noisy 2D/3D data into geometric structures, each with its own
adaptively estimated noise scale, and orders them by strength.
"""

__version__ = "0.4.0"
