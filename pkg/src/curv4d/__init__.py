"""Presentation attack detection from temporal curvature statistics of 3D face scans."""

__version__ = "0.1.0"
