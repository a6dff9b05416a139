"""Structured bitmap-to-mesh triangulation toolkit.

Converts binary bitmaps (or explicit polygon chains) into boundary-conforming
triangle meshes that stay close to an equilateral reference grid.  The pipeline
is: equilateral scaffold -> boundary extraction -> proximity preprocessing
(vertex snapping, vertex repulsion, edge elimination) -> intersection
classification -> template-driven local retriangulation -> stitch.  On top of
the mesher sit quality statistics (angles, areas, aspect ratios, histograms,
ablations) and a cotangent-Laplacian finite element heat solver.
"""

__version__ = "0.1.0"

from sbmt.geom import Tolerance, get_eps, set_eps  # noqa: F401
