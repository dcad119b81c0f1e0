"""panobench: a desk-scale toolkit for benchmarking panoramic (360-degree) image quality assessment.

Modules:
    geometry      ERP <-> sphere maps, gnomonic viewport rays, bilinear sampling
    viewports     equator trajectories (Image8, Video30) and viewport extraction
    scoring       handcrafted viewport features, linear/recurrent heads, PSNR family
    distortion    homogeneous/heterogeneous blur, noise, brightness and seam synthesis
    metrics       SRCC, PLCC with logistic prefit, splitting, dual-MOS merging
    analysis      gap/gain, saturation, cross-database matrices, rank aggregation
    fixtures      embedded published tables for arithmetic regression
    manifest      CSV dataset manifests
    experiment    end-to-end runs with deterministic report bundles
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DataError, NumericalError, PanobenchError  # noqa: E402,F401
