"""gelforce: markerless visuotactile depth reconstruction and force estimation.

The package covers the full pipeline of a camera-based gel touch sensor:
sphere-press calibration of a color-to-normal model, sine-transform Poisson
integration of depth gradients, CNN force regressors with multi-level
feature taps, a cubic max-deformation baseline, and a synthetic gel
simulator that serves as ground truth for all of it.
"""

from . import (calibration, datasets, depth, experiment, fields, force,
               image, metrics, nn, poisson, simulate)

__version__ = "0.1.0"

__all__ = ["calibration", "datasets", "depth", "experiment", "fields",
           "force", "image", "metrics", "nn", "poisson", "simulate",
           "__version__"]
