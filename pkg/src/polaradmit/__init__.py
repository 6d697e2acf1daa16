"""Stokes-parameter admissibility checks, synthetic polarimetric data and a desk-scale constrained CycleGAN."""
from .admissibility import (ConstraintTolerance, ViolationReport, check_pixel, dataset_report,
                            image_losses, project_to_feasible)
from .errors import PolarAdmitError
from .stokes import (DEFAULT_CALIBRATION, CalibrationMatrix, build_calibration, dop,
                     intensities_to_stokes, stokes_to_intensities)

__version__ = "0.1.0"
