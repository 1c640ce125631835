"""Coherent-light fraction from interferometric photon correlations."""
from .lightfield import (Chaotic, Coherent, FieldTrajectory, Mixture, TwoMode,
                         analytic_g1, analytic_g2x_curve, analytic_g2x_mixture_zero,
                         sample_trajectory, uncorrelated_with_g2)
from .optics import (DetectorConfig, InterferometerConfig, TimestampStream, detect,
                     mzi_transform, read_pts, simulate_streams, write_pts)
from .correlator import CorrelationHistogram, autocorrelate, cross_correlate
from .inference import (DipFit, FitError, NonPhysicalError, RhoBounds, fit_dip,
                        propagate_bounds, rho_from_g2x, rho_lower_bound, rho_upper_bound,
                        unc_g2_region)

__version__ = "0.1.0"
