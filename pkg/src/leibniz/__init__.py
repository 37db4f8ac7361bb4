"""Leibniz-rule derivative estimators for expectations of discontinuous
simulation outputs, with the copula samplers, benchmark models and
quadrature oracles used to check them."""

from .distributions import (BivariateLogNormal, Clayton, CopulaJoint, Exponential, FGM, Gamma,
                            Gaussian, Independence, LogNormal, Normal, Uniform01)
from .estimators import (DerivativeEstimate, EstimatorConfig, fd_estimate, ipa_lr_path,
                         leibniz_divergence_estimate, leibniz_divergence_path,
                         leibniz_integral_estimate, leibniz_volume_path, replicate,
                         surface_term)
from .models import (AmericanOptionModel, GG1Model, Model, model_log_inventory,
                     model_max_threshold, model_san_density)

__version__ = "0.1.0"
