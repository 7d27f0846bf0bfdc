from .kernel import (KernelParams, QuadratureConfig, RadialSet, sphere_kernel_integral, ball_kernel_integral,
                     complement_kernel_integral, paired_shell_integral, sphere_kernel_hypergeometric)
from .curvature import (CurvatureValue, ball_curvature_constant, ball_curvature_closed_form, lemtech_constant,
                        fractional_curvature, annulus_inner_curvature_asymptotic, classical_limit_constant)
from .shrinker import (ShrinkerSolution, annulus_defect, find_annulus_shrinker, residual_system, find_shrinker,
                       cylinder_shrinker, limit_study)
from .stability import (StabilityReport, jacobian, spectrum, stability_report, corner_derivative_check,
                        shell_monotonicity_check)
from .flow import FlowState, FlowTrace, original_rhs, rescaled_rhs, integrate, growth_rate
from .easy import stationary_set, flow_from_shrinker
from .errors import FracShrinkError
from ._version import __version__
