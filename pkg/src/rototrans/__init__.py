"""Locally adaptive gauge frames on the roto-translation groups SE(2)/SE(3).

Exponential curve fits (structure-tensor and Hessian based, including the
torsion-free two-fold SE(3) algorithms), the adapted frames they induce, and
the downstream operators: invertible orientation scores, crossing-preserving
diffusion, multi-scale vesselness and vessel segmentation.
"""

from . import (config, filters, gauge, lifting, liegroup, localfit_rd,
               localfit_se2, localfit_se3, phantoms, scoreio, sphere, verify)
from .fitting import TangentFit
from .gauge import GaugeFrame, gauge_frame, gauge_frame_field
from .lifting import (CakeStack, MultiScaleScore, OrientationScore,
                      cakewavelet_stack_2d, gaussian_gradient,
                      group_gaussian_smooth, lift_3d, multiscale_os,
                      orientation_score_2d, reconstruct_2d)
from .liegroup import (GroupElement, curvature_torsion,
                       deviation_from_horizontality, exp_curve,
                       group_product, identity, inverse,
                       left_invariant_derivative, matrix_rep, metric_norm,
                       neighbor_rotation, se2, se3)
from .localfit_rd import (first_order_fit_rd, hessian_rd,
                          second_order_fit_rd, structure_matrix_rd)
from .localfit_se2 import (SE2TensorField, first_order_fit_se2, hessian_se2,
                           second_order_fit_product_se2,
                           second_order_fit_sum_se2, structure_tensor_se2)
from .localfit_se3 import (ProjectedCurveFit, SE3TensorField,
                           check_zalpha_equivariance, factorized_second_order,
                           first_order_fit_se3, hessian_se3, project_fit,
                           second_order_fit_se3, structure_tensor_se3,
                           twofold_first_order, twofold_second_order)
from .filters import (DiffusionConfig, VesselnessConfig, frangi_baseline,
                      gauge_diffusion, multiscale_vesselness, segment,
                      vesselness_se2)
from .sphere import IcoSphere, icosphere

__version__ = "0.1.0"
