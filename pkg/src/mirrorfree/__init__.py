"""Mirror-free mirror prox for monotone operators with non-conservative mirrors."""
from .kernels import BACKEND
from .operators import VectorField, MinMaxSplit
from .geometry import GeometryContext, DEFAULT_CONTEXT, gbd, line_integral, loop_integral
from .prox import ProxSpec, prox_generic, ThirdOrderModel, third_order_prox, third_order_prox_sm
from .problems import ProblemInstance, random_instance, certify_instance
from .algorithms import RunConfig, run_mfmp, run_mfmp_sm

__all__ = [
    "BACKEND", "VectorField", "MinMaxSplit", "GeometryContext", "DEFAULT_CONTEXT", "gbd",
    "line_integral", "loop_integral", "ProxSpec", "prox_generic", "ThirdOrderModel",
    "third_order_prox", "third_order_prox_sm", "ProblemInstance", "random_instance",
    "certify_instance", "RunConfig", "run_mfmp", "run_mfmp_sm",
]
__version__ = "0.1.0"
