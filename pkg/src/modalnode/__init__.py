"""Modal synthesis of nonlinear string vibration with a learned nonlinearity."""

from .modal import (
    ModalSystem,
    PhysicalStringParams,
    ScaledStringParams,
    State,
    build_modal_system,
    mode_shape_vector,
    readout,
    scale_physical,
)
from .nonlinearity import CouplingTensor, LumpedNonlinearity, build_tensor, eval_tensor, quadrature_oracle
from .integrator import SimulationGrid, check_stability, rollout, verlet_step
from .neural import MlpNetwork, mlp_init, mlp_forward, mlp_backward

__version__ = "0.1.0"
