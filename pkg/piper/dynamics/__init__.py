"""
Analytic Lagrangian dynamics for planar revolute serial chains.
"""
from piper.dynamics.model import (ChainModel, DynamicsTerms, ExternalForce, JointState,  # noqa: F401
                                  load_model, model_from_dict, parse_model)
from piper.dynamics.rigid_body import (bias_force, coriolis_matrix, dynamics_terms,  # noqa: F401
                                       ee_jacobian, forward_dynamics, forward_kinematics,
                                       gravity_vector, inverse_dynamics, mass_matrix,
                                       mass_matrix_dot, mass_matrix_rate, total_energy)
