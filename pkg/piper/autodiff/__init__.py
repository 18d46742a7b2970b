"""
Reverse-mode autodiff, dense networks and Adam: the substrate for the policy, critics and acceleration proxy.
"""
from piper.autodiff.checkpoint import network_from_dict, network_to_dict  # noqa: F401
from piper.autodiff.network import (Gradients, Network, Trace, backward, check_gradients,  # noqa: F401
                                    forward, grad_check)
from piper.autodiff.optim import AdamState, adam_step, clip_grad_norm  # noqa: F401
from piper.autodiff.tape import Tape, Tensor  # noqa: F401
