"""Dense tensor kernels with reverse-mode differentiation"""

from fcmf.numerics.attention import scaled_dot_attention
from fcmf.numerics.gradcheck import grad_check
from fcmf.numerics.optim import Adam, clip_grad_norm
from fcmf.numerics.rng import RngStreams
from fcmf.numerics.tensor import ComputeGraph, Tensor, as_tensor, no_grad

__all__ = [
    "Adam",
    "ComputeGraph",
    "RngStreams",
    "Tensor",
    "as_tensor",
    "clip_grad_norm",
    "grad_check",
    "no_grad",
    "scaled_dot_attention",
]
