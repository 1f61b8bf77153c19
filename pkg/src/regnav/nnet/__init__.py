from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .core import (LEAKY_SLOPE, LOGVAR_MAX, LOGVAR_MIN, DenseSpec, ShapeError, dense_backward, dense_forward,
                   effective_weight, gaussian_kl, gaussian_kl_backward, gaussian_sample, gaussian_sample_backward,
                   init_dense, leaky_relu, log_softmax, mlp_backward, mlp_forward, one_hot, orthogonal,
                   power_iteration, softmax, softmax_cross_entropy, spectral_normalize, split_gaussian,
                   split_gaussian_backward)
from .gradcheck import GradCheckResult, grad_check, relative_error
from .params import ParamStore, clip_by_global_norm, global_norm, rmsprop_update
