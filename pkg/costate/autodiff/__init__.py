from .tensor import (
    Tensor, Tape, backward, add, sub, mul, scalar_mul, add_bias, matmul, transpose,
    tanh, sigmoid, exp, concat_rows, slice_rows, row_softmax,
    row_l2_normalize, frobenius_sq_norm, sum_all, mean_sq_error, pad_stack, take_rows, lstm_sequence,
)
from .optim import Adam, zero_grads, scale_grads, sgd_adam_step
from .checkpoint import save_tensors, load_tensors, file_digest

__all__ = [
    'Tensor', 'Tape', 'backward',
    'add', 'sub', 'mul', 'scalar_mul', 'add_bias', 'matmul', 'transpose',
    'tanh', 'sigmoid', 'exp', 'concat_rows', 'slice_rows', 'row_softmax',
    'row_l2_normalize', 'frobenius_sq_norm', 'sum_all', 'mean_sq_error', 'pad_stack', 'take_rows', 'lstm_sequence',
    'Adam', 'zero_grads', 'scale_grads', 'sgd_adam_step',
    'save_tensors', 'load_tensors', 'file_digest',
]
