"""Scalar-valued probe functions exercising every differentiable primitive,
shared by the unit tests and the acceptance gradient sweep."""

import numpy as np

from spandet import tensor as T


def make_aux(seed):
    """Frozen auxiliary constants; grad_check needs a deterministic function."""
    rng = np.random.default_rng(seed)
    return {
        "x": rng.normal(size=(3, 4)),
        "w": T.Tensor(rng.normal(size=(3, 4))),
        "m": T.Tensor(rng.normal(size=(4, 2))),
        "bias": T.Tensor(rng.normal(size=4)),
        "gain": T.Tensor(rng.normal(size=4)),
        "w26": T.Tensor(rng.normal(size=(2, 6))),
    }


GRAD_CASES = {
    "matmul": lambda t, a: T.sum_(T.matmul(t, a["m"])),
    "add_bias": lambda t, a: T.sum_((t + a["bias"]) * a["w"]),
    "mul": lambda t, a: T.sum_(t * a["w"]),
    "div": lambda t, a: T.sum_(t / (T.abs_(a["w"]) + 1.0)),
    "softmax": lambda t, a: T.sum_(T.softmax(t, axis=-1) * a["w"]),
    "layer_norm": lambda t, a: T.sum_(T.layer_norm(t, a["gain"], a["bias"]) * a["w"]),
    "sigmoid": lambda t, a: T.sum_(T.sigmoid(t) * a["w"]),
    "exp": lambda t, a: T.sum_(T.exp(t * 0.3) * a["w"]),
    "log": lambda t, a: T.sum_(T.log(T.exp(t)) * a["w"]),
    "sum": lambda t, a: T.sum_(t * a["w"], axis=0)[1],
    "mean": lambda t, a: T.mean(t * a["w"]),
    "relu_offset": lambda t, a: T.sum_(T.relu(t + 0.123) * a["w"]),
    "maxmin": lambda t, a: T.sum_(T.maximum(t, a["w"]) + T.minimum(t, a["w"])),
    "abs_offset": lambda t, a: T.sum_(T.abs_(t + 0.1) * a["w"]),
    "powc": lambda t, a: T.sum_(T.powc(T.sigmoid(t), 2.5)),
    "sincos": lambda t, a: T.sum_((T.sin(t) + T.cos(t)) * a["w"]),
    "concat_slice": lambda t, a: T.sum_(T.concat([t, t * 2.0], axis=0)[1:4, :] * 1.5),
    "transpose_reshape": lambda t, a: T.sum_(
        T.reshape(T.transpose(t, (1, 0)), (2, 6)) * a["w26"]),
    "inverse_sigmoid": lambda t, a: T.sum_(T.inverse_sigmoid(T.sigmoid(t)) * a["w"]),
    "scale": lambda t, a: T.sum_(T.scale(t, -2.5) * a["w"]),
}
