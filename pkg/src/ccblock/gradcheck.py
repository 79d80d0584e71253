"""Central finite-difference gradient checking for layers and whole models.

All checks run the layer math in float64 (h = 1e-3), comparing analytic
backward results against (f(x+h) - f(x-h)) / 2h coordinate by coordinate.
Inputs for kinked layers (ReLU, max pool) are sampled away from their
non-differentiable points so the two-sided difference stays valid.
"""

import numpy as np

from .layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    ReLU,
    softmax_xent,
    softmax_xent_backward,
)

H = 1e-3


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, tiny: float = 1e-8) -> float:
    """Worst-case |a-n| / max(|a|,|n|); coordinates where both vanish are
    compared absolutely."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(denom > tiny, diff / np.maximum(denom, tiny), diff)
    return float(rel.max()) if rel.size else 0.0


def numeric_gradient(objective, arr: np.ndarray, h: float = H) -> np.ndarray:
    """d(objective)/d(arr) by central differences; mutates arr in place
    and restores it."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = objective()
        flat[i] = orig - h
        fm = objective()
        flat[i] = orig
        grad.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return grad


def _spaced_values(rng, shape, margin=0.05):
    """Random permutation of distinct values with |v| >= margin and pairwise
    gaps well above 2h, so kinked layers stay differentiable under
    perturbation (no ReLU zero crossings, no max-pool ties)."""
    n = int(np.prod(shape))
    pos = np.linspace(margin, 1.0, (n + 1) // 2, dtype=np.float64)
    neg = np.linspace(-1.0, -margin, n // 2, dtype=np.float64)
    values = rng.permutation(np.concatenate([pos, neg]))
    return values.reshape(shape)


def check_layer(layer, x: np.ndarray, forward_kwargs=None) -> dict:
    """Gradient-check one layer against a random linear readout.

    Returns {"input": err, **param errs} of max relative errors.
    """
    forward_kwargs = forward_kwargs or {}
    rng = np.random.default_rng(0xC0FFEE)
    out = layer.forward(x, **forward_kwargs)
    readout = rng.normal(size=out.shape)

    def objective():
        return float(np.sum(layer.forward(x, **forward_kwargs) * readout))

    dx = layer.backward(readout)
    analytic = {"input": dx, **{k: v for k, v in layer.grads.items()}}

    errors = {"input": max_rel_error(dx, numeric_gradient(objective, x))}
    for name, param in layer.params().items():
        errors[name] = max_rel_error(analytic[name], numeric_gradient(objective, param))
    return errors


def check_softmax_xent(n=4, k=3, seed=11) -> float:
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(n, k))
    labels = rng.integers(0, k, size=n)

    def objective():
        loss, _ = softmax_xent(logits, labels)
        return loss

    _, probs = softmax_xent(logits, labels)
    analytic = softmax_xent_backward(probs, labels)
    return max_rel_error(analytic, numeric_gradient(objective, logits))


def _he_conv(rng, oc, ic, k):
    std = np.sqrt(2.0 / (ic * k * k))
    return rng.normal(0.0, std, size=(oc, ic, k, k)), rng.normal(0.0, 0.1, size=oc)


def run_layer_suite(seed: int = 7) -> dict:
    """Finite-difference suite over every layer type at small shapes.

    Returns {layer_name: max relative error over input and parameter
    gradients}; the pass bar is 1e-4 everywhere.
    """
    rng = np.random.default_rng(seed)
    results = {}

    w, b = _he_conv(rng, 4, 3, 3)
    conv = Conv2D(w, b, stride=1, pad=1)
    errs = check_layer(conv, rng.normal(size=(2, 3, 5, 5)))
    results["conv2d"] = max(errs.values())

    w, b = _he_conv(rng, 3, 2, 2)
    conv_valid = Conv2D(w, b, stride=2, pad=0)
    errs = check_layer(conv_valid, rng.normal(size=(2, 2, 6, 6)))
    results["conv2d_strided"] = max(errs.values())

    pool = MaxPool2x2()
    errs = check_layer(pool, _spaced_values(rng, (2, 3, 6, 6)))
    results["maxpool2"] = max(errs.values())

    relu = ReLU()
    errs = check_layer(relu, _spaced_values(rng, (2, 3, 5, 5)))
    results["relu"] = max(errs.values())

    bn = BatchNorm2D(3, dtype=np.float64)
    errs = check_layer(bn, rng.normal(size=(2, 3, 5, 5)), forward_kwargs={"train": True})
    results["batchnorm_train"] = max(errs.values())

    bn_inf = BatchNorm2D(3, dtype=np.float64)
    bn_inf.running_mean[...] = rng.normal(size=3)
    bn_inf.running_var[...] = rng.uniform(0.5, 2.0, size=3)
    errs = check_layer(bn_inf, rng.normal(size=(2, 3, 5, 5)), forward_kwargs={"train": False})
    results["batchnorm_infer"] = max(errs.values())

    dense = Dense(rng.normal(0.0, 0.3, size=(4, 6)), rng.normal(0.0, 0.1, size=4))
    errs = check_layer(dense, rng.normal(size=(3, 6)))
    results["dense"] = max(errs.values())

    flat = Flatten()
    errs = check_layer(flat, rng.normal(size=(2, 3, 2, 2)))
    results["flatten"] = max(errs.values())

    results["softmax_xent"] = check_softmax_xent()
    return results


def check_model_loss_grads(model, x, labels, n_coords: int = 24, seed: int = 3,
                           h: float = 1e-5) -> float:
    """End-to-end check: loss gradient wrt a sampled subset of parameters.

    The model must be float64 throughout. Returns the max relative error
    over the sampled coordinates. The step is smaller than the per-layer
    default because an early-layer perturbation at full input resolution
    sweeps thousands of downstream activations across ReLU/pool kinks;
    h must stay below the typical kink distance.
    """
    rng = np.random.default_rng(seed)

    def loss_value():
        logits = model.forward_logits(x, train=True)
        loss, _ = softmax_xent(logits, labels)
        return loss

    logits = model.forward_logits(x, train=True)
    loss, probs = softmax_xent(logits, labels)
    model.backward(softmax_xent_backward(probs, labels))
    analytic = {name: grad.copy() for name, grad in model.param_grads()}

    slots = [(name, arr) for name, arr in model.named_params() if name in analytic]
    worst = 0.0
    for _ in range(n_coords):
        name, arr = slots[rng.integers(len(slots))]
        flat = arr.reshape(-1)
        i = int(rng.integers(flat.size))
        orig = flat[i]
        flat[i] = orig + h
        fp = loss_value()
        flat[i] = orig - h
        fm = loss_value()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        ana = float(analytic[name].reshape(-1)[i])
        worst = max(worst, max_rel_error(np.array([ana]), np.array([numeric])))
    return worst
