"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from tripletdiff.numeric import Graph

H = 1e-3
FLOOR = 1e-6


def rel_error(a, n) -> float:
    return float(abs(a - n) / max(abs(a), abs(n), FLOOR))


def check(build, params: dict, probes: int, rng, h: float = H) -> list[float]:
    """``build(graph, tensors) -> scalar Tensor``; returns relative errors at ``probes`` random entries."""
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def loss_at(values):
        g = Graph(np.float64)
        return float(build(g, {k: g.param(k, v) for k, v in values.items()}).data)

    g = Graph(np.float64)
    grads = g.backward(build(g, {k: g.param(k, v) for k, v in params.items()}))
    names = list(params)
    errors = []
    for _ in range(probes):
        name = names[int(rng.integers(len(names)))]
        idx = tuple(int(rng.integers(d)) for d in params[name].shape)
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += h
        minus[name][idx] -= h
        numeric = (loss_at(plus) - loss_at(minus)) / (2 * h)
        errors.append(rel_error(grads[name][idx], numeric))
    return errors
