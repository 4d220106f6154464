"""Composite quadrature weights on uniform grids."""

import numpy as np


def trapezoid_weights(num_nodes, h):
    if num_nodes < 2:
        raise ValueError("trapezoid rule needs at least two nodes")
    w = np.full(num_nodes, float(h))
    w[0] = w[-1] = 0.5 * h
    return w


def simpson_weights(num_nodes, h):
    # composite Simpson needs an even number of intervals
    if num_nodes < 3 or (num_nodes - 1) % 2:
        raise ValueError("Simpson's rule needs an odd number of nodes (>= 3)")
    w = np.full(num_nodes, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def weights(num_nodes, h, rule="trapezoid"):
    if rule == "trapezoid":
        return trapezoid_weights(num_nodes, h)
    if rule == "simpson":
        return simpson_weights(num_nodes, h)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def cumulative_trapezoid(y, dt):
    """Running trapezoid integral along axis 0, starting at zero."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out
