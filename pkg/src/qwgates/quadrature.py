"""Composite Gauss-Legendre rules on subdivided intervals."""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss


def panel_rule(a: float, b: float, n_panels: int, order: int):
    """Nodes and weights of `n_panels` equal Gauss-Legendre panels on [a, b]."""
    if b <= a:
        raise ValueError(f"empty interval [{a}, {b}]")
    if n_panels < 1 or order < 1:
        raise ValueError("n_panels and order must be >= 1")
    x, w = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def oscillation_resolving_rule(a: float, b: float, wavenumber: float,
                               order: int, max_width: float,
                               nodes_per_period: float = 8.0):
    """Panel rule sized so ~`nodes_per_period` nodes cover each oscillation.

    `wavenumber` is the largest angular wavenumber of the integrand; the
    panel width is capped at `max_width` for slowly varying integrands.
    """
    width = max_width
    if wavenumber > 0.0:
        period = 2.0 * math.pi / wavenumber
        width = min(max_width, order * period / nodes_per_period)
    n_panels = max(1, math.ceil((b - a) / width))
    return panel_rule(a, b, n_panels, order)
