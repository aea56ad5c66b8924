# -*- coding: utf-8 -*-
"""
Product quadrature for expectations over the simulation covariate law

    Z1 ~ Unif(0, 1),  Z2 ~ N(0, 1),  Z3 ~ Bernoulli(0.5)  (independent).

Gauss-Legendre nodes are mapped from [-1, 1] to [0, 1]; Gauss-Hermite nodes
use the change of variables z = sqrt(2) x with weights normalised by
sqrt(pi) so that they integrate against the standard normal density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from config import QUADRATURE_CONFIG


@dataclass(frozen=True)
class ProductRule:
    """Nodes (one row per point) and probability weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """E f(Z); ``fn`` maps the (p, 3) node matrix to (p,) or (p, ...) values."""
        values = np.asarray(fn(self.nodes), dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))


def legendre_unit(num_pts: int):
    locs, vals = np.polynomial.legendre.leggauss(num_pts)
    return (locs + 1.0) / 2.0, vals / 2.0


def hermite_standard_normal(num_pts: int):
    locs, vals = np.polynomial.hermite.hermgauss(num_pts)
    return np.sqrt(2.0) * locs, vals / np.sqrt(np.pi)


def scenario_covariate_rule(legendre_nodes: int = None, hermite_nodes: int = None) -> ProductRule:
    """Uniform x normal x Bernoulli(0.5) product rule."""
    legendre_nodes = legendre_nodes or QUADRATURE_CONFIG['legendre_nodes']
    hermite_nodes = hermite_nodes or QUADRATURE_CONFIG['hermite_nodes']
    u, wu = legendre_unit(legendre_nodes)
    g, wg = hermite_standard_normal(hermite_nodes)
    b, wb = np.array([0.0, 1.0]), np.array([0.5, 0.5])

    U, G, B = np.meshgrid(u, g, b, indexing='ij')
    WU, WG, WB = np.meshgrid(wu, wg, wb, indexing='ij')
    nodes = np.column_stack([U.ravel(), G.ravel(), B.ravel()])
    weights = (WU * WG * WB).ravel()
    return ProductRule(nodes=nodes, weights=weights)
