"""Gene-frequency models: the two parametric laws the estimator supports.

The gene exposure G follows either a Bernoulli law with carrier frequency
beta_4 or a zero-mean Laplace law with variance beta_4 (a heavy-tailed working
model for a continuous gene score).  Both laws expose the same small surface:
density, the score in beta_4, a quadrature rule that integrates against the
law, and sampling.  Everything downstream (the gene integrals inside the
efficient score) talks to this surface only.
"""

from __future__ import annotations

import dataclasses
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .errors import NumericError, ParameterError, SupportError

#: Probability mass the Laplace quadrature leaves in the two tails.
TAIL_MASS = 1e-12
#: Gauss-Legendre nodes per Laplace panel.  The integrand has a kink at the
#: origin, so the rule uses one panel per side of zero rather than one global
#: panel.
NODES_PER_PANEL = 64


@lru_cache(maxsize=8)
def _leggauss(n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclasses.dataclass(frozen=True)
class GeneQuadrature:
    """Nodes and weights with ``sum(weights * f(nodes)) ~= E[f(G)]``.

    The weights absorb the density, so integrating the constant one recovers
    the total mass the rule retains.  ``panel_count`` is the number of
    Gauss-Legendre panels behind the rule; zero means the law is discrete and
    the rule is an exact finite sum.
    """

    nodes: np.ndarray
    weights: np.ndarray
    panel_count: int


class GeneModel:
    """Common surface of the two gene laws."""

    kind: str = ""

    def __init__(self, beta4: float):
        self.beta4 = float(beta4)

    def __repr__(self):
        return f"{type(self).__name__}({self.beta4!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.beta4 == other.beta4

    def with_beta4(self, beta4: float) -> "GeneModel":
        """Same law family with the parameter rebound (used inside Newton)."""
        return type(self)(beta4)

    # Optimizers iterate on an unconstrained transform of beta_4 so trial
    # steps can never leave the admissible range.
    @staticmethod
    def to_unconstrained(beta4: float) -> float:
        raise NotImplementedError

    @staticmethod
    def from_unconstrained(x: float) -> float:
        raise NotImplementedError

    def density(self, g):
        raise NotImplementedError

    def score_beta4(self, g):
        """d/d(beta_4) of the log density, evaluated at g."""
        raise NotImplementedError

    def quadrature(self) -> GeneQuadrature:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def integrate(self, f) -> float:
        """Integrate ``f`` against the law using this module's own rule.

        ``f`` must accept the node array and return finite values; a
        non-finite value is reported together with the offending node.
        """
        quad = self.quadrature()
        values = np.asarray(f(quad.nodes), dtype=float)
        if values.shape != quad.nodes.shape:
            raise ValueError("integrand must return one value per node")
        bad = ~np.isfinite(values)
        if bad.any():
            node = quad.nodes[bad][0]
            raise NumericError(f"integrand returned a non-finite value at g={node!r}")
        return float(np.sum(quad.weights * values))


class BernoulliGene(GeneModel):
    """Carrier indicator: P(G=1) = beta_4 with beta_4 in (0, 1)."""

    kind = "bernoulli"

    def __init__(self, beta4: float):
        beta4 = float(beta4)
        if not np.isfinite(beta4) or not 0.0 < beta4 < 1.0:
            raise ParameterError(f"Bernoulli frequency must lie in (0, 1), got {beta4!r}")
        super().__init__(beta4)

    @staticmethod
    def to_unconstrained(beta4: float) -> float:
        return float(np.log(beta4 / (1.0 - beta4)))

    @staticmethod
    def from_unconstrained(x: float) -> float:
        return float(expit(x))

    def _check_support(self, g):
        g = np.asarray(g, dtype=float)
        bad = ~((g == 0.0) | (g == 1.0))
        if bad.any():
            raise SupportError(f"Bernoulli gene values must be 0 or 1, got {np.asarray(g)[bad][0]!r}")
        return g

    def density(self, g):
        g = self._check_support(g)
        out = np.where(g == 1.0, self.beta4, 1.0 - self.beta4)
        return out if out.ndim else float(out)

    def score_beta4(self, g):
        g = self._check_support(g)
        out = g / self.beta4 - (1.0 - g) / (1.0 - self.beta4)
        return out if out.ndim else float(out)

    def quadrature(self) -> GeneQuadrature:
        # Exact two-point sum; no panels involved.
        nodes = np.array([0.0, 1.0])
        weights = np.array([1.0 - self.beta4, self.beta4])
        return GeneQuadrature(nodes=nodes, weights=weights, panel_count=0)

    def sample(self, rng, size):
        return (rng.random(size) < self.beta4).astype(float)


class LaplaceGene(GeneModel):
    """Zero-mean Laplace law parameterized by its variance beta_4 > 0.

    The scale is b = sqrt(beta_4 / 2), so Var(G) = 2 b^2 = beta_4.
    """

    kind = "laplace"

    def __init__(self, beta4: float):
        beta4 = float(beta4)
        if not np.isfinite(beta4) or beta4 <= 0.0:
            raise ParameterError(f"Laplace variance must be positive, got {beta4!r}")
        super().__init__(beta4)

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.beta4 / 2.0))

    @staticmethod
    def to_unconstrained(beta4: float) -> float:
        return float(np.log(beta4))

    @staticmethod
    def from_unconstrained(x: float) -> float:
        return float(np.exp(x))

    def density(self, g):
        g = np.asarray(g, dtype=float)
        b = self.scale
        out = np.exp(-np.abs(g) / b) / (2.0 * b)
        return out if out.ndim else float(out)

    def score_beta4(self, g):
        g = np.asarray(g, dtype=float)
        out = (np.abs(g) / self.scale - 1.0) / (2.0 * self.beta4)
        return out if out.ndim else float(out)

    def quadrature(self) -> GeneQuadrature:
        # One panel per side of the kink at zero, truncated where the two
        # tails hold exactly TAIL_MASS of the probability.
        b = self.scale
        reach = b * np.log(1.0 / TAIL_MASS)
        x, w = _leggauss(NODES_PER_PANEL)
        right_nodes = 0.5 * reach * (x + 1.0)
        right_weights = 0.5 * reach * w * self.density(right_nodes)
        nodes = np.concatenate([-right_nodes[::-1], right_nodes])
        weights = np.concatenate([right_weights[::-1], right_weights])
        return GeneQuadrature(nodes=nodes, weights=weights, panel_count=2)

    def sample(self, rng, size):
        return rng.laplace(0.0, self.scale, size)


def gene_model(kind: str, beta4: float) -> GeneModel:
    """Construct a gene law by name ('bernoulli' or 'laplace')."""
    if kind == "bernoulli":
        return BernoulliGene(beta4)
    if kind == "laplace":
        return LaplaceGene(beta4)
    raise ParameterError(f"unknown gene model kind {kind!r}")
