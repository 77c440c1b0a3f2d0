"""Reference models used by the acceptance experiments and the example configs."""

from __future__ import annotations

import math

import numpy as np

from .model import ConstantRates, ConstantSigma, Constants, PolyDrift, RSDPModel, TanhRates


def cancellation_rates(base12: float = 1.0, base21: float = 3.0, amp: float = 0.5) -> TanhRates:
    """``q12 = base12 + amp tanh(x)``, ``q21 = base21 - amp tanh(x)``; the pair sum is constant."""
    return TanhRates(a=[[0, base12], [base21, 0]], b=[[0, amp], [-amp, 0]], v=np.ones((2, 2, 1)))


def strong_order_model(sigma: float = 1.0) -> RSDPModel:
    """Two regimes in 1-d: ``b(x, i) = -a_i x`` with ``a = (1, 2)`` and cancellation rates."""
    return RSDPModel(cancellation_rates(), PolyDrift(A=[[[-1.0]], [[-2.0]]]), ConstantSigma([[sigma]], 2),
                     Constants(alpha=(-2.0, -4.0), C2=sigma, c_q=0.5), name="strong-order")


def constant_rate_variant() -> RSDPModel:
    return RSDPModel(ConstantRates([[0, 1.0], [3.0, 0]]), PolyDrift(A=[[[-1.0]], [[-2.0]]]),
                     ConstantSigma([[1.0]], 2), Constants(alpha=(-2.0, -4.0), C2=1.0, c_q=0.0),
                     name="strong-order-constant-rates")


def birth_death3_model() -> RSDPModel:
    """Three regimes with ``q_{i,i+1} + q_{i+1,i} = 3`` for both pairs."""
    a = [[0, 1, 0], [2, 0, 1], [0, 2, 0]]
    b = [[0, 0.5, 0], [-0.5, 0, 0.5], [0, -0.5, 0]]
    return RSDPModel(TanhRates(a, b, np.ones((3, 3, 1))), PolyDrift(A=[[[-1.0]], [[-1.5]], [[-2.0]]]),
                     ConstantSigma([[1.0]], 3), Constants(alpha=(-2.0, -3.0, -4.0), c_q=0.5),
                     name="birth-death-3")


def fixed_env_model(C3: float = 1.0) -> RSDPModel:
    """``b(x, i) = -x^3`` in both regimes, ``sigma = sqrt 2``; A4 declared with ``beta = 0, p = 4``."""
    return RSDPModel(cancellation_rates(), PolyDrift(A=[[[0.0]], [[-1.0]]], k=[1.0, 1.0], m=[2.0, 2.0]),
                     ConstantSigma([[math.sqrt(2.0)]], 2),
                     Constants(C2=math.sqrt(2.0), C3=C3, beta=0.0, p=4.0, i0=1, c_q=0.5),
                     name="fixed-environment")


def product_chain_model() -> RSDPModel:
    """Constant rates ``q12 = q21 = 1``; the regimes do not feel the continuous state."""
    return RSDPModel(ConstantRates([[0, 1.0], [1.0, 0]]), PolyDrift(A=[[[-1.0]], [[-1.0]]]),
                     ConstantSigma([[1.0]], 2), Constants(alpha=(-2.0, -2.0), c_q=0.0), name="product-chain")


def contraction_model() -> RSDPModel:
    """The strong-order model with weak noise, so drift contraction dominates the distance."""
    m = strong_order_model(sigma=0.1)
    return RSDPModel(m.rates, m.drift, m.sigma, m.constants, name="contraction")


def invariant_model() -> RSDPModel:
    """Slow mean reversion ``a = (0.3, 0.4)`` plus a small cubic term in regime 1.

    The noise is kept at ``sigma = 0.5`` so that the stationary law is narrow
    enough for 2000-sample distance estimates to resolve 0.1.
    """
    return RSDPModel(cancellation_rates(), PolyDrift(A=[[[-0.3]], [[-0.4]]], k=[0.01, 0.0], m=[2.0, 2.0]),
                     ConstantSigma([[0.5]], 2),
                     Constants(alpha=(-0.6, -0.8), C2=0.5, C3=0.0025, beta=0.0, p=4.0, i0=1, c_q=0.5),
                     name="invariant")


MODELS = {
    "strong-order": strong_order_model,
    "constant-rates": constant_rate_variant,
    "birth-death-3": birth_death3_model,
    "fixed-environment": fixed_env_model,
    "product-chain": product_chain_model,
    "contraction": contraction_model,
    "invariant": invariant_model,
}
