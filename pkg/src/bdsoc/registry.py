"""Built-in named models with numeric overrides."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CoefficientSet, ControlSet


@dataclass(frozen=True)
class ModelSpec:
    model: CoefficientSet
    controls: ControlSet
    params: dict = field(default_factory=dict)


def _zeros_like_state(x, n=1):
    return np.zeros((np.asarray(x).shape[0], n))


def _const_sigma(s):
    return lambda t, x, v: np.full((x.shape[0], 1, 1), s)


def _zero_g(t, x, y, z):
    return np.zeros((y.shape[0], 1))


def _zero_f(t, x, y, z, v):
    return np.zeros(y.shape[0])


def _zero_b(t, x, v):
    return np.zeros_like(x)


def _zero(p):
    model = CoefficientSet(_zero_b, _const_sigma(0.0), _zero_f, _zero_g,
                           lambda x: np.zeros(x.shape[0]), lip_L=1.0, alpha=0.5, name="zero")
    return model, ControlSet([0.0])


def _linear(p):
    a, bb, c = p["a"], p["b"], p["c"]
    model = CoefficientSet(
        _zero_b, _const_sigma(0.0),
        lambda t, x, y, z, v: a * y,
        lambda t, x, y, z: (bb * y)[:, None],
        lambda x: np.full(x.shape[0], c),
        lip_L=max(abs(a), bb ** 2, 1e-3), alpha=0.5, name="linear-bdsde")
    return model, ControlSet([0.0])


def _martingale(p):
    s = p["sigma"]
    model = CoefficientSet(_zero_b, _const_sigma(s), _zero_f, _zero_g, lambda x: x[:, 0].copy(),
                           lip_L=max(1.0, abs(s)), alpha=0.5, name="martingale")
    return model, ControlSet([0.0])


def _transport(p):
    model = CoefficientSet(_zero_b, _const_sigma(0.0), lambda t, x, y, z, v: v[:, 0].copy(), _zero_g,
                           lambda x: np.zeros(x.shape[0]), lip_L=1.0, alpha=0.5, name="transport-control")
    return model, ControlSet([-1.0, 0.0, 1.0])


def _lq(p):
    s, gamma, radius = p["sigma"], p["gamma"], p["radius"]
    # h = -x^2 is Lipschitz with constant 2*radius on the truncated box
    model = CoefficientSet(
        lambda t, x, v: v.copy(), _const_sigma(s), _zero_f,
        lambda t, x, y, z: np.full((y.shape[0], 1), gamma),
        lambda x: -x[:, 0] ** 2,
        lip_L=max(2.0 * radius, 1.0, abs(s)), alpha=0.5, name="controlled-drift-lq")
    return model, ControlSet(np.linspace(-1.0, 1.0, int(p["n_controls"])))


def _degenerate(p):
    s, cost, eta = p["sigma"], p["cost"], p["eta"]

    def sigma(t, x, v):
        return (s * np.clip(x[:, 0], 0.0, 1.0))[:, None, None]

    model = CoefficientSet(
        lambda t, x, v: v.copy(), sigma,
        lambda t, x, y, z, v: -cost * v[:, 0] ** 2,
        lambda t, x, y, z: (eta * np.sin(y))[:, None],
        lambda x: np.cos(x[:, 0]),
        lip_L=max(1.0, abs(s), 2.0 * abs(cost), eta ** 2), alpha=0.5, name="degenerate-sigma")
    return model, ControlSet([-1.0, 0.0, 1.0])


REGISTRY = {
    "zero": (_zero, {}),
    "linear-bdsde": (_linear, {"a": 0.5, "b": 0.3, "c": 1.0}),
    "martingale": (_martingale, {"sigma": 1.0}),
    "transport-control": (_transport, {}),
    "controlled-drift-lq": (_lq, {"sigma": 0.3, "gamma": 0.0, "radius": 6.0, "n_controls": 3}),
    "degenerate-sigma": (_degenerate, {"sigma": 0.5, "cost": 0.2, "eta": 0.1}),
}


def model_names() -> list:
    return sorted(REGISTRY)


def get_model(name: str, **overrides) -> ModelSpec:
    """Look up a registry model; ``overrides`` replace its numeric parameters."""
    if name not in REGISTRY:
        raise KeyError(f"unknown model {name!r}; valid keys: {', '.join(model_names())}")
    builder, defaults = REGISTRY[name]
    unknown = set(overrides) - set(defaults)
    if unknown:
        valid = ", ".join(sorted(defaults)) or "none"
        raise ValueError(f"model {name!r} has no parameter(s) {sorted(unknown)}; valid: {valid}")
    params = {**defaults, **{k: float(v) for k, v in overrides.items()}}
    model, controls = builder(params)
    return ModelSpec(model, controls, params)


def linear_closed_form(a: float, b: float, c: float, t: float, T: float, b_path) -> float:
    """Exact Y_t of y' = a y dt + b y dB(backward), Y_T = c, for a given B-path.

    Reversing time turns the backward integral into a forward one, so
    ``Y_t = c exp(a (T-t) + b (B_T - B_t) - b^2 (T-t) / 2)``.
    """
    bt, bT = b_path
    return float(c * np.exp(a * (T - t) + b * (bT - bt) - 0.5 * b * b * (T - t)))
