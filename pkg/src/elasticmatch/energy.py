"""Relaxed matching energies and their exact vertex gradients.

Deformation cost between same-connectivity meshes is measured with the
first-order (and optionally second-order) feature distances; closeness to
the fixed boundary data is enforced with squared kernel fidelity terms
scaled by a penalty weight. All distances enter squared, which keeps every
term differentiable at the minimum.
"""

from dataclasses import dataclass

import numpy as np

from . import features, varifold
from .errors import ConfigError
from .varifold import KernelConfig


@dataclass
class MatchConfig:
    """Weights of the matching energy.

    lam : penalty weight on the squared fidelity terms (> 0).
    kernel : fidelity kernel parameters.
    srnf_weight / srcf_weight : weights of the first/second-order feature
        terms; their sum must be positive. The second-order term is off by
        default (it is only stable combined with the first-order one).
    """
    lam: float
    kernel: KernelConfig
    srnf_weight: float = 1.0
    srcf_weight: float = 0.0

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        if self.srnf_weight < 0.0 or self.srcf_weight < 0.0:
            raise ConfigError("feature weights must be nonnegative")
        if not self.srnf_weight + self.srcf_weight > 0.0:
            raise ConfigError("at least one feature weight must be positive")


def feature_distance_sq(a, b, cfg):
    """Weighted sum of the squared feature distances between two meshes
    with identical combinatorics."""
    val = 0.0
    if cfg.srnf_weight > 0.0:
        val += cfg.srnf_weight * features.srnf_distance_sq(a, b)
    if cfg.srcf_weight > 0.0:
        val += cfg.srcf_weight * features.srcf_distance_sq(a, b)
    return val


def _feature_distance_sq_grad(a, b, cfg):
    val = 0.0
    grad = np.zeros_like(a.vertices)
    if cfg.srnf_weight > 0.0:
        v, g = features.srnf_distance_sq_grad(a, b)
        val += cfg.srnf_weight * v
        grad += cfg.srnf_weight * g
    if cfg.srcf_weight > 0.0:
        v, g = features.srcf_distance_sq_grad(a, b)
        val += cfg.srcf_weight * v
        grad += cfg.srcf_weight * g
    return val, grad


def asymmetric_energy(q0, q1t, q1, cfg):
    """Deformation cost from ``q0`` to the free mesh ``q1t`` plus the
    penalized fidelity of ``q1t`` to the target data ``q1``.

    ``q0`` and ``q1t`` must share combinatorics; ``q1`` is arbitrary.
    """
    return (feature_distance_sq(q0, q1t, cfg)
            + cfg.lam * varifold.distance_sq(q1t, q1, cfg.kernel))


def asymmetric_energy_grad(q0, q1t, q1, cfg):
    """Value and gradient with respect to the vertices of ``q1t``."""
    fval, fgrad = _feature_distance_sq_grad(q1t, q0, cfg)
    vval, vgrad = varifold.distance_sq_grad(q1t, q1, cfg.kernel)
    return fval + cfg.lam * vval, fgrad + cfg.lam * vgrad


def symmetric_energy(q0t, q1t, q0, q1, cfg):
    """Fidelity of ``q0t`` to ``q0``, deformation cost between the free pair
    ``(q0t, q1t)``, and fidelity of ``q1t`` to ``q1``.

    ``q0t`` and ``q1t`` must share combinatorics; the data meshes ``q0`` and
    ``q1`` may have arbitrary (different) connectivity and topology.
    """
    terms = symmetric_energy_terms(q0t, q1t, q0, q1, cfg)
    return terms["total"]


def symmetric_energy_terms(q0t, q1t, q0, q1, cfg):
    """Per-term breakdown of the symmetric energy.

    Returns a dict with the raw (unweighted) squared distances ``srnf``,
    ``srcf``, ``var_source``, ``var_target`` and the weighted ``total``.
    """
    srnf_val = (features.srnf_distance_sq(q0t, q1t)
                if cfg.srnf_weight > 0.0 else 0.0)
    srcf_val = (features.srcf_distance_sq(q0t, q1t)
                if cfg.srcf_weight > 0.0 else 0.0)
    var0 = varifold.distance_sq(q0, q0t, cfg.kernel)
    var1 = varifold.distance_sq(q1t, q1, cfg.kernel)
    total = (cfg.srnf_weight * srnf_val + cfg.srcf_weight * srcf_val
             + cfg.lam * (var0 + var1))
    return {"srnf": srnf_val, "srcf": srcf_val,
            "var_source": var0, "var_target": var1, "total": total}


def symmetric_energy_grad(q0t, q1t, q0, q1, cfg):
    """Value and gradients with respect to the vertices of ``q0t`` and
    ``q1t`` (in that order)."""
    fval, fgrad0 = _feature_distance_sq_grad(q0t, q1t, cfg)
    # the feature terms are symmetric in (q0t, q1t); differentiate the
    # second slot by swapping arguments
    _, fgrad1 = _feature_distance_sq_grad(q1t, q0t, cfg)
    v0, vgrad0 = varifold.distance_sq_grad(q0t, q0, cfg.kernel)
    v1, vgrad1 = varifold.distance_sq_grad(q1t, q1, cfg.kernel)
    value = fval + cfg.lam * (v0 + v1)
    return value, fgrad0 + cfg.lam * vgrad0, fgrad1 + cfg.lam * vgrad1


def inversion_energy(q, target, target_srcf=None, srcf_weight=0.0):
    """Squared distance between the feature field of ``q`` and a target
    field, optionally augmented with a second-order term."""
    diff = features.srnf(q).values - target.values
    if diff.shape != target.values.shape:
        raise ConfigError("target field shape does not match mesh faces")
    val = float((diff ** 2).sum())
    if target_srcf is not None and srcf_weight > 0.0:
        d2 = features.srcf(q).values - target_srcf.values
        val += srcf_weight * float((d2 ** 2).sum())
    return val


def inversion_energy_grad(q, target, target_srcf=None, srcf_weight=0.0):
    """Value and gradient with respect to the vertices of ``q``."""
    nq = features.srnf(q).values
    if nq.shape != target.values.shape:
        raise ConfigError("target field shape does not match mesh faces")
    diff = nq - target.values
    val = float((diff ** 2).sum())
    grad = features.srnf_vjp(q, 2.0 * diff)
    if target_srcf is not None and srcf_weight > 0.0:
        d2 = features.srcf(q).values - target_srcf.values
        val += srcf_weight * float((d2 ** 2).sum())
        grad += srcf_weight * features.srcf_vjp(q, 2.0 * d2)
    return val, grad
