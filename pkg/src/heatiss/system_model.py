"""Parameters of the three delayed heat components and their closed-form
stability certificates.

Each component j solves

    dz/dt = a z_xx - b z  on (0, 1),   z_x(t, 0) = 0,
    a z_x(t, 1) = c z(t - r, 0) + w(t),

and the system is exponentially ISS as soon as ``c < sqrt(a b) sinh(sqrt(b/a))``
holds for every component. Equivalently the boundary feedback matrix
``Gamma D_0`` has spectral radius below one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import NonPositiveCoefficient, NonPositiveLambda, WrongComponentCount

N_COMPONENTS = 3


class Topology(str, enum.Enum):
    """How delayed boundary values are routed between components.

    ``SELF_DELAY`` feeds z_j(t - r_j, 0) back into component j, as in the
    governing equations. ``CHAIN`` feeds z_{j-1}(t - r_j, 0) into component j
    (component 1 receives only its disturbance); it is simulation-only.
    """

    SELF_DELAY = "self_delay"
    CHAIN = "chain"


@dataclass(frozen=True)
class ComponentParams:
    a: float  # diffusivity
    b: float  # reaction rate
    c: float  # coupling gain
    r: float  # transmission delay


@dataclass(frozen=True)
class SystemParams:
    components: tuple[ComponentParams, ...]
    topology: Topology = Topology.SELF_DELAY

    @classmethod
    def uniform(cls, a=1.0, b=1.0, c=1.0, r=0.3, topology=Topology.SELF_DELAY):
        comp = ComponentParams(float(a), float(b), float(c), float(r))
        return cls((comp,) * N_COMPONENTS, Topology(topology))

    @classmethod
    def from_arrays(cls, a, b, c, r, topology=Topology.SELF_DELAY):
        cols = [np.broadcast_to(np.asarray(v, dtype=float), (N_COMPONENTS,)) for v in (a, b, c, r)]
        comps = tuple(ComponentParams(*(float(col[j]) for col in cols)) for j in range(N_COMPONENTS))
        return cls(comps, Topology(topology))

    def with_coupling(self, c) -> "SystemParams":
        """Copy with every c_j replaced (scalar) or set per component."""
        cs = np.broadcast_to(np.asarray(c, dtype=float), (len(self.components),))
        comps = tuple(replace(p, c=float(cj)) for p, cj in zip(self.components, cs))
        return replace(self, components=comps)

    def array(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.components], dtype=float)


@dataclass(frozen=True)
class SpectralCertificate:
    iss_holds: bool
    per_component_margin: tuple[float, ...]
    spectral_radius_gamma_d0: float
    mu: tuple[float, ...]
    thresholds: tuple[float, ...]
    topology: Topology = field(default=Topology.SELF_DELAY)

    def to_dict(self) -> dict:
        return {
            "iss_holds": self.iss_holds,
            "per_component_margin": list(self.per_component_margin),
            "spectral_radius_gamma_d0": self.spectral_radius_gamma_d0,
            "mu": list(self.mu),
            "thresholds": list(self.thresholds),
            "topology": self.topology.value,
        }


def validate_params(raw: SystemParams) -> SystemParams:
    comps: Sequence[ComponentParams] = raw.components
    if len(comps) != N_COMPONENTS:
        raise WrongComponentCount(f"expected {N_COMPONENTS} components, got {len(comps)}")
    for j, p in enumerate(comps, start=1):
        for name in ("a", "b", "r"):
            v = getattr(p, name)
            if not (math.isfinite(v) and v > 0):
                raise NonPositiveCoefficient(name, j, v)
        if not (math.isfinite(p.c) and p.c >= 0):
            raise NonPositiveCoefficient("c", j, p.c)
    Topology(raw.topology)
    return raw


def _a_mu_sinh_mu(a: float, b_shifted: float) -> float:
    """a * mu * sinh(mu) with mu = sqrt(b_shifted / a); inf on overflow.

    Written as sqrt(a * b_shifted) * sinh(mu) so that at zero shift it is
    bit-identical to the ISS threshold sqrt(a b) sinh(sqrt(b/a)).
    """
    mu = math.sqrt(b_shifted / a)
    try:
        s = math.sinh(mu)
    except OverflowError:
        return math.inf
    return math.sqrt(a * b_shifted) * s


def iss_threshold(p: ComponentParams) -> float:
    return math.sqrt(p.a * p.b) * math.sinh(math.sqrt(p.b / p.a))


def boundary_gain(p: ComponentParams, lam: float = 0.0) -> float:
    """c / (a mu sinh mu), the flux-to-far-end gain of one component."""
    if p.c == 0:
        return 0.0
    return p.c / _a_mu_sinh_mu(p.a, p.b + lam)


def check_iss_condition(params: SystemParams) -> SpectralCertificate:
    validate_params(params)
    thresholds = tuple(iss_threshold(p) for p in params.components)
    margins = tuple(t - p.c for t, p in zip(thresholds, params.components))
    mu = tuple(math.sqrt(p.b / p.a) for p in params.components)
    return SpectralCertificate(
        iss_holds=all(m > 0 for m in margins),
        per_component_margin=margins,
        spectral_radius_gamma_d0=spectral_radius_gamma_d0(params),
        mu=mu,
        thresholds=thresholds,
        topology=Topology(params.topology),
    )


def gamma_d0_matrix(params: SystemParams) -> np.ndarray:
    """Block anti-diagonal ``[[0, I], [M, 0]]`` with M = diag(c_j/(a_j mu_j sinh mu_j))."""
    validate_params(params)
    k = len(params.components)
    out = np.zeros((2 * k, 2 * k))
    out[:k, k:] = np.eye(k)
    out[k:, :k] = np.diag([boundary_gain(p) for p in params.components])
    return out


def spectral_radius_gamma_d0(params: SystemParams) -> float:
    validate_params(params)
    # c/threshold < 1 exactly when c < threshold in IEEE arithmetic, and sqrt
    # is monotone, so this agrees with check_iss_condition bit for bit.
    return math.sqrt(max(boundary_gain(p) for p in params.components))


def transfer_bound_tau(params: SystemParams, lam: float) -> float:
    """max_j exp(-lam r_j) + max_j c_j/(a_j mu_j sinh mu_j), mu_j = sqrt((b_j+lam)/a_j)."""
    validate_params(params)
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam!r}")
    delay_part = max(math.exp(-lam * p.r) for p in params.components)
    heat_part = max(boundary_gain(p, lam) for p in params.components)
    return delay_part + heat_part
