"""Finite differences for ``a f'' - b f`` on [0, 1] and the matching closed forms.

The grid carries both endpoints. Ghost nodes eliminate ``f'(0) = 0`` and
``a f'(1) = d``, which keeps the scheme second order and the matrix Metzler
(nonnegative off-diagonal, negative diagonal), so ``(lam I - L)^{-1}`` is
entrywise nonnegative for every ``lam > -b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import (
    GridTooCoarse,
    LambdaBelowSpectralCut,
    NonPositiveLambda,
    QuadratureFailure,
    SingularSystem,
)
from .system_model import ComponentParams, SystemParams, boundary_gain, validate_params

MIN_INTERIOR_NODES = 8


@dataclass(frozen=True)
class Grid:
    n: int  # interior nodes; n + 2 nodes in total

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_INTERIOR_NODES:
            raise GridTooCoarse(f"need at least {MIN_INTERIOR_NODES} interior nodes, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n + 2

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 2)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights; ``weights @ |f|`` is the L1 norm."""
        w = np.full(self.size, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(frozen=True)
class HeatProfile:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"profile needs {self.grid.size} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    def l1_norm(self) -> float:
        return float(self.grid.weights @ np.abs(self.values))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "HeatProfile":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.size))


@dataclass(frozen=True)
class DiscreteHeatOperator:
    """Tridiagonal ``a d_xx - b`` with the two boundary closures built in.

    ``apply(f, d)`` returns ``L f + injection * d`` where ``injection`` is
    ``2/h`` on the x = 1 row and zero elsewhere.
    """

    params: ComponentParams
    grid: Grid
    lower: np.ndarray  # lower[i] = L[i+1, i]
    diag: np.ndarray
    upper: np.ndarray  # upper[i] = L[i, i+1]

    @property
    def injection(self) -> np.ndarray:
        e = np.zeros(self.grid.size)
        e[-1] = 2.0 / self.grid.h
        return e

    def matrix(self) -> sp.csr_matrix:
        return sp.diags([self.lower, self.diag, self.upper], [-1, 0, 1], format="csr")

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()

    def apply(self, f: np.ndarray, d: float = 0.0) -> np.ndarray:
        out = self.diag * f
        out[1:] += self.lower * f[:-1]
        out[:-1] += self.upper * f[1:]
        out[-1] += 2.0 * d / self.grid.h
        return out

    def banded(self, shift: float, scale: float = 1.0) -> np.ndarray:
        """Band storage of ``shift I - scale L`` for scipy.linalg.solve_banded."""
        ab = np.zeros((3, self.grid.size))
        ab[0, 1:] = -scale * self.upper
        ab[1] = shift - scale * self.diag
        ab[2, :-1] = -scale * self.lower
        return ab

    def solve_shifted(self, lam: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(lam I - L) f = rhs``."""
        if not lam > -self.params.b:
            raise SingularSystem(f"lambda={lam} is not above the spectral cut -b={-self.params.b}")
        f = scipy.linalg.solve_banded((1, 1), self.banded(lam), rhs, check_finite=False)
        if not np.all(np.isfinite(f)):
            raise SingularSystem("banded solve produced non-finite values")
        return f


def build_heat_operator(p: ComponentParams, g: Grid) -> DiscreteHeatOperator:
    if g.n < MIN_INTERIOR_NODES:
        raise GridTooCoarse(f"need at least {MIN_INTERIOR_NODES} interior nodes, got {g.n}")
    k = p.a / g.h**2
    size = g.size
    diag = np.full(size, -2.0 * k - p.b)
    lower = np.full(size - 1, k)
    upper = np.full(size - 1, k)
    # ghost nodes: f[-1] = f[1] at x=0; f[N+1] = f[N-1] + 2 h d / a at x=1
    upper[0] = 2.0 * k
    lower[-1] = 2.0 * k
    return DiscreteHeatOperator(p, g, lower, diag, upper)


def _mu(p: ComponentParams, lam: float) -> float:
    if not lam > -p.b:
        raise LambdaBelowSpectralCut(f"lambda={lam} must exceed -b={-p.b}")
    return math.sqrt((p.b + lam) / p.a)


def resolvent_solve_closed_form(p: ComponentParams, g: HeatProfile) -> HeatProfile:
    """Solve ``b f - a f'' = g`` with ``f'(0) = f'(1) = 0`` by quadrature.

    Uses the variation-of-constants representation

        f(x) = K cosh(mu x) - (1/mu) int_0^x sinh(mu (x - y)) g(y)/a dy,
        K    = (1/(mu sinh mu)) int_0^1 cosh(mu (1 - y)) g(y)/a dy,

    with ``mu = sqrt(b/a)``; the constant K enforces ``f'(1) = 0`` while the
    particular part already has zero slope at x = 0. Integrals use the
    composite trapezoid rule on the profile grid.
    """
    x = g.grid.nodes
    gv = np.asarray(g.values, dtype=float) / p.a
    if not np.all(np.isfinite(gv)):
        raise QuadratureFailure("source profile has non-finite values")
    mu = _mu(p, 0.0)
    # sinh(mu (x - y)) = (e^{mu x} e^{-mu y} - e^{-mu x} e^{mu y}) / 2, split so
    # every partial integral is a cumulative trapezoid over the same grid
    with np.errstate(over="raise", invalid="raise"):
        try:
            ep, em = np.exp(mu * x), np.exp(-mu * x)
            i_minus = cumulative_trapezoid(em * gv, x, initial=0.0)
            i_plus = cumulative_trapezoid(ep * gv, x, initial=0.0)
            partial = 0.5 * (ep * i_minus - em * i_plus) / mu
            coef = trapezoid(np.cosh(mu * (1.0 - x)) * gv, x) / (mu * math.sinh(mu))
        except FloatingPointError as exc:
            raise QuadratureFailure(f"integrand overflow (mu={mu:.3g})") from exc
    f = coef * np.cosh(mu * x) - partial
    if not np.all(np.isfinite(f)):
        raise QuadratureFailure("quadrature produced non-finite values")
    return HeatProfile(g.grid, f)


def dirichlet_closed_form(p: ComponentParams, lam: float, d: float, g: Grid) -> HeatProfile:
    """``d cosh(mu x) / (a mu sinh mu)`` with ``mu = sqrt((b + lam)/a)``."""
    mu = _mu(p, lam)
    x = g.nodes
    if d == 0:
        return HeatProfile(g, np.zeros(g.size))
    if mu > 300:
        # cosh(mu x)/sinh(mu) without overflow
        vals = (np.exp(mu * (x - 1.0)) + np.exp(-mu * (x + 1.0))) / (1.0 - math.exp(-2 * mu))
    else:
        vals = np.cosh(mu * x) / math.sinh(mu)
    return HeatProfile(g, d * vals / (p.a * mu))


def dirichlet_numeric(p: ComponentParams, lam: float, d: float, g: Grid) -> HeatProfile:
    """Discrete solution of ``(lam - L) f = 0`` with ``f'(0)=0`` and ``a f'(1) = d``."""
    if not lam > -p.b:
        raise LambdaBelowSpectralCut(f"lambda={lam} must exceed -b={-p.b}")
    op = build_heat_operator(p, g)
    if d == 0:
        return HeatProfile(g, np.zeros(g.size))
    return HeatProfile(g, op.solve_shifted(lam, op.injection * d))


def transfer_gamma_dlambda(params: SystemParams, lam: float) -> np.ndarray:
    """Closed-form ``Gamma D_lam`` acting on (d, v) in R^3 x R^3.

    Upper-right block carries the delay lines ``diag(exp(-lam r_j))``, the
    lower-left block the heat gains ``diag(c_j / (a_j mu_j sinh mu_j))``.
    """
    validate_params(params)
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam!r}")
    k = len(params.components)
    out = np.zeros((2 * k, 2 * k))
    out[:k, k:] = np.diag([math.exp(-lam * p.r) for p in params.components])
    out[k:, :k] = np.diag([boundary_gain(p, lam) for p in params.components])
    return out


def transfer_gamma_dlambda_numeric(params: SystemParams, lam: float, n: int = 1000) -> np.ndarray:
    """``Gamma D_lam`` rebuilt from boundary-value solves on a grid of n nodes.

    Heat columns come from :func:`dirichlet_numeric`; the delay columns solve
    ``(lam - d/dtheta) phi = 0, phi(0) = 1`` with the trapezoid rule on n cells
    and read ``phi(-r)``.
    """
    validate_params(params)
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam!r}")
    g = Grid(n)
    k = len(params.components)
    out = np.zeros((2 * k, 2 * k))
    for j, p in enumerate(params.components):
        out[k + j, j] = p.c * dirichlet_numeric(p, lam, 1.0, g).values[0]
        cells = max(n, math.ceil(lam * p.r))
        step = lam * p.r / cells
        out[j, k + j] = ((1.0 - 0.5 * step) / (1.0 + 0.5 * step)) ** cells
    return out


def max_row_sum(mat: np.ndarray) -> float:
    return float(np.abs(mat).sum(axis=1).max())
