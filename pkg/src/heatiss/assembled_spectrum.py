"""Matrix approximation of the coupled heat/delay generator and its spectrum.

State ordering: for each component j the n+2 heat nodes, then for each
component the m_j delay nodes theta_k = -k r_j/m_j (k = 1..m_j). Delay lines
use first-order upwind transport whose inflow at theta = 0 is the x = 0 heat
node of the source component; the x = 1 heat row receives the flux
``c_j * phi_j(-r_j)``. Every off-diagonal entry is nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .delay_sim import DisturbanceSignal, SimulationTrace, simulate
from .errors import (
    EigenSolverNoConvergence,
    GridTooCoarse,
    NonPositiveNorm,
    NormUnderflow,
    NoSignChange,
    UnstableSystem,
)
from .heat_kernel import Grid, build_heat_operator
from .system_model import (
    N_COMPONENTS,
    SystemParams,
    Topology,
    check_iss_condition,
    spectral_radius_gamma_d0,
    validate_params,
)

DENSE_LIMIT = 2000
THRESHOLD_BAND = 0.02


def _delay_nodes(m, count=N_COMPONENTS) -> tuple[int, ...]:
    ms = tuple(int(v) for v in np.broadcast_to(np.asarray(m), (count,)))
    if any(v < 8 for v in ms):
        raise GridTooCoarse(f"need at least 8 delay nodes per component, got {ms}")
    return ms


@dataclass(frozen=True)
class OpenLoopBlocks:
    """Uncoupled pieces: heat with zero flux, delay lines with zero inflow.

    ``A + B @ C`` is the coupled generator, with B injecting (flux d, inflow v)
    and C reading (c_j phi_j(-r_j), z_j(0)).
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix


@dataclass(frozen=True)
class AssembledGenerator:
    matrix: sp.csr_matrix
    params: SystemParams
    n: int
    m: tuple[int, ...]
    heat: tuple[slice, ...]
    delay: tuple[slice, ...]
    injection: sp.csr_matrix  # (dim, 3): disturbance w_j into each x = 1 row
    weights: np.ndarray = field(repr=False)  # L1 weights for the X x Y norm

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm_xy(self, zeta: np.ndarray) -> float:
        return float(self.weights @ np.abs(zeta)) + self._inflow_correction(zeta)

    def _inflow_correction(self, zeta):
        # theta = 0 end of each trapezoid carries the inflow (source heat node)
        total = 0.0
        for j, sl in enumerate(self.delay):
            src = _source(self.params, j)
            if src is None:
                continue
            dtheta = self.params.components[j].r / self.m[j]
            total += 0.5 * dtheta * abs(zeta[self.heat[src].start])
        return total


def _source(params: SystemParams, j: int):
    if Topology(params.topology) is Topology.CHAIN:
        return j - 1 if j > 0 else None
    return j


def _open_loop(params: SystemParams, n: int, ms: tuple[int, ...]):
    grid = Grid(n)
    size = grid.size
    k = N_COMPONENTS
    heat = tuple(slice(j * size, (j + 1) * size) for j in range(k))
    offs = k * size + np.concatenate([[0], np.cumsum(ms)])
    delay = tuple(slice(int(offs[j]), int(offs[j + 1])) for j in range(k))
    dim = int(offs[-1])

    blocks = [build_heat_operator(p, grid).matrix() for p in params.components]
    for j, p in enumerate(params.components):
        inv = ms[j] / p.r
        # upwind d/dtheta: phi_k' = (phi_{k-1} - phi_k)/dtheta, phi_0 is the inflow
        blocks.append(sp.diags([np.full(ms[j] - 1, inv), np.full(ms[j], -inv)], [-1, 0]))
    A = sp.block_diag(blocks, format="lil")

    # inputs: columns 0..2 heat flux d_j, 3..5 delay inflow v_j
    B = sp.lil_matrix((dim, 2 * k))
    # outputs: rows 0..2 c_j phi_j(-r_j), rows 3..5 z_j(0)
    C = sp.lil_matrix((2 * k, dim))
    for j, p in enumerate(params.components):
        B[heat[j].stop - 1, j] = 2.0 / grid.h
        B[delay[j].start, k + j] = ms[j] / p.r
        C[j, delay[j].stop - 1] = p.c
        C[k + j, heat[j].start] = 1.0

    weights = np.zeros(dim)
    for j in range(k):
        weights[heat[j]] = grid.weights
        dtheta = params.components[j].r / ms[j]
        w = np.full(ms[j], dtheta)
        w[-1] = 0.5 * dtheta
        weights[delay[j]] = w
    return grid, heat, delay, A.tocsr(), B.tocsr(), C.tocsr(), weights


def open_loop_blocks(params: SystemParams, n: int, m) -> OpenLoopBlocks:
    """The (A, B, C) triple whose feedback ``A + B C`` is the self-delay generator."""
    validate_params(params)
    if Topology(params.topology) is not Topology.SELF_DELAY:
        raise ValueError("the open-loop factorization is defined for the self-delay topology")
    _, _, _, A, B, C, _ = _open_loop(params, n, _delay_nodes(m))
    return OpenLoopBlocks(A, B, C)


def assemble_generator(params: SystemParams, n: int, m) -> AssembledGenerator:
    validate_params(params)
    ms = _delay_nodes(m)
    grid, heat, delay, A, B, C, weights = _open_loop(params, n, ms)
    k = N_COMPONENTS
    G = A.tolil()
    inj = sp.lil_matrix((A.shape[0], k))
    for j, p in enumerate(params.components):
        row = heat[j].stop - 1
        inj[row, j] = 2.0 / grid.h
        if p.c != 0:
            G[row, delay[j].stop - 1] += 2.0 * p.c / grid.h
        src = _source(params, j)
        if src is not None:
            G[delay[j].start, heat[src].start] += ms[j] / p.r
    return AssembledGenerator(G.tocsr(), params, n, ms, heat, delay, inj.tocsr(), weights)


# -- spectrum ----------------------------------------------------------------

def _dominant_dense(mat: np.ndarray) -> complex:
    ev = np.linalg.eigvals(mat)
    if not np.all(np.isfinite(ev)):
        raise EigenSolverNoConvergence("dense eigen-solve returned non-finite values")
    return complex(ev[np.argmax(ev.real)])


def _dominant_sparse(mat: sp.csr_matrix) -> complex:
    # For a Metzler matrix the rightmost eigenvalue s is real, and sigma > s
    # holds exactly when (sigma I - A) is a nonsingular M-matrix; a positive
    # solution of (sigma I - A) x = 1 certifies it. The eigenvalue nearest to
    # such a sigma is then s itself.
    size = mat.shape[0]
    eye = sp.identity(size, format="csc")
    sigma = 1.0
    for _ in range(200):
        lu = spla.splu((sigma * eye - mat).tocsc())
        x = lu.solve(np.ones(size))
        if np.all(np.isfinite(x)) and np.all(x > 0):
            break
        sigma = 2.0 * sigma + 1.0
    else:
        raise EigenSolverNoConvergence("could not bracket the spectral abscissa")
    try:
        vals = spla.eigs(mat.tocsc(), k=1, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-13)
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverNoConvergence(str(exc)) from exc
    return complex(vals[0])


def dominant_eigenvalue(gen: AssembledGenerator | sp.spmatrix | np.ndarray) -> complex:
    """Eigenvalue of largest real part.

    The matrix is split into strongly connected diagonal blocks first (its
    spectrum is the union of theirs); blocks up to DENSE_LIMIT use a dense
    solve, larger ones shift-invert Arnoldi.
    """
    mat = gen.matrix if isinstance(gen, AssembledGenerator) else gen
    mat = sp.csr_matrix(mat)
    ncomp, labels = connected_components(mat, directed=True, connection="strong")
    best = None
    for lab in range(ncomp):
        idx = np.flatnonzero(labels == lab)
        block = mat[idx][:, idx]
        if idx.size <= DENSE_LIMIT:
            ev = _dominant_dense(block.toarray())
        else:
            ev = _dominant_sparse(block)
        if best is None or ev.real > best.real:
            best = ev
    return best


def spectral_abscissa(gen) -> float:
    return dominant_eigenvalue(gen).real


@dataclass(frozen=True)
class StabilityReport:
    abscissa: float
    dominant_eig_re: float
    dominant_eig_im: float
    iss_closed_form: bool
    agree: bool
    n: int
    m: int
    spectral_radius_gamma_d0: float = 0.0
    in_band: bool = False

    def to_json_dict(self) -> dict:
        return {
            "abscissa": self.abscissa,
            "dominant_eig_re": self.dominant_eig_re,
            "dominant_eig_im": self.dominant_eig_im,
            "iss_closed_form": self.iss_closed_form,
            "agree": self.agree,
            "n": self.n,
            "m": self.m,
        }


def stability_report(params: SystemParams, n: int, m: int, band: float = THRESHOLD_BAND) -> StabilityReport:
    """Compare the discrete spectral abscissa with the closed-form ISS verdict.

    Inside the band |r(Gamma D_0)^2 - 1| <= band the comparison is not
    meaningful at finite resolution and ``agree`` is reported True.
    """
    gen = assemble_generator(params, n, m)
    ev = dominant_eigenvalue(gen)
    cert = check_iss_condition(params)
    rho = spectral_radius_gamma_d0(params)
    in_band = abs(rho**2 - 1.0) <= band
    agree = in_band or (ev.real < 0) == cert.iss_holds
    return StabilityReport(ev.real, ev.real, ev.imag, cert.iss_holds, bool(agree), n,
                           int(gen.m[0]), rho, bool(in_band))


def find_threshold_c(template: SystemParams, bracket=(1.0, 1.4), tol=1e-3, n=200, m=200) -> float:
    """Coupling c* (shared by all components) where the spectral abscissa crosses 0.

    Bisects on the sign of the abscissa until the bracket is no wider than
    tol, then returns the linear-interpolation root inside that bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])

    def s(c):
        return spectral_abscissa(assemble_generator(template.with_coupling(c), n, m))

    s_lo, s_hi = s(lo), s(hi)
    if s_lo == 0:
        return lo
    if s_hi == 0:
        return hi
    if (s_lo < 0) == (s_hi < 0):
        raise NoSignChange(f"abscissa has the same sign at c={lo} ({s_lo:.3g}) and c={hi} ({s_hi:.3g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s_mid = s(mid)
        if s_mid == 0:
            return mid
        if (s_mid < 0) == (s_lo < 0):
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    return lo + s_lo * (hi - lo) / (s_lo - s_hi)


# -- empirical rates ---------------------------------------------------------

def estimate_decay_rate(trace: SimulationTrace, tail_fraction: float = 0.5) -> float:
    """Negated least-squares slope of log ||zeta(t)|| over the trace tail.

    The window is the last ``tail_fraction`` of the time span, but never starts
    before the initial delay transient max_j r_j has passed.
    """
    t = np.asarray(trace.times)
    y = np.asarray(trace.norm_xy)
    t_end = t[-1]
    rmax = max(p.r for p in trace.params.components)
    start = max(t_end - tail_fraction * (t_end - t[0]), t[0] + rmax)
    sel = t >= start
    if sel.sum() < 2:
        sel = slice(-2, None)
    ty, yy = t[sel], y[sel]
    if np.any(yy <= 0):
        raise NonPositiveNorm("norm vanished on the fit window")
    if np.any(yy < 1e-300):
        raise NormUnderflow("norm below 1e-300 on the fit window")
    slope = np.polyfit(ty, np.log(yy), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class IssGainEstimate:
    gain: float
    per_level: dict
    spread: float  # max relative deviation between levels


def estimate_iss_gain(params: SystemParams, levels=(0.5, 1.0, 2.0), *, n=64, dt=0.01, horizon=30.0) -> IssGainEstimate:
    """limsup ||zeta(t)|| / s under w = s (1, 1, 1) from zero data, maximized over s."""
    if not check_iss_condition(params).iss_holds:
        raise UnstableSystem("ISS condition fails; the gain is not finite")
    per = {}
    for s in levels:
        if s == 0:
            continue
        tr = simulate(params, [0.0] * 3, [0.0] * 3, DisturbanceSignal.constant(s), horizon, dt, n=n)
        tail = tr.norm_xy[tr.times >= 0.5 * tr.times[-1]]
        per[float(s)] = float(tail.max()) / abs(s)
    vals = np.array(list(per.values()))
    spread = float((vals.max() - vals.min()) / vals.max()) if vals.size else 0.0
    return IssGainEstimate(float(vals.max()) if vals.size else 0.0, per, spread)


def steady_state_gain(params: SystemParams, n: int, m) -> float:
    """||zeta_inf|| for w = (1, 1, 1), solving -G zeta_inf = injection @ w."""
    gen = assemble_generator(params, n, m)
    rhs = gen.injection @ np.ones(N_COMPONENTS)
    zeta = spla.spsolve((-gen.matrix).tocsc(), rhs)
    return gen.norm_xy(zeta)
