"""Finite-dimensional positive systems ``x' = A x + B v, y = C x``.

Inputs are piecewise constant on a lattice of width dt (zero-order hold), so
the input map, the input/output map and their norms are exact for that input
class. The closed loop ``A + B C`` is reached by Picard iteration on the
variation-of-constants Volterra equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

from .errors import ContractionFailure, MaxIterExceeded, ResolventSingular


def _dense(mat) -> np.ndarray:
    if hasattr(mat, "toarray"):
        mat = mat.toarray()
    return np.atleast_2d(np.asarray(mat, dtype=float))


def is_metzler(A: np.ndarray, atol: float = 0.0) -> bool:
    off = A - np.diag(np.diag(A))
    return bool(np.all(off >= -atol))


@dataclass(frozen=True)
class LtiTriple:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    a_metzler: bool = field(init=False)
    b_nonneg: bool = field(init=False)
    c_nonneg: bool = field(init=False)

    def __post_init__(self):
        A, B, C = _dense(self.A), _dense(self.B), _dense(self.C)
        if B.shape[0] != A.shape[0] and B.shape[1] == A.shape[0] and B.shape[0] == 1:
            B = B.T
        nx = A.shape[0]
        if A.shape != (nx, nx) or B.shape[0] != nx or C.shape[1] != nx:
            raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "a_metzler", is_metzler(A))
        object.__setattr__(self, "b_nonneg", bool(np.all(B >= 0)))
        object.__setattr__(self, "c_nonneg", bool(np.all(C >= 0)))

    @property
    def positive(self) -> bool:
        return self.a_metzler and self.b_nonneg and self.c_nonneg

    @property
    def n_state(self) -> int:
        return self.A.shape[0]

    @property
    def n_in(self) -> int:
        return self.B.shape[1]

    @property
    def n_out(self) -> int:
        return self.C.shape[0]

    def closed_loop_matrix(self) -> np.ndarray:
        if self.n_out != self.n_in:
            raise ValueError("feedback needs as many outputs as inputs")
        return self.A + self.B @ self.C


def _zoh(triple: LtiTriple, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(e^{A dt}, int_0^dt e^{A s} ds B) from one augmented exponential."""
    nx, nu = triple.n_state, triple.n_in
    aug = np.zeros((nx + nu, nx + nu))
    aug[:nx, :nx] = triple.A * dt
    aug[:nx, nx:] = triple.B * dt
    E = scipy.linalg.expm(aug)
    return E[:nx, :nx], E[:nx, nx:]


def _input_samples(v, steps: int, dt: float, n_in: int) -> np.ndarray:
    """Input as (steps, n_in) held values on [k dt, (k+1) dt)."""
    if callable(v):
        return np.array([np.broadcast_to(np.asarray(v(k * dt), dtype=float), (n_in,)) for k in range(steps)])
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full((steps, n_in), float(arr))
    if arr.ndim == 1:
        arr = arr[:, None] if n_in == 1 or arr.size == steps else np.tile(arr, (steps, 1))
    if arr.shape != (steps, n_in):
        raise ValueError(f"input needs shape ({steps}, {n_in}), got {arr.shape}")
    return arr


def _steps(t: float, dt: float) -> int:
    if not t > 0:
        raise ValueError(f"horizon must be positive, got {t!r}")
    k = round(t / dt)
    if k < 1 or abs(k * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"dt={dt} must divide the horizon {t}")
    return k


def input_map_phi(triple: LtiTriple, v, t: float, dt: float) -> np.ndarray:
    """``int_0^t e^{A (t-s)} B v(s) ds`` for v held constant on each dt cell."""
    k = _steps(t, dt)
    E, G = _zoh(triple, dt)
    vs = _input_samples(v, k, dt, triple.n_in)
    x = np.zeros(triple.n_state)
    for i in range(k):
        x = E @ x + G @ vs[i]
    return x


def io_map(triple: LtiTriple, v, tau: float, dt: float) -> np.ndarray:
    """Output samples ``y_k = C Phi_{k dt} v``, k = 0..K, as an array (K+1, n_out)."""
    k = _steps(tau, dt)
    E, G = _zoh(triple, dt)
    vs = _input_samples(v, k, dt, triple.n_in)
    x = np.zeros(triple.n_state)
    out = np.zeros((k + 1, triple.n_out))
    for i in range(k):
        x = E @ x + G @ vs[i]
        out[i + 1] = triple.C @ x
    return out


def impulse_blocks(triple: LtiTriple, steps: int, dt: float) -> np.ndarray:
    """Markov blocks h_i = C E^i G (i = 0..steps-1); y_k = sum_{i<k} h_{k-1-i} v_i."""
    E, G = _zoh(triple, dt)
    blocks = np.empty((steps, triple.n_out, triple.n_in))
    X = G.copy()
    for i in range(steps):
        blocks[i] = triple.C @ X
        X = E @ X
    return blocks


def io_matrix(triple: LtiTriple, tau: float, dt: float) -> np.ndarray:
    """Block lower-triangular Toeplitz matrix of the lattice input/output map.

    Rows are (y_1, ..., y_K), columns (v_0, ..., v_{K-1}).
    """
    k = _steps(tau, dt)
    h = impulse_blocks(triple, k, dt)
    p, q = triple.n_out, triple.n_in
    T = np.zeros((k * p, k * q))
    for row in range(k):
        for col in range(row + 1):
            T[row * p:(row + 1) * p, col * q:(col + 1) * q] = h[row - col]
    return T


@dataclass(frozen=True)
class IoMapEstimate:
    p: float
    tau: float
    eta: float
    method: str
    dt: float = 0.0
    iterations: int = 0


def _signal_norm(vec: np.ndarray, p: float, dim: int) -> float:
    blocks = vec.reshape(-1, dim)
    if p == 1:
        return float(np.abs(blocks).sum())
    return float(np.sqrt((blocks**2).sum()))


def io_norm_estimate(triple: LtiTriple, p: float, tau: float, trials: int = 32, *, dt: float | None = None,
                     seed: int = 0, max_iter: int = 5000, rtol: float = 1e-12) -> IoMapEstimate:
    """Operator norm of the input/output map on L^p(0, tau), p in {1, 2}.

    Signals are vector valued with the l^1 norm (p = 1) or l^2 norm (p = 2)
    pointwise. p = 1 uses the exact induced norm of the positive lattice
    kernel (largest column sum); p = 2 runs power iteration on T^T T started
    from the best of ``trials`` random nonnegative probes.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if dt is None:
        dt = tau / 64
    T = io_matrix(triple, tau, dt)
    q = triple.n_in
    rng = np.random.default_rng(seed)
    probes = rng.uniform(0.0, 1.0, size=(T.shape[1], max(int(trials), 1)))
    best_probe = 0.0
    best_vec = probes[:, 0]
    for i in range(probes.shape[1]):
        v = probes[:, i]
        ratio = _signal_norm(T @ v, p, triple.n_out) / _signal_norm(v, p, q)
        if ratio > best_probe:
            best_probe, best_vec = ratio, v
    if not np.any(T):
        return IoMapEstimate(p, tau, 0.0, "zero kernel", dt, 0)
    if p == 1:
        col = np.abs(T).reshape(T.shape[0] // triple.n_out, triple.n_out, T.shape[1]).sum(axis=(0, 1))
        eta = float(max(col.max(), best_probe))
        return IoMapEstimate(p, tau, eta, "column sum", dt, 0)
    # power iteration on T^T T; Rayleigh quotients increase monotonically
    TtT = T.T @ T
    v = best_vec / np.linalg.norm(best_vec) + 1.0 / math.sqrt(T.shape[1])
    v /= np.linalg.norm(v)
    sigma2 = float(v @ TtT @ v)
    it = 0
    for it in range(1, max_iter + 1):
        w = TtT @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
        new = float(v @ TtT @ v)
        if abs(new - sigma2) <= rtol * max(new, 1e-300):
            sigma2 = new
            break
        sigma2 = max(sigma2, new)
    eta = max(math.sqrt(max(sigma2, 0.0)), best_probe)
    return IoMapEstimate(p, tau, eta, "power iteration", dt, it)


def yosida_output(triple: LtiTriple, n: float, x: np.ndarray) -> np.ndarray:
    """``C n (n I - A)^{-1} x``."""
    A = triple.A
    x = np.asarray(x, dtype=float)
    ev = np.linalg.eigvals(A)
    if n <= ev.real.max():
        raise ResolventSingular(f"n={n} does not exceed the spectral abscissa {ev.real.max():.6g}")
    try:
        y = np.linalg.solve(n * np.eye(A.shape[0]) - A, x)
    except np.linalg.LinAlgError as exc:
        raise ResolventSingular(str(exc)) from exc
    return n * (triple.C @ y)


# -- closed loop via Volterra / Picard ---------------------------------------

def _cheb_nodes(t: float, count: int) -> np.ndarray:
    k = np.arange(count)
    return 0.5 * t * (1.0 - np.cos(np.pi * k / (count - 1)))


def _bary_weights(count: int) -> np.ndarray:
    w = (-1.0) ** np.arange(count)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _interp_matrix(nodes: np.ndarray, bw: np.ndarray, pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15 * max(1.0, nodes[-1]))
    diff[exact] = 1.0
    M = bw[None, :] / diff
    M /= M.sum(axis=1, keepdims=True)
    rows = np.flatnonzero(exact.any(axis=1))
    for r in rows:
        M[r] = exact[r].astype(float)
    return M


@dataclass
class ClosedLoopResult:
    state: np.ndarray
    iterations: int
    contraction_radius: float
    iterates: list[np.ndarray]  # full node trajectories, one per sweep


class _VolterraOperator:
    """Nystrom discretization of (K x)(t_i) = int_0^{t_i} e^{A (t_i - s)} B C x(s) ds.

    Trajectories live on Chebyshev nodes of [0, t]; each integral uses
    Gauss-Legendre points on [0, t_i] with barycentric interpolation.
    """

    def __init__(self, triple: LtiTriple, t: float, nodes: int = 33, quad: int = 32):
        A, B, C = triple.A, triple.B, triple.C
        nx, nu = triple.n_state, triple.n_in
        self.t_nodes = _cheb_nodes(t, nodes)
        bw = _bary_weights(nodes)
        gx, gw = leggauss(quad)
        self.free = np.array([scipy.linalg.expm(A * ti) for ti in self.t_nodes])  # T(t_i)
        # Kb maps node values of the input B-side signal (nodes*nu) to node states
        Kb = np.zeros((nodes * nx, nodes * nu))
        for i, ti in enumerate(self.t_nodes):
            if ti == 0:
                continue
            s = 0.5 * ti * (gx + 1.0)
            w = 0.5 * ti * gw
            L = _interp_matrix(self.t_nodes, bw, s)  # (quad, nodes)
            for qi in range(quad):
                ker = w[qi] * scipy.linalg.expm(A * (ti - s[qi])) @ B  # (nx, nu)
                Kb[i * nx:(i + 1) * nx] += np.kron(L[qi][None, :], ker)
        self.Kb = Kb
        self.Cb = np.kron(np.eye(nodes), C)  # (nodes*ny, nodes*nx)
        self.nx = nx

    def output_operator(self) -> np.ndarray:
        """Discretized input/output map on [0, t] acting on node values of v."""
        return self.Cb @ self.Kb

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.Kb @ (self.Cb @ X)


def closed_loop_semigroup(triple: LtiTriple, t: float, x, tol: float = 1e-8, max_iter: int = 200,
                          *, nodes: int = 33, quad: int = 32, return_details: bool = False):
    """Evaluate ``T_cl(t) x`` from ``X = T(.)x + K X`` by fixed-point iteration.

    Stops when successive iterates differ by less than tol (sup norm over
    the time nodes). Raises ContractionFailure when the discretized
    input/output map has spectral radius >= 1.
    """
    if triple.n_out != triple.n_in:
        raise ValueError("feedback needs as many outputs as inputs")
    x = np.asarray(x, dtype=float).reshape(triple.n_state)
    op = _VolterraOperator(triple, t, nodes, quad)
    F = op.output_operator()
    radius = float(np.abs(np.linalg.eigvals(F)).max()) if F.size else 0.0
    if radius >= 1.0:
        raise ContractionFailure(f"spectral radius of the input/output map is {radius:.4g} >= 1")
    X0 = np.concatenate([Ti @ x for Ti in op.free])
    X = X0.copy()
    iterates = [X0.copy()] if return_details else []
    for it in range(1, max_iter + 1):
        Xn = X0 + op.apply(X)
        diff = float(np.abs(Xn - X).max())
        X = Xn
        if return_details:
            iterates.append(X.copy())
        if diff < tol:
            break
    else:
        raise MaxIterExceeded(f"no convergence to tol={tol} within {max_iter} iterations")
    state = X[-op.nx:]
    if return_details:
        return ClosedLoopResult(state, it, radius, iterates)
    return state
