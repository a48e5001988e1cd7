"""Time stepping of the three delayed heat components.

Diffusion and reaction are advanced with implicit Euler; the delayed boundary
flux ``c z(t - r, 0) + w(t)`` is frozen at the start of each step. The
implicit matrix ``I - dt L`` is an M-matrix, so nonnegative data stay
nonnegative for any step size.

The core engine works on arrays with a trailing batch axis so that many
independent trajectories (same parameters and grid) advance together; the
public :class:`SystemState` is the batch-of-one view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import HistoryLengthMismatch, SolverFailure, StepTooLarge
from .heat_kernel import Grid, HeatProfile, build_heat_operator
from .system_model import N_COMPONENTS, SystemParams, Topology, validate_params

CSV_HEADER = ("t", "norm_X", "norm_XY", "z1_0", "z2_0", "z3_0", "w1", "w2", "w3")


# -- history buffers ---------------------------------------------------------

def buffer_capacity(r: float, dt: float) -> int:
    return math.ceil(r / dt - 1e-9) + 1


class HistoryBuffer:
    """Ring of boundary samples ``z(t - k dt, 0)``, k = 0 .. capacity-1.

    Sample k sits at theta = -k dt; the newest (theta = 0) is at ``head``.
    Samples may carry a trailing batch axis.
    """

    def __init__(self, delay: float, dt: float, samples: np.ndarray):
        self.delay = float(delay)
        self.dt = float(dt)
        cap = buffer_capacity(delay, dt)
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] != cap:
            raise HistoryLengthMismatch(f"buffer needs {cap} samples, got {samples.shape[0]}")
        # stored oldest-last: ring[(head + k) % cap] is theta = -k dt
        self._ring = samples.copy()
        self._head = 0
        s = self.delay / self.dt
        k0 = min(int(math.floor(s + 1e-12)), cap - 1)
        self._k0 = k0
        self._frac = 0.0 if k0 == cap - 1 else max(s - k0, 0.0)

    @property
    def capacity(self) -> int:
        return self._ring.shape[0]

    def copy(self) -> "HistoryBuffer":
        new = HistoryBuffer.__new__(HistoryBuffer)
        new.__dict__.update(self.__dict__)
        new._ring = self._ring.copy()
        return new

    def ordered(self) -> np.ndarray:
        """Samples newest first (theta = 0, -dt, -2 dt, ...)."""
        idx = (self._head + np.arange(self.capacity)) % self.capacity
        return self._ring[idx]

    def thetas(self) -> np.ndarray:
        return -self.dt * np.arange(self.capacity)

    @property
    def newest(self) -> np.ndarray:
        return self._ring[self._head]

    def retarded(self):
        """Linear interpolation of the buffer at theta = -delay."""
        cap = self.capacity
        lo = self._ring[(self._head + self._k0) % cap]
        if self._frac == 0.0:
            return lo.copy() if isinstance(lo, np.ndarray) else lo
        hi = self._ring[(self._head + self._k0 + 1) % cap]
        return (1.0 - self._frac) * lo + self._frac * hi

    def push(self, value) -> None:
        self._head = (self._head - 1) % self.capacity
        self._ring[self._head] = value

    def l1_norm(self):
        """Integral of |linear interpolant| over [-delay, 0] (trapezoid)."""
        vals = np.abs(self.ordered())
        k0 = self._k0
        full = self.dt * (0.5 * vals[0] + vals[1:k0].sum(axis=0) + 0.5 * vals[k0]) if k0 > 0 else 0.0 * vals[0]
        if self._frac > 0.0:
            tail = abs(self.retarded())
            full = full + 0.5 * self._frac * self.dt * (vals[k0] + tail)
        return full


# -- disturbances ------------------------------------------------------------

@dataclass(frozen=True)
class DisturbanceSignal:
    """Boundary disturbance w(t) in R^3.

    ``kind`` is one of ``zero``, ``constant``, ``piecewise`` (values[i] holds
    on [breakpoints[i], breakpoints[i+1]), the last value forever after) or
    ``table`` (an arbitrary callable ``t -> (3,)`` with a declared sup bound).
    """

    kind: str = "zero"
    values: np.ndarray | None = None
    breakpoints: np.ndarray | None = None
    fn: Callable[[float], np.ndarray] | None = None
    sup_bound: float = 0.0

    @classmethod
    def zero(cls):
        return cls("zero", sup_bound=0.0)

    @classmethod
    def constant(cls, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), (N_COMPONENTS,)).copy()
        return cls("constant", values=w, sup_bound=float(np.abs(w).max()))

    @classmethod
    def piecewise(cls, breakpoints, values):
        bp = np.asarray(breakpoints, dtype=float)
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = np.repeat(vals[:, None], N_COMPONENTS, axis=1)
        if bp.ndim != 1 or vals.shape != (bp.size, N_COMPONENTS):
            raise ValueError("piecewise disturbance needs one row of 3 values per breakpoint")
        if bp.size == 0 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        return cls("piecewise", values=vals, breakpoints=bp, sup_bound=float(np.abs(vals).max()))

    @classmethod
    def table(cls, fn, sup_bound):
        if not math.isfinite(sup_bound):
            raise ValueError("table disturbance needs a finite sup bound")
        return cls("table", fn=fn, sup_bound=float(sup_bound))

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(N_COMPONENTS)
        if self.kind == "constant":
            return self.values.copy()
        if self.kind == "piecewise":
            i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
            return self.values[max(i, 0)].copy()
        if self.kind == "table":
            return np.asarray(self.fn(t), dtype=float).reshape(N_COMPONENTS)
        raise ValueError(f"unknown disturbance kind {self.kind!r}")


# -- state -------------------------------------------------------------------

@dataclass
class SystemState:
    params: SystemParams
    grid: Grid
    dt: float
    step_index: int
    profiles: list[np.ndarray]
    buffers: list[HistoryBuffer]
    initial_jump: float = 0.0  # max_j |phi_j(0) - f_j(0)| at t = 0

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    def copy(self) -> "SystemState":
        return SystemState(
            self.params, self.grid, self.dt, self.step_index,
            [p.copy() for p in self.profiles], [b.copy() for b in self.buffers],
            self.initial_jump,
        )

    def heat_profiles(self) -> list[HeatProfile]:
        return [HeatProfile(self.grid, p) for p in self.profiles]

    def norm_x(self):
        w = self.grid.weights
        return sum(w @ np.abs(p) for p in self.profiles)

    def norm_xy(self):
        return self.norm_x() + sum(b.l1_norm() for b in self.buffers)

    def boundary_values(self) -> np.ndarray:
        return np.array([p[0] for p in self.profiles])


def _as_profile_values(f, grid: Grid) -> np.ndarray:
    if isinstance(f, HeatProfile):
        return f.values.copy()
    if callable(f):
        return HeatProfile.from_function(grid, f).values
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    if arr.shape[0] != grid.size:
        raise ValueError(f"initial profile needs {grid.size} values, got {arr.shape[0]}")
    return arr.copy()


def _sample_history(phi, r: float, dt: float) -> tuple[np.ndarray, float]:
    """Sample phi on theta = 0, -dt, ... (clamped to [-r, 0]); returns (samples, phi(0))."""
    cap = buffer_capacity(r, dt)
    thetas = np.maximum(-dt * np.arange(cap), -r)
    if callable(phi):
        vals = np.asarray([phi(th) for th in thetas], dtype=float)
    else:
        arr = np.asarray(phi, dtype=float)
        if arr.ndim == 0:
            vals = np.full(cap, float(arr))
        else:
            if arr.ndim != 1 or arr.size < 2:
                raise HistoryLengthMismatch("sampled history needs at least two values on [-r, 0]")
            knots = np.linspace(-r, 0.0, arr.size)
            vals = np.interp(thetas, knots, arr)
    return vals, float(vals[0])


def init_state(params: SystemParams, f: Sequence, phi: Sequence, dt: float, n: int = 64) -> SystemState:
    """Build the state at t = 0 from heat profiles f and histories phi.

    Each f_j may be a :class:`HeatProfile`, an array of node values, a callable
    of x or a scalar; each phi_j a callable of theta, a scalar, or samples on a
    uniform grid over [-r_j, 0] (first entry at -r_j). n is only used when no
    f_j fixes the grid.
    """
    validate_params(params)
    if len(f) != N_COMPONENTS or len(phi) != N_COMPONENTS:
        raise HistoryLengthMismatch(f"need {N_COMPONENTS} profiles and histories, got {len(f)} and {len(phi)}")
    rmin = min(p.r for p in params.components)
    if not dt > 0:
        raise StepTooLarge(f"dt must be positive, got {dt!r}")
    if dt > rmin / 4 * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt} exceeds min_j r_j / 4 = {rmin / 4}")
    grids = [fj.grid for fj in f if isinstance(fj, HeatProfile)]
    grid = grids[0] if grids else Grid(n)
    profiles = [_as_profile_values(fj, grid) for fj in f]
    buffers, jump = [], 0.0
    for j, (p, ph) in enumerate(zip(params.components, phi)):
        samples, head = _sample_history(ph, p.r, dt)
        buffers.append(HistoryBuffer(p.r, dt, samples))
        jump = max(jump, abs(head - profiles[j][0]))
    return SystemState(params, grid, float(dt), 0, profiles, buffers, jump)


# -- stepping ----------------------------------------------------------------

class Stepper:
    """Implicit-Euler integrator bound to (params, grid, dt); mutates states in place."""

    def __init__(self, params: SystemParams, grid: Grid, dt: float):
        validate_params(params)
        self.params = params
        self.grid = grid
        self.dt = float(dt)
        self._bands = []
        for p in params.components:
            op = build_heat_operator(p, grid)
            self._bands.append(op.banded(1.0, self.dt))
        self._c = params.array("c")
        self._inj = 2.0 * self.dt / grid.h
        self._chain = Topology(params.topology) is Topology.CHAIN

    def advance(self, profiles, buffers, w) -> None:
        """One step from t to t + dt; w is the disturbance at t ((3,) or (3, batch))."""
        delayed = [b.retarded() for b in buffers]
        new = []
        for j in range(N_COMPONENTS):
            rhs = profiles[j].copy()
            rhs[-1] = rhs[-1] + self._inj * (self._c[j] * delayed[j] + w[j])
            z = scipy.linalg.solve_banded((1, 1), self._bands[j], rhs, check_finite=False)
            new.append(z)
        if not all(np.all(np.isfinite(z)) for z in new):
            raise SolverFailure("non-finite values after implicit solve")
        for j in range(N_COMPONENTS):
            profiles[j] = new[j]
            if self._chain:
                src = new[j - 1][0] if j > 0 else 0.0 * new[j][0]
            else:
                src = new[j][0]
            buffers[j].push(src)


def step(state: SystemState, params: SystemParams, dist: DisturbanceSignal, dt: float) -> SystemState:
    if not math.isclose(dt, state.dt, rel_tol=0, abs_tol=1e-15):
        raise StepTooLarge(f"state was built for dt={state.dt}, got dt={dt}")
    new = state.copy()
    Stepper(params, state.grid, dt).advance(new.profiles, new.buffers, dist(state.t))
    new.step_index += 1
    return new


@dataclass
class SimulationTrace:
    times: np.ndarray
    norm_x: np.ndarray
    norm_xy: np.ndarray
    boundary: np.ndarray  # (samples, 3): z_j(t, 0)
    disturbance: np.ndarray  # (samples, 3): w_j(t)
    params: SystemParams
    profiles: list[np.ndarray] = field(default_factory=list)  # (3, n+2) per sample when kept
    final_state: SystemState | None = None

    def rows(self):
        for i in range(self.times.size):
            yield (self.times[i], self.norm_x[i], self.norm_xy[i], *self.boundary[i], *self.disturbance[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            for row in self.rows():
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _record(state: SystemState, w: np.ndarray, out: dict, keep_profiles: bool) -> None:
    out["t"].append(state.t)
    nx = state.norm_x()
    out["nx"].append(nx)
    out["nxy"].append(nx + sum(b.l1_norm() for b in state.buffers))
    out["z0"].append(state.boundary_values())
    out["w"].append(np.asarray(w, dtype=float))
    if keep_profiles:
        out["prof"].append(np.array(state.profiles))


def simulate(params, f, phi, dist, horizon, dt, sample_every=1, *, n=64, keep_profiles=False, state=None):
    """Integrate to ``horizon`` and sample every ``sample_every`` steps.

    Passing ``state`` continues an earlier run (f and phi are then ignored);
    ``horizon`` is measured from the state's current time. The last step
    is always sampled.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    if int(sample_every) != sample_every or sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    if state is None:
        state = init_state(params, f, phi, dt, n=n)
    else:
        state = state.copy()
    stepper = Stepper(params, state.grid, dt)
    nsteps = math.ceil(horizon / dt - 1e-9)
    out = {"t": [], "nx": [], "nxy": [], "z0": [], "w": [], "prof": []}
    _record(state, dist(state.t), out, keep_profiles)
    for k in range(1, nsteps + 1):
        w = dist(state.t)
        stepper.advance(state.profiles, state.buffers, w)
        state.step_index += 1
        if k % sample_every == 0 or k == nsteps:
            _record(state, dist(state.t), out, keep_profiles)
    return SimulationTrace(
        times=np.array(out["t"]),
        norm_x=np.array(out["nx"]),
        norm_xy=np.array(out["nxy"]),
        boundary=np.array(out["z0"]),
        disturbance=np.array(out["w"]),
        params=params,
        profiles=out["prof"],
        final_state=state,
    )


# -- continuous dependence ---------------------------------------------------

@dataclass(frozen=True)
class ContinuousDependenceReport:
    tau: float
    dt: float
    c_tau: float
    c_tau_refined: float
    relative_change: float
    stable: bool
    sample_count: int
    max_initial_jump: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _random_scenarios(params: SystemParams, grid: Grid, count: int, rng, tau: float):
    """Random (f, phi, u) with ||(f, phi)|| weight alpha and sup|u| weight 1-alpha.

    The first scenario is the uniform profile with no history or input, which
    pins the lower bound exp(-b tau) in the decoupled case.
    """
    x = grid.nodes
    scen = [dict(
        f=[np.full(grid.size, 1.0 / N_COMPONENTS)] * N_COMPONENTS,
        phi=[np.zeros(2)] * N_COMPONENTS,
        bp=np.array([0.0]), u=np.zeros((1, N_COMPONENTS)), alpha=1.0,
    )]
    bp = np.arange(0.0, tau, tau / 8)
    for _ in range(count - 1):
        f = []
        for _j in range(N_COMPONENTS):
            coef = rng.normal(size=4)
            f.append(coef[0] + sum(coef[k] * np.cos(k * np.pi * x) for k in range(1, 4)))
        phi = [rng.normal(size=5) for _ in range(N_COMPONENTS)]
        u = rng.normal(size=(bp.size, N_COMPONENTS))
        scen.append(dict(f=f, phi=phi, bp=bp, u=u, alpha=float(rng.uniform(0.0, 1.0))))
    return scen


def _cd_ratio(params: SystemParams, grid: Grid, scen: list[dict], tau: float, dt: float) -> tuple[float, float]:
    """max ||zeta(tau)|| / (||zeta(0)|| + ||u||_inf) over scenarios at step dt."""
    batch = len(scen)
    states = [init_state(params, s["f"], s["phi"], dt, n=grid.n) for s in scen]
    jump = max(st.initial_jump for st in states)
    init_norm = np.array([st.norm_xy() for st in states])
    sup_u = np.array([float(np.abs(s["u"]).max()) for s in scen])
    alpha = np.array([s["alpha"] for s in scen])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale_x = np.where(init_norm > 0, alpha / init_norm, 0.0)
        scale_u = np.where(sup_u > 0, (1.0 - alpha) / sup_u, 0.0)
    # batched profiles (size, batch) and buffers (cap, batch)
    profiles = [np.stack([st.profiles[j] for st in states], axis=1) * scale_x for j in range(N_COMPONENTS)]
    buffers = [HistoryBuffer(params.components[j].r, dt,
                             np.stack([st.buffers[j].ordered() for st in states], axis=1) * scale_x)
               for j in range(N_COMPONENTS)]
    bps = [s["bp"] for s in scen]
    us = [s["u"] * su for s, su in zip(scen, scale_u)]
    stepper = Stepper(params, grid, dt)
    nsteps = math.ceil(tau / dt - 1e-9)
    for k in range(nsteps):
        t = k * dt
        w = np.empty((N_COMPONENTS, batch))
        for i in range(batch):
            idx = max(int(np.searchsorted(bps[i], t + 1e-12, side="right")) - 1, 0)
            w[:, i] = us[i][idx]
        stepper.advance(profiles, buffers, w)
    wts = grid.weights
    final = sum(wts @ np.abs(p) for p in profiles) + sum(b.l1_norm() for b in buffers)
    denom = np.array([scale_x[i] * init_norm[i] + scale_u[i] * sup_u[i] for i in range(batch)])
    keep = denom > 0
    return float(np.max(final[keep] / denom[keep])), jump


def check_continuous_dependence(params: SystemParams, sample_count: int = 200, *, tau: float = 1.0,
                                dt: float = 0.01, n: int = 32, seed: int = 0,
                                tolerance: float = 0.05) -> ContinuousDependenceReport:
    """Empirical constant in ||zeta(tau)|| <= c_tau (||zeta(0)|| + ||u||_inf).

    Evaluated at dt and dt/2 on identical scenarios; ``stable`` is set when the
    two estimates agree within ``tolerance`` (relative).
    """
    validate_params(params)
    grid = Grid(n)
    rng = np.random.default_rng(seed)
    scen = _random_scenarios(params, grid, sample_count, rng, tau)
    c1, jump = _cd_ratio(params, grid, scen, tau, dt)
    c2, _ = _cd_ratio(params, grid, scen, tau, dt / 2)
    rel = abs(c1 - c2) / max(abs(c2), 1e-300)
    stable = bool(math.isfinite(c1) and math.isfinite(c2) and rel <= tolerance)
    return ContinuousDependenceReport(tau, dt, c1, c2, rel, stable, sample_count, jump)
