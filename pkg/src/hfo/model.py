"""The sampled-data feedback-optimization hybrid system.

Parameter records, the hybrid state, the flow/jump maps, the quadratic
objective and its gradient, Euclidean projections onto the input set, and
validation of every standing assumption.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .hybrid import EVENT_TOL


@dataclass(frozen=True)
class State:
    """Full hybrid state: plant state, applied input, sampled output,
    optimizer iterate, and the two countdown timers."""

    x: np.ndarray
    u: np.ndarray
    y_s: np.ndarray
    z: np.ndarray
    tau_c: float
    tau_g: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.x, self.u, self.y_s, self.z, [self.tau_c], [self.tau_g]]
        )


def make_state(x, u, y_s, z, tau_c, tau_g) -> State:
    return State(
        np.atleast_1d(np.asarray(x, dtype=float)),
        np.atleast_1d(np.asarray(u, dtype=float)),
        np.atleast_1d(np.asarray(y_s, dtype=float)),
        np.atleast_1d(np.asarray(z, dtype=float)),
        float(tau_c),
        float(tau_g),
    )


@dataclass(frozen=True)
class Plant:
    a: np.ndarray  # n x n, must be Hurwitz
    b: np.ndarray  # n x m
    c_out: np.ndarray  # p x n
    d: np.ndarray  # constant output disturbance, R^p

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c_out.shape[0]


@dataclass(frozen=True)
class Objective:
    q_u: np.ndarray  # m x m, SPD
    q_y: np.ndarray  # p x p, SPD
    y_hat: np.ndarray  # desired output
    gamma: float  # gradient stepsize


@dataclass(frozen=True)
class Timers:
    tau_c_min: float
    tau_c_max: float
    tau_g_comp: float
    ell: int


class Box:
    """Axis-aligned box input set with componentwise clamp projection."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi componentwise")

    def project(self, v) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def random_point(self, rng) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


class Ball:
    """Euclidean ball input set with radial projection."""

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        offset = v - self.center
        dist = np.linalg.norm(offset)
        if dist <= self.radius:
            return v.copy()
        return self.center + offset * (self.radius / dist)

    def contains(self, v, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(np.asarray(v, dtype=float) - self.center)
                    <= self.radius + tol)

    def diameter(self) -> float:
        return 2.0 * self.radius

    def random_point(self, rng) -> np.ndarray:
        direction = rng.standard_normal(self.center.shape[0])
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            return self.center.copy()
        scale = self.radius * rng.uniform() ** (1.0 / self.center.shape[0])
        return self.center + direction * (scale / norm)


@dataclass(frozen=True)
class JumpPolicy:
    """Resolves the set-valued tau_c reset and the composite-jump order."""

    tau_c_reset: str = "min"  # "fixed" | "uniform" | "min" | "max"
    tau_c_value: float | None = None
    case3_order: str = "g1_first"  # "g1_first" | "g2_first" | "random"
    seed: int = 0


@dataclass(frozen=True)
class ModelParams:
    plant: Plant
    objective: Objective
    timers: Timers
    input_set: object  # Box or Ball
    h_override: np.ndarray | None = None
    rho_override: float | None = None
    sample_with: str = "new_input"  # "new_input" | "old_input"


def steady_state_gain(plant: Plant) -> np.ndarray:
    """Steady-state input-to-output gain H = -C A^{-1} B."""
    return -plant.c_out @ linalg.solve(plant.a, plant.b)


def effective_gain(params: ModelParams) -> np.ndarray:
    if params.h_override is not None:
        return np.asarray(params.h_override, dtype=float)
    return steady_state_gain(params.plant)


def phi(u, y_s, obj: Objective) -> float:
    """Quadratic objective 0.5 u'Q_u u + 0.5 (y_s - y_hat)'Q_y (y_s - y_hat)."""
    u = np.asarray(u, dtype=float)
    err = np.asarray(y_s, dtype=float) - obj.y_hat
    if u.shape[0] != obj.q_u.shape[0] or err.shape[0] != obj.q_y.shape[0]:
        raise linalg.DimensionError("objective operand dimensions do not match")
    return float(0.5 * u @ obj.q_u @ u + 0.5 * err @ obj.q_y @ err)


def grad_u_phi(z, y_s, obj: Objective, h) -> np.ndarray:
    """Input gradient Q_u z + H' Q_y (y_s - y_hat) used by the optimizer."""
    z = np.asarray(z, dtype=float)
    err = np.asarray(y_s, dtype=float) - obj.y_hat
    h = np.asarray(h, dtype=float)
    if z.shape[0] != obj.q_u.shape[0] or err.shape[0] != h.shape[0]:
        raise linalg.DimensionError("gradient operand dimensions do not match")
    return obj.q_u @ z + h.T @ (obj.q_y @ err)


def project(input_set, v) -> np.ndarray:
    """Euclidean projection onto the input set."""
    return input_set.project(v)


class HybridFOModel:
    """Concrete flow/jump behavior consumed by ``hybrid.simulate``.

    Built from nominal parameters; the robustness module constructs
    instances with perturbed matrices, timer rates, and reset values.
    """

    def __init__(
        self,
        params: ModelParams,
        *,
        a=None,
        b=None,
        h=None,
        rate_c: float = -1.0,
        rate_g: float = -1.0,
        tau_g_reset: float | None = None,
        reset_lo: float | None = None,
        reset_hi: float | None = None,
        tau_c_bound: float | None = None,
        tau_g_bound: float | None = None,
    ):
        self.params = params
        tm = params.timers
        self.a = params.plant.a if a is None else np.asarray(a, dtype=float)
        self.b = params.plant.b if b is None else np.asarray(b, dtype=float)
        self.h = effective_gain(params) if h is None else np.asarray(h, dtype=float)
        self.rate_c = float(rate_c)
        self.rate_g = float(rate_g)
        self.tau_g_reset = tm.tau_g_comp if tau_g_reset is None else float(tau_g_reset)
        self.reset_lo = tm.tau_c_min if reset_lo is None else float(reset_lo)
        self.reset_hi = tm.tau_c_max if reset_hi is None else float(reset_hi)
        self.tau_c_bound = max(
            tm.tau_c_max if tau_c_bound is None else float(tau_c_bound), self.reset_hi
        )
        self.tau_g_bound = max(
            tm.tau_g_comp if tau_g_bound is None else float(tau_g_bound),
            self.tau_g_reset,
        )
        if self.rate_c >= 0.0 or self.rate_g >= 0.0:
            raise ValueError("timer rates must stay strictly negative")
        if not (0.0 < self.reset_lo <= self.reset_hi):
            raise ValueError("tau_c reset interval must satisfy 0 < lo <= hi")
        if self.tau_g_reset <= 0.0:
            raise ValueError("tau_g reset value must be positive")
        self._prop_cache: dict[float, tuple] = {}

    @classmethod
    def nominal(cls, params: ModelParams) -> "HybridFOModel":
        return cls(params)

    # -- flow ---------------------------------------------------------------

    def timer_rates(self):
        return self.rate_c, self.rate_g

    def _propagator(self, dt: float):
        cached = self._prop_cache.get(dt)
        if cached is None:
            e = linalg.mat_exp(self.a, dt)
            forced = linalg.solve(self.a, (e - np.eye(self.a.shape[0])) @ self.b)
            cached = (e, forced)
            if len(self._prop_cache) < 64:
                self._prop_cache[dt] = cached
        return cached

    def flow_x(self, x, u, dt: float) -> np.ndarray:
        if dt == 0.0:
            return x
        e, forced = self._propagator(dt)
        return e @ x + forced @ u

    # -- sets ---------------------------------------------------------------

    def contains(self, state: State) -> bool:
        """Membership in the union of the flow and jump sets."""
        return (
            -EVENT_TOL <= state.tau_c <= self.tau_c_bound + EVENT_TOL
            and -EVENT_TOL <= state.tau_g <= self.tau_g_bound + EVENT_TOL
        )

    def which_case(self, state: State):
        """Jump case for a state in the jump set, else None."""
        c_zero = state.tau_c <= EVENT_TOL
        g_zero = state.tau_g <= EVENT_TOL
        if c_zero and g_zero:
            return "both"
        if g_zero:
            return "g1"
        if c_zero:
            return "g2"
        return None

    # -- jumps --------------------------------------------------------------

    def g1(self, state: State) -> State:
        """Gradient-descent jump: one projected step on z, tau_g reset."""
        obj = self.params.objective
        step = state.z - obj.gamma * grad_u_phi(state.z, state.y_s, obj, self.h)
        return dataclasses.replace(
            state,
            z=self.params.input_set.project(step),
            tau_g=self.tau_g_reset,
        )

    def g2(self, state: State, tau_c_reset: float) -> State:
        """Input-application jump: u <- z, output resampled, tau_c reset."""
        sample_from = state.z if self.params.sample_with == "new_input" else state.u
        y_s = self.h @ sample_from + self.params.plant.d
        return dataclasses.replace(
            state,
            u=state.z.copy(),
            y_s=y_s,
            tau_c=float(tau_c_reset),
        )

    def reset_interval(self):
        return self.reset_lo, self.reset_hi

    def min_dwell(self) -> float:
        """Shortest possible flow interval after a completed jump sequence."""
        return min(self.tau_g_reset / -self.rate_g, self.reset_lo / -self.rate_c)


def jump_g1(state: State, params: ModelParams) -> State:
    """Case (i) jump on the nominal system (tau_g expired, tau_c > 0)."""
    model = HybridFOModel.nominal(params)
    if model.which_case(state) not in ("g1", "both"):
        raise ValueError("gradient jump requires tau_g = 0")
    return model.g1(state)


def jump_g2(state: State, params: ModelParams, policy: JumpPolicy,
            rng=None) -> State:
    """Case (ii) jump on the nominal system (tau_c expired, tau_g > 0)."""
    from .hybrid import draw_tau_c_reset

    model = HybridFOModel.nominal(params)
    if model.which_case(state) not in ("g2", "both"):
        raise ValueError("input jump requires tau_c = 0")
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    tau = draw_tau_c_reset(policy, rng, model.reset_interval())
    return model.g2(state, tau)


def jump(state: State, params: ModelParams, policy: JumpPolicy, rng=None) -> State:
    """Full jump map: dispatch to the gradient step, the input application,
    or their composition in policy order when both timers expired."""
    from .hybrid import _resolve_jump

    model = HybridFOModel.nominal(params)
    if model.which_case(state) is None:
        raise ValueError("state is not in the jump set")
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    return _resolve_jump(model, state, policy, rng)[-1][2]


# -- validation -------------------------------------------------------------


@dataclass
class Check:
    name: str
    status: str  # "pass" | "warn" | "fail"
    detail: str


@dataclass
class Diagnostics:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c.status == "fail"]


def _spd_check(name, mat, checks):
    mat = np.asarray(mat, dtype=float)
    scale = max(np.abs(mat).max(), 1.0)
    if np.abs(mat - mat.T).max() > 1e-12 * scale:
        checks.append(Check(name, "fail", "matrix is not symmetric"))
        return None
    lam = linalg.eig_sym(mat)
    if lam[0] <= 0.0:
        checks.append(Check(name, "fail", f"smallest eigenvalue {lam[0]:.3e} <= 0"))
        return None
    checks.append(Check(name, "pass", f"eigenvalues in [{lam[0]:.4g}, {lam[-1]:.4g}]"))
    return lam


def validate(params: ModelParams, zeta0: State | None = None,
             mode: str = "strict") -> Diagnostics:
    """Check every standing assumption; returns structured diagnostics.

    ``mode="strict"`` also requires the restricted initialization
    (tau_c in its reset interval, tau_g at its reset value, z = u, u in the
    input set); ``mode="global"`` reports those as warnings only.
    """
    checks: list[Check] = []
    tm = params.timers
    plant = params.plant

    spectrum = linalg.eig_general(plant.a)
    max_re = float(np.max(spectrum.real))
    if max_re < 0.0:
        checks.append(Check("hurwitz", "pass", f"max Re(lambda) = {max_re:.4g}"))
    else:
        checks.append(Check("hurwitz", "fail",
                            f"plant matrix has eigenvalue with Re = {max_re:.4g} >= 0"))

    lam_u = _spd_check("q_u_spd", params.objective.q_u, checks)
    lam_y = _spd_check("q_y_spd", params.objective.q_y, checks)

    try:
        diam = params.input_set.diameter()
        checks.append(Check("input_set", "pass", f"diameter {diam:.4g}"))
    except Exception as exc:  # degenerate set specification
        checks.append(Check("input_set", "fail", str(exc)))

    if 0.0 < tm.tau_c_min <= tm.tau_c_max and tm.tau_g_comp > 0.0 and tm.ell >= 1:
        checks.append(Check("timers", "pass", ""))
    else:
        checks.append(Check("timers", "fail",
                            "need 0 < tau_c_min <= tau_c_max, tau_g_comp > 0, ell >= 1"))

    if tm.ell * tm.tau_g_comp <= tm.tau_c_min + 1e-12:
        checks.append(Check("timescale", "pass",
                            f"ell*tau_g_comp = {tm.ell * tm.tau_g_comp:.4g} <= "
                            f"tau_c_min = {tm.tau_c_min:.4g}"))
    else:
        checks.append(Check(
            "timescale", "fail",
            f"ell*tau_g_comp = {tm.ell * tm.tau_g_comp:.4g} exceeds tau_c_min = "
            f"{tm.tau_c_min:.4g}; fewer than ell gradient iterations fit per input "
            "period"))

    if lam_u is not None and lam_y is not None and max_re < 0.0:
        h = effective_gain(params)
        big_l = float(linalg.eig_sym(
            params.objective.q_u + h.T @ params.objective.q_y @ h)[-1])
        mu = float(lam_u[0])
        gamma = params.objective.gamma
        bound = 2.0 / (mu + big_l)
        if 0.0 < gamma < bound:
            checks.append(Check("stepsize", "pass",
                                f"gamma = {gamma:.4g} in (0, {bound:.4g})"))
        else:
            checks.append(Check(
                "stepsize", "fail",
                f"stepsize gamma = {gamma:.4g} outside the input-convergence "
                f"range (0, 2/(lambda_min(Q_u)+L)) = (0, {bound:.4g})"))
        q = 1.0 - 2.0 * gamma * mu + gamma ** 2 * big_l ** 2
        if 0.0 < q < 1.0:
            checks.append(Check("contraction", "pass", f"q = {q:.6g}"))
        else:
            checks.append(Check("contraction", "fail",
                                f"contraction factor q = {q:.6g} not in (0, 1)"))

    if zeta0 is not None:
        init_status = "fail" if mode == "strict" else "warn"
        model = HybridFOModel.nominal(params)
        if not model.contains(zeta0):
            checks.append(Check("init_domain", "fail",
                                "initial state outside the flow and jump sets"))
        else:
            checks.append(Check("init_domain", "pass", ""))
        problems = []
        if not (tm.tau_c_min - 1e-12 <= zeta0.tau_c <= tm.tau_c_max + 1e-12):
            problems.append("tau_c(0,0) outside [tau_c_min, tau_c_max]")
        if abs(zeta0.tau_g - tm.tau_g_comp) > 1e-12:
            problems.append("tau_g(0,0) != tau_g_comp")
        if np.linalg.norm(zeta0.z - zeta0.u) > 1e-12:
            problems.append("z(0,0) != u(0,0)")
        if not params.input_set.contains(zeta0.u):
            problems.append("u(0,0) outside the input set")
        if problems:
            checks.append(Check("init_restricted", init_status, "; ".join(problems)))
        else:
            checks.append(Check("init_restricted", "pass", ""))

    return Diagnostics(checks)


def strict_initial_state(params: ModelParams, x0=None, u0=None,
                         tau_c0: float | None = None) -> State:
    """Restricted initialization: tau_g at its reset value, z = u, consistent
    sampled output."""
    plant = params.plant
    h = effective_gain(params)
    u = params.input_set.project(np.zeros(plant.m) if u0 is None else u0)
    x = np.zeros(plant.n) if x0 is None else np.asarray(x0, dtype=float)
    tau_c = params.timers.tau_c_max if tau_c0 is None else float(tau_c0)
    return make_state(x, u, h @ u + plant.d, u, tau_c, params.timers.tau_g_comp)
