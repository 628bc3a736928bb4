"""Quantitative analysis: optimal steady state, per-sample fixed points,
convergence constants, convergence-bound evaluation, and trajectory
cross-checks against the closed-form variation-of-constants decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .hybrid import HybridArc
from .model import ModelParams, State, effective_gain


@dataclass
class Constants:
    """Derived convergence quantities for one parameter set."""

    rho: float  # slowest plant decay rate, min |Re lambda_i(A)|
    m_hat: float  # overshoot constant estimate, >= 1
    big_l: float  # gradient Lipschitz constant lambda_max(Q_u + H'Q_yH)
    q: float  # per-iteration contraction factor
    d_u: float  # diameter of the input set
    r: float  # guaranteed asymptotic tracking radius
    u_tilde: np.ndarray
    y_tilde: np.ndarray
    x_tilde: np.ndarray
    b_norm: float
    m_estimate: "MEstimate | None" = None

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "m_hat": self.m_hat,
            "L": self.big_l,
            "q": self.q,
            "d_u": self.d_u,
            "r": self.r,
            "u_tilde": self.u_tilde.tolist(),
            "y_tilde": self.y_tilde.tolist(),
            "x_tilde": self.x_tilde.tolist(),
            "b_norm": self.b_norm,
        }


@dataclass
class MEstimate:
    value: float
    t_at_max: float
    sup: float
    non_normal_note: str | None = None


def _pgd_fixed_point(grad, hessian_eigs, input_set, dim, check_gamma,
                     tol: float = 1e-12, max_iter: int = 200_000) -> np.ndarray:
    """Projected gradient iteration to a fixed point of z = P[z - gamma*grad(z)].

    Iterates with an internally optimal stepsize (the fixed point does not
    depend on the stepsize); convergence is certified against ``check_gamma``.
    """
    mu, lam = hessian_eigs
    gamma_int = 2.0 / (mu + lam)
    z = input_set.project(np.zeros(dim))
    for _ in range(max_iter):
        z_new = input_set.project(z - gamma_int * grad(z))
        if np.linalg.norm(z_new - z) <= 0.1 * tol:
            z = z_new
            break
        z = z_new
    resid = np.linalg.norm(z - input_set.project(z - check_gamma * grad(z)))
    if resid > tol:
        raise RuntimeError(
            f"projected gradient failed to reach fixed-point residual {tol:g} "
            f"(got {resid:.3e})"
        )
    return z


def solve_optimal(params: ModelParams, h=None):
    """Optimal steady state (u~, y~, x~) of the disturbance-aware program.

    Minimizes 0.5 u'Q_u u + 0.5 (Hu + d - y_hat)'Q_y(Hu + d - y_hat) over the
    input set; strong convexity in u makes the minimizer unique.
    """
    obj = params.objective
    plant = params.plant
    if h is None:
        h = effective_gain(params)
    hess = obj.q_u + h.T @ obj.q_y @ h
    eigs = linalg.eig_sym(hess)
    offset = h.T @ (obj.q_y @ (plant.d - obj.y_hat))

    def grad(u):
        return hess @ u + offset

    u_tilde = _pgd_fixed_point(
        grad, (float(eigs[0]), float(eigs[-1])), params.input_set, plant.m,
        check_gamma=2.0 / (float(eigs[0]) + float(eigs[-1])),
    )
    y_tilde = h @ u_tilde + plant.d
    x_tilde = -linalg.solve(plant.a, plant.b @ u_tilde)
    return u_tilde, y_tilde, x_tilde


def fixed_point_z(y_s, params: ModelParams, h=None, literal_argmin: bool = False):
    """Per-sample fixed point z* of the projected gradient update.

    With ``literal_argmin=True`` returns instead the minimizer of the
    objective with the sampled output frozen (whose gradient is just Q_u u);
    the default follows the update law actually iterated by the system.
    """
    obj = params.objective
    if h is None:
        h = effective_gain(params)
    y_s = np.asarray(y_s, dtype=float)
    eigs = linalg.eig_sym(obj.q_u)
    if literal_argmin:
        def grad(z):
            return obj.q_u @ z
    else:
        offset = h.T @ (obj.q_y @ (y_s - obj.y_hat))

        def grad(z):
            return obj.q_u @ z + offset

    return _pgd_fixed_point(
        grad, (float(eigs[0]), float(eigs[-1])), params.input_set,
        obj.q_u.shape[0], check_gamma=obj.gamma if not literal_argmin else 1.0,
    )


def estimate_M(a, rho: float, grid_points: int = 2000, horizon_factor: float = 10.0,
               margin: float = 0.05) -> MEstimate:
    """Estimate of the overshoot constant in ||e^{At}|| <= M e^{-rho t}.

    Grid supremum of ||e^{At}|| e^{rho t} over [0, horizon_factor/rho] with a
    safety margin; the maximizer is returned for audit. Emits a note when the
    eigenvector basis is badly conditioned (highly non-normal plant).
    """
    a = np.asarray(a, dtype=float)
    if rho <= 0:
        raise ValueError("rho must be positive")
    h = horizon_factor / rho / grid_points
    step = linalg.mat_exp(a, h)
    e = np.eye(a.shape[0])
    sup, t_at = 1.0, 0.0
    for k in range(1, grid_points + 1):
        e = step @ e
        t = k * h
        value = np.linalg.norm(e, 2) * np.exp(rho * t)
        if value > sup:
            sup, t_at = value, t
    note = None
    _, vecs = np.linalg.eig(a)
    cond = np.linalg.cond(vecs)
    if cond > 1e6:
        note = (
            f"eigenvector condition estimate {cond:.3e}: plant is highly "
            "non-normal, overshoot estimate may be loose"
        )
    return MEstimate(max(1.0, sup) * (1.0 + margin), t_at, sup, note)


def constants(params: ModelParams, m_estimate: MEstimate | None = None,
              r_scale: float = 1.0) -> Constants:
    """Assemble every derived convergence constant for a parameter set.

    ``r_scale`` rescales the tracking radius and exists only as a debug knob
    for negative-control experiments.
    """
    plant = params.plant
    obj = params.objective
    tm = params.timers
    h = effective_gain(params)

    if params.rho_override is not None:
        rho = float(params.rho_override)
    else:
        spectrum = linalg.eig_general(plant.a)
        if np.max(spectrum.real) >= 0.0:
            raise ValueError("plant matrix must be Hurwitz")
        rho = float(np.min(np.abs(spectrum.real)))

    big_l = float(linalg.eig_sym(obj.q_u + h.T @ obj.q_y @ h)[-1])
    mu = float(linalg.eig_sym(obj.q_u)[0])
    q = 1.0 - 2.0 * obj.gamma * mu + obj.gamma ** 2 * big_l ** 2
    d_u = params.input_set.diameter()
    b_norm = linalg.spectral_norm(plant.b)
    if m_estimate is None:
        m_estimate = estimate_M(plant.a, rho)
    m_hat = m_estimate.value
    u_tilde, y_tilde, x_tilde = solve_optimal(params, h)
    r = (
        m_hat * b_norm * d_u / rho
        * (2.0 - np.exp(-rho * tm.tau_c_min) + q ** (tm.ell / 2.0))
        * r_scale
    )
    return Constants(rho, m_hat, big_l, q, d_u, float(r), u_tilde, y_tilde,
                     x_tilde, b_norm, m_estimate)


def dist_to_A(state: State, c: Constants) -> float:
    """Distance of the hybrid state to the target set: only the plant-state
    component can leave it, so this is dist(x, ball of radius r about x~)."""
    return max(0.0, float(np.linalg.norm(state.x - c.x_tilde)) - c.r)


def _bound(t, init_dist, c: Constants, timers, middle_exponent_scale: float):
    tail = np.exp(-c.rho * np.asarray(t, dtype=float))
    q_pow = c.q ** (timers.ell / 2.0)
    coeff = c.b_norm * c.d_u / c.rho
    middle = c.m_hat ** 2 * coeff * (
        2.0 - np.exp(-middle_exponent_scale * c.rho * timers.tau_c_max) + q_pow
    )
    last = c.m_hat * coeff * (1.0 + q_pow * np.exp(c.rho * timers.tau_c_min))
    return (c.m_hat * init_dist + middle - last) * tail


def bound_thm1(t, init_dist: float, c: Constants, timers) -> float:
    """Convergence bound for restricted initializations (raw, may be negative
    at small t; clip at zero when comparing against distances)."""
    return _bound(t, init_dist, c, timers, 1.0)


def bound_thm2(t, init_dist: float, c: Constants, timers) -> float:
    """Convergence bound valid from arbitrary initial conditions."""
    return _bound(t, init_dist, c, timers, 2.0)


@dataclass
class BoundReport:
    which: str
    entries: list  # (t, j, lhs, rhs_raw, rhs_clipped)
    max_violation: float
    first_entry_time: float | None  # first t with lhs <= 1e-6
    init_dist: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-9


def check_bound(arc: HybridArc, c: Constants, params: ModelParams,
                which: str = "thm1") -> BoundReport:
    """Evaluate distance vs. the convergence bound at every stored sample."""
    bound_fn = {"thm1": bound_thm1, "thm2": bound_thm2}[which]
    init_dist = dist_to_A(arc.segments[0].states[0], c)
    entries = []
    max_violation = -np.inf
    first_entry = None
    for seg in arc.segments:
        for t, state in zip(seg.times, seg.states):
            lhs = dist_to_A(state, c)
            rhs = float(bound_fn(t, init_dist, c, params.timers))
            clipped = max(rhs, 0.0)
            entries.append((float(t), seg.j, lhs, rhs, clipped))
            max_violation = max(max_violation, lhs - clipped)
            if first_entry is None and lhs <= 1e-6:
                first_entry = float(t)
    return BoundReport(which, entries, float(max_violation), first_entry, init_dist)


@dataclass
class ReconstructionResult:
    max_deviation: float
    times: np.ndarray
    reconstructed: np.ndarray


def reconstruct_x(arc: HybridArc, params: ModelParams) -> ReconstructionResult:
    """Rebuild the plant trajectory from x(0,0) and the logged input sequence.

    Integrates the variation-of-constants decomposition over the intervals on
    which the input is constant (each integral evaluated in closed form) and
    reports the worst deviation from the stored trajectory.
    """
    if arc.jumps is None:
        raise ValueError("arc is missing its jump log")
    a, b = params.plant.a, params.plant.b
    eye = np.eye(a.shape[0])

    first = arc.segments[0].states[0]
    anchor_t, anchor_x, u_p = 0.0, first.x.copy(), first.u.copy()
    jump_iter = iter(arc.jumps)
    pending = next(jump_iter, None)

    times, recon = [], []
    max_dev = 0.0
    for seg in arc.segments:
        for t, state in zip(seg.times, seg.states):
            dt = t - anchor_t
            e = linalg.mat_exp(a, dt)
            x_rec = e @ anchor_x + linalg.solve(a, (e - eye) @ (b @ u_p))
            times.append(t)
            recon.append(x_rec)
            max_dev = max(max_dev, float(np.max(np.abs(x_rec - state.x))))
        # input changes recorded at this segment's closing jump re-anchor the sum
        while pending is not None and pending.time.j == seg.j:
            if pending.applied == "g2":
                dt = pending.time.t - anchor_t
                e = linalg.mat_exp(a, dt)
                anchor_x = e @ anchor_x + linalg.solve(a, (e - eye) @ (b @ u_p))
                anchor_t = pending.time.t
                u_p = pending.state_after.u.copy()
            pending = next(jump_iter, None)
    return ReconstructionResult(max_dev, np.asarray(times), np.vstack(recon))


@dataclass
class PeriodCheck:
    period: int
    alpha: int
    per_step_ok: bool
    aggregate_ok: bool
    worst_step_margin: float
    aggregate_margin: float


@dataclass
class RateReport:
    periods: list
    passed: bool


def rate_check(arc: HybridArc, params: ModelParams,
               step_tol: float = 1e-12, aggregate_tol: float = 1e-9) -> RateReport:
    """Verify per-step and aggregate optimizer contraction in every completed
    input period against that period's projected-gradient fixed point."""
    c_q = constants_q(params)
    h = effective_gain(params)
    first = arc.segments[0].states[0]
    y_period = first.y_s
    iterates = [first.z]
    periods: list[PeriodCheck] = []
    for rec in arc.jumps:
        if rec.applied == "g1":
            iterates.append(rec.state_after.z)
        else:
            periods.append(_check_period(len(periods), iterates, y_period, params,
                                         h, c_q, step_tol, aggregate_tol))
            y_period = rec.state_after.y_s
            iterates = [rec.state_after.z]
    return RateReport(periods, all(p.per_step_ok and p.aggregate_ok
                                   for p in periods))


def constants_q(params: ModelParams) -> float:
    """Contraction factor q for the configured stepsize."""
    obj = params.objective
    h = effective_gain(params)
    big_l = float(linalg.eig_sym(obj.q_u + h.T @ obj.q_y @ h)[-1])
    mu = float(linalg.eig_sym(obj.q_u)[0])
    return 1.0 - 2.0 * obj.gamma * mu + obj.gamma ** 2 * big_l ** 2


def _check_period(p, iterates, y_period, params, h, q, step_tol, aggregate_tol):
    z_star = fixed_point_z(y_period, params, h)
    dists = [float(np.linalg.norm(z - z_star)) for z in iterates]
    worst = -np.inf
    for d0, d1 in zip(dists, dists[1:]):
        worst = max(worst, d1 ** 2 - q * d0 ** 2)
    alpha = len(iterates) - 1
    agg_margin = -np.inf
    if alpha >= 1:
        agg_margin = dists[-1] - q ** ((alpha - 1) / 2.0) * dists[1]
    return PeriodCheck(
        p, alpha,
        per_step_ok=worst <= step_tol,
        aggregate_ok=agg_margin <= aggregate_tol,
        worst_step_margin=worst,
        aggregate_margin=agg_margin,
    )
