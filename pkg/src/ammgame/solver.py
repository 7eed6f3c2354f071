"""Equilibrium solvers for the trader population and the liquidity provider.

Three nested problems:

1. Best response: given the population flow of controls, the LP control path
   and the induced deterministic environment, a representative trader solves a
   finite-horizon control problem by backward dynamic programming on a uniform
   inventory grid with Gauss-Hermite quadrature for the idiosyncratic noise
   and linear value interpolation. Ties break to the lowest control index.

2. Consistency: the flow of control laws must equal the one induced by the
   best response. A damped Picard iteration on the (state law, control law)
   pair runs until the 1-d Wasserstein residual drops below tolerance; the
   certificate is re-evaluated from scratch at the returned point.

3. LP control: over piecewise-constant controls on K segments, a coordinate
   pattern search with shrinking step minimizes the LP cost (negated running
   reward plus quadratic terminal penalty), solving problem 2 at every
   candidate. Inner non-convergence marks the candidate infeasible instead of
   aborting the search.

The solver runs in deterministic-flow mode: no common price noise enters the
fixed point; idiosyncratic trader noise is integrated exactly through the
quadrature. The environment recursion reuses the engine's left-point updates,
so DP rewards are tabulated on exactly the path a noise-free simulation
realizes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .engine import TimeGrid
from .errors import (
    DegenerateReserves,
    GridOverflow,
    InvalidParameter,
    NotConverged,
)
from .lvr import instantaneous_lvr
from .pool import EPS_RESERVE_FACTOR


@dataclass(frozen=True)
class PolicyGrid:
    """Feedback policy and value function tabulated on (time, inventory)."""

    grid: TimeGrid
    x_grid: np.ndarray
    atoms: np.ndarray
    policy_idx: np.ndarray  # (steps, nx) indices into atoms
    value: np.ndarray       # (steps+1, nx)

    def control_table(self):
        return self.atoms[self.policy_idx]

    def as_policy(self):
        """Callable (step, inventory vector) -> control vector, nearest node."""
        x0 = self.x_grid[0]
        h = self.x_grid[1] - self.x_grid[0]
        top = len(self.x_grid) - 1

        def policy(t, x):
            ix = np.clip(np.rint((np.asarray(x) - x0) / h).astype(np.int64), 0, top)
            return self.atoms[self.policy_idx[t, ix]]

        return policy


@dataclass(frozen=True)
class FlowOfMeasures:
    """Time-indexed state law (on the inventory grid) and control law (on atoms)."""

    x_grid: np.ndarray
    atoms: np.ndarray
    mu: np.ndarray  # (steps+1, nx)
    q: np.ndarray   # (steps, n_atoms)

    def mean_controls(self):
        return self.q @ self.atoms


@dataclass
class MfgEnvironment:
    """Deterministic market path a representative trader optimizes against."""

    x_adj: np.ndarray      # (steps+1,)
    delta: np.ndarray      # (steps+1,)
    price: np.ndarray      # (steps+1,)
    lvr_rate: np.ndarray   # (steps,)
    qbar: np.ndarray       # (steps,)
    lp_control: np.ndarray  # (steps,)
    g: np.ndarray          # (steps,) 1/((x_adj+phi*delta)(x_adj+delta)) at left points
    x_total: np.ndarray    # (steps,)
    pd_reward: np.ndarray  # (steps,) price drift with the mean-control rate slot


@dataclass
class EquilibriumSolution:
    """Converged policy, flows, diagnostics, and (optionally) the LP layer."""

    policy: PolicyGrid
    flows: FlowOfMeasures
    env: MfgEnvironment
    residual_history: list
    certificate_residual: float
    converged: bool
    iterations: int
    lp_control_path: np.ndarray
    lp_segments: np.ndarray | None = None
    lp_objective: float | None = None
    search_trace: list | None = None
    diagnostics: dict = field(default_factory=dict)


def trader_grids(config):
    x_grid = np.linspace(config.grid_x_min, config.grid_x_max, config.grid_x_points)
    atoms = np.linspace(config.trader_a_min, config.trader_a_max, config.grid_control_points)
    return x_grid, atoms


def initial_trader_law(config, x_grid):
    """Initial inventory law discretized on the grid.

    A point mass splits linearly between its two bracketing nodes; a gaussian
    law is the normalized density sampled at the nodes.
    """
    nx = len(x_grid)
    mu0 = np.zeros(nx)
    if config.trader_init_law == "point":
        h = x_grid[1] - x_grid[0]
        pos = (config.trader_init_mean - x_grid[0]) / h
        i0 = int(np.clip(math.floor(pos), 0, nx - 2))
        frac = min(max(pos - i0, 0.0), 1.0)
        mu0[i0] = 1.0 - frac
        mu0[i0 + 1] += frac
    else:
        z = (x_grid - config.trader_init_mean) / config.trader_init_sd
        mu0 = np.exp(-0.5 * z * z)
        mu0 /= mu0.sum()
    return mu0


def wasserstein_grid(u, v, spacing):
    """W1 between two weight vectors on a shared uniform grid."""
    diff = np.cumsum(u - v)
    return float(spacing * np.abs(diff[:-1]).sum())


def forward_environment(config, lp_control_path, qbar):
    """Advance the deterministic market path (same recursions as the engine)."""
    grid = TimeGrid(config.grid_horizon, config.grid_steps)
    n = grid.steps
    dt = grid.dt
    lp_control_path = np.asarray(lp_control_path, dtype=float)
    qbar = np.asarray(qbar, dtype=float)
    if lp_control_path.shape != (n,) or qbar.shape != (n,):
        raise InvalidParameter("lp control and mean-control paths must cover every step")

    x0, y0 = config.pool_x0, config.pool_y0
    k0 = x0 * y0
    phi = 1.0 - config.pool_tau
    sign = 1.0 if config.model_flow_convention == "definition" else -1.0
    floor = EPS_RESERVE_FACTOR * x0

    x_adj = np.empty(n + 1)
    delta = np.empty(n + 1)
    price = np.empty(n + 1)
    lvr_rate = np.empty(n)
    g = np.empty(n)
    x_total = np.empty(n)
    pd_reward = np.empty(n)

    x_adj[0], delta[0], price[0] = x0, 0.0, y0 / x0
    for t in range(n):
        xa, dl, p = x_adj[t], delta[t], price[t]
        a = xa + phi * dl
        b = xa + dl
        if p <= 0 or a <= floor or b <= floor:
            raise DegenerateReserves(
                f"environment degenerate at step {t} (price {p}, factors {a}, {b})",
                step=t,
                quantity=min(a, b, p),
            )
        ell = float(instantaneous_lvr(p, config.external_sigma, k0)) if config.arbitrage_enabled else 0.0
        d_rate = sign * (ell - qbar[t])
        a_lp = lp_control_path[t]
        gg = 1.0 / (a * b)
        a_rate = a_lp + phi * qbar[t]
        b_rate = a_lp + qbar[t]
        pd_r = -k0 * (a_rate * b + a * b_rate) * gg * gg
        a_rate_p = a_lp + phi * d_rate
        b_rate_p = a_lp + d_rate
        pd_p = -k0 * (a_rate_p * b + a * b_rate_p) * gg * gg

        lvr_rate[t] = ell
        g[t] = gg
        x_total[t] = b
        pd_reward[t] = pd_r
        x_adj[t + 1] = xa + a_lp * dt
        delta[t + 1] = dl + d_rate * dt
        price[t + 1] = p + pd_p * dt
    if price[n] <= 0 or x_adj[n] + phi * delta[n] <= floor or x_adj[n] + delta[n] <= floor:
        raise DegenerateReserves("environment degenerate at the terminal step", step=n)

    return MfgEnvironment(
        x_adj=x_adj,
        delta=delta,
        price=price,
        lvr_rate=lvr_rate,
        qbar=qbar,
        lp_control=lp_control_path,
        g=g,
        x_total=x_total,
        pd_reward=pd_reward,
    )


def tabulate_rewards(config, env: MfgEnvironment, x_grid, atoms,
                     own_weight=0.0, qbar_others=None):
    """Running reward table R[t, ix, ja] for the representative trader.

    With ``own_weight`` = 1/N and ``qbar_others`` the frozen contribution of
    the other N-1 players to the population mean, the mean-control slot of
    the price drift becomes qbar_others + own_weight * a: the tabulated
    reward then matches what the finite-N engine pays a player whose control
    enters the empirical average, so a deviator can internalize its own
    impact. With own_weight = 0 the slot is the frozen mean field itself.
    """
    k0 = config.pool_x0 * config.pool_y0
    phi = 1.0 - config.pool_tau
    wedge = (1.0 + phi * phi) / (2.0 * phi)
    akg = atoms[None, :] * (k0 * env.g[:, None])         # (steps, na)
    if config.trader_slippage:
        slip = atoms[None, :] / env.x_total[:, None]
    else:
        slip = np.zeros_like(akg)
    trade = akg + akg * (1.0 - slip) * (1.0 - wedge)
    if own_weight == 0.0:
        pd = env.pd_reward[:, None]                      # (steps, 1)
    else:
        base = env.qbar if qbar_others is None else np.asarray(qbar_others, dtype=float)
        qslot = base[:, None] + own_weight * atoms[None, :]
        a_fac = (env.x_adj + phi * env.delta)[:-1]
        b_fac = env.x_total
        a_lp = env.lp_control
        pd = (
            -k0
            * ((a_lp[:, None] + phi * qslot) * b_fac[:, None]
               + a_fac[:, None] * (a_lp[:, None] + qslot))
            * env.g[:, None] ** 2
        )
    return x_grid[None, :, None] * pd[:, None, :] + trade[:, None, :]


def best_response(config, env: MfgEnvironment, own_weight=0.0, qbar_others=None):
    """Backward DP against a frozen environment."""
    grid = TimeGrid(config.grid_horizon, config.grid_steps)
    x_grid, atoms = trader_grids(config)
    rewards = tabulate_rewards(
        config, env, x_grid, atoms, own_weight=own_weight, qbar_others=qbar_others
    )
    terminal = -config.trader_terminal_weight * x_grid**2
    nodes, weights = kernels.gauss_hermite(config.grid_quad_points)
    sig_root_dt = config.trader_sigma * math.sqrt(grid.dt)
    value, policy_idx, ok = kernels.dp_backward(
        rewards, terminal, x_grid, atoms, grid.dt, sig_root_dt, nodes, weights
    )
    if not ok.all():
        t_bad, i_bad = np.argwhere(~ok)[0]
        raise GridOverflow(
            f"no admissible control at step {t_bad}, node x={x_grid[i_bad]}: "
            "every drift target exits the state grid (bounds too tight)"
        )
    return PolicyGrid(grid=grid, x_grid=x_grid, atoms=atoms, policy_idx=policy_idx, value=value)


def induced_flows(config, policy: PolicyGrid, initial_law):
    """Push the initial law through the policy; collect the control law."""
    nodes, weights = kernels.gauss_hermite(config.grid_quad_points)
    sig_root_dt = config.trader_sigma * math.sqrt(policy.grid.dt)
    mu, overflow = kernels.push_forward(
        policy.policy_idx, np.asarray(initial_law, dtype=float),
        policy.x_grid, policy.atoms, policy.grid.dt, sig_root_dt, nodes, weights,
    )
    if overflow:
        raise GridOverflow(
            "positive mass drifts outside the state grid (bounds too tight)"
        )
    steps, na = policy.policy_idx.shape[0], len(policy.atoms)
    q = np.zeros((steps, na))
    for t in range(steps):
        np.add.at(q[t], policy.policy_idx[t], mu[t])
    return FlowOfMeasures(x_grid=policy.x_grid, atoms=policy.atoms, mu=mu, q=q)


def _flow_residual(flows_a: FlowOfMeasures, flows_b: FlowOfMeasures):
    hx = flows_a.x_grid[1] - flows_a.x_grid[0]
    ha = flows_a.atoms[1] - flows_a.atoms[0] if len(flows_a.atoms) > 1 else 1.0
    steps = flows_a.q.shape[0]
    worst = wasserstein_grid(flows_a.mu[steps], flows_b.mu[steps], hx)
    for t in range(steps):
        r = wasserstein_grid(flows_a.q[t], flows_b.q[t], ha) + wasserstein_grid(
            flows_a.mu[t], flows_b.mu[t], hx
        )
        worst = max(worst, r)
    return worst


def _response_map(config, lp_control_path, flows: FlowOfMeasures, initial_law):
    env = forward_environment(config, lp_control_path, flows.mean_controls())
    policy = best_response(config, env)
    return induced_flows(config, policy, initial_law), policy, env


def solve_mfg(config, lp_control_path=None, damping=None, tol=None, max_iter=None):
    """Damped Picard iteration to the consistency fixed point.

    Returns the flow iterate whose image under the response map is within
    tolerance, together with the best response against it.
    """
    grid = TimeGrid(config.grid_horizon, config.grid_steps)
    lam = config.solver_damping if damping is None else damping
    tol = config.solver_tol if tol is None else tol
    max_iter = config.solver_max_iter if max_iter is None else max_iter
    if not (0 < lam <= 1):
        raise InvalidParameter(f"damping must lie in (0, 1], got {lam}")
    if tol <= 0 or max_iter < 1:
        raise InvalidParameter("tol must be positive and max_iter >= 1")
    if lp_control_path is None:
        lp_control_path = np.zeros(grid.steps)

    x_grid, atoms = trader_grids(config)
    mu0 = initial_trader_law(config, x_grid)
    j0 = int(np.argmin(np.abs(atoms)))
    q = np.zeros((grid.steps, len(atoms)))
    q[:, j0] = 1.0
    flows = FlowOfMeasures(
        x_grid=x_grid, atoms=atoms, mu=np.tile(mu0, (grid.steps + 1, 1)), q=q
    )

    history = []
    for iteration in range(1, max_iter + 1):
        image, policy, env = _response_map(config, lp_control_path, flows, mu0)
        residual = _flow_residual(image, flows)
        history.append(residual)
        if residual <= tol:
            return EquilibriumSolution(
                policy=policy,
                flows=flows,
                env=env,
                residual_history=history,
                certificate_residual=fixed_point_certificate(config, lp_control_path, flows),
                converged=True,
                iterations=iteration,
                lp_control_path=np.asarray(lp_control_path, dtype=float),
                diagnostics={
                    "equilibrium_value": float(mu0 @ policy.value[0]),
                    "backend": kernels.backend_name(),
                },
            )
        flows = FlowOfMeasures(
            x_grid=x_grid,
            atoms=atoms,
            mu=lam * image.mu + (1.0 - lam) * flows.mu,
            q=lam * image.q + (1.0 - lam) * flows.q,
        )
    raise NotConverged(
        f"no fixed point within {max_iter} iterations (last residual {history[-1]:.3e})",
        residual_history=history,
    )


def fixed_point_certificate(config, lp_control_path, flows: FlowOfMeasures):
    """Residual of the response map at ``flows``, recomputed from scratch."""
    x_grid, _ = trader_grids(config)
    mu0 = initial_trader_law(config, x_grid)
    image, _, _ = _response_map(config, lp_control_path, flows, mu0)
    return _flow_residual(image, flows)


# ---------------------------------------------------------------------------
# LP layer
# ---------------------------------------------------------------------------


def lp_path_from_segments(segments, steps):
    """Piecewise-constant per-step path from K segment values."""
    segments = np.asarray(segments, dtype=float)
    k = len(segments)
    return segments[(np.arange(steps) * k) // steps]


def lp_objective(config, segments, solution: EquilibriumSolution = None):
    """LP cost of a segment vector: negated running reward plus terminal penalty.

    Deterministic-flow evaluation; solves the inner fixed point unless a
    matching solution is supplied. Returns (cost, solution).
    """
    grid = TimeGrid(config.grid_horizon, config.grid_steps)
    path = lp_path_from_segments(segments, grid.steps)
    if solution is None:
        solution = solve_mfg(config, path)
    env = solution.env
    dt = grid.dt
    x_lp = config.lp_x0 + np.concatenate(([0.0], np.cumsum(path * dt)))
    z_lp = config.lp_z0 - 2.0 * np.concatenate(([0.0], np.cumsum(path * env.price[:-1] * dt)))
    running = float(np.sum(x_lp[:-1] * env.pd_reward) * dt)
    c = config.lp_terminal_weight
    cost = -running + c * (x_lp[-1] ** 2 + z_lp[-1] ** 2)
    return cost, solution


def solve_major_minor(config):
    """Coordinate pattern search over the LP's piecewise-constant control.

    Greedy first-improvement polling with step halving; every candidate runs
    the inner fixed point to tolerance. Returns the best candidate's full
    equilibrium with the search trace attached.
    """
    k = config.lp_segments
    lo, hi = config.lp_control_min, config.lp_control_max
    budget = config.solver_budget
    step = config.solver_initial_step
    step_tol = config.solver_step_tol

    cache = {}
    trace = []

    def evaluate(u, respect_budget=True):
        key = u.tobytes()
        if key in cache:
            return cache[key]
        if respect_budget and len(trace) >= budget:
            return (math.inf, None, "budget")  # not cached: never actually evaluated
        try:
            cost, sol = lp_objective(config, u)
            result = (cost, sol, "ok")
        except NotConverged:
            result = (math.inf, None, "inner_not_converged")
        except DegenerateReserves:
            result = (math.inf, None, "degenerate")
        trace.append(
            {
                "eval": len(trace),
                "step": step,
                "segments": u.tolist(),
                "objective": result[0],
                "status": result[2],
            }
        )
        cache[key] = result
        return result

    u = np.clip(np.zeros(k), lo, hi)
    best_cost, best_sol, status = evaluate(u)
    while step >= step_tol and len(trace) < budget:
        improved = False
        for i in range(k):
            for direction in (1.0, -1.0):
                cand = u.copy()
                cand[i] = cand[i] + direction * step
                if cand[i] < lo or cand[i] > hi:
                    continue
                cost, sol, _ = evaluate(cand)
                if cost < best_cost:
                    u, best_cost, best_sol = cand, cost, sol
                    improved = True
                    break
            if improved:
                break
        if not improved:
            step *= 0.5

    if best_sol is None:
        raise NotConverged(
            "no feasible LP control: every inner solve failed", residual_history=[]
        )

    # local-optimality certificate at the final step size
    neighbors = []
    final_step = max(step, step_tol)
    for i in range(k):
        for direction in (1.0, -1.0):
            cand = u.copy()
            cand[i] = cand[i] + direction * final_step
            feasible = lo <= cand[i] <= hi
            cost = evaluate(cand, respect_budget=False)[0] if feasible else math.inf
            neighbors.append(
                {"segments": cand.tolist(), "objective": cost, "feasible": feasible}
            )

    best_sol.lp_segments = u
    best_sol.lp_objective = best_cost
    best_sol.search_trace = trace
    best_sol.diagnostics.update(
        {
            "final_step": final_step,
            "neighbor_certificate": neighbors,
            "evaluations": len(trace),
        }
    )
    return best_sol
