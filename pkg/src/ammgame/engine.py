"""Seeded Euler-Maruyama simulation of the coupled market.

One step advances, in this order and all at left-point coefficients: trader
controls from the policy, the arbitrage drain rate l(P), the net trade-flow
rate, the price drift, running rewards, then the state updates (traders, LP,
adjusted reserves, flow, price). The price carries an optional common noise
sigma0 dW0; traders carry idiosyncratic noise; the LP carries three own
streams. Every stream is derived from (seed, stream kind, index), so a bundle
is a pure function of (seed, grid, population size) and any two runs with the
same inputs are bit-identical.

Reserve or price degeneracy aborts the run with the step index and offending
quantity attached to the exception; nothing is clamped.
"""

from dataclasses import dataclass, field

import numpy as np

from .agents import LPState, g_factor, lp_state_step, price_drift, terminal_cost
from .errors import DegenerateReserves, InvalidParameter
from .lvr import instantaneous_lvr
from .pool import EPS_RESERVE_FACTOR


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with ``steps`` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidParameter(f"steps must be >= 1, got {self.steps}")
        if not self.horizon > 0:
            raise InvalidParameter(f"horizon must be positive, got {self.horizon}")

    @property
    def dt(self):
        return self.horizon / self.steps

    def times(self):
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class NoiseBundle:
    """Brownian increments, already scaled to N(0, dt), one row per stream."""

    common: np.ndarray        # (steps,) price noise W0
    idiosyncratic: np.ndarray  # (n_traders, steps)
    lp: np.ndarray             # (3, steps) for the LP's X, Y, Z legs
    dt: float


def make_noise(seed, grid: TimeGrid, n_traders):
    """Deterministic noise bundle; trader stream i depends only on (seed, i)."""
    if n_traders < 0:
        raise InvalidParameter(f"n_traders must be >= 0, got {n_traders}")
    root = np.sqrt(grid.dt)
    common = _stream(seed, 0, 0, grid.steps) * root
    lp = np.stack([_stream(seed, 1, j, grid.steps) for j in range(3)]) * root
    idio = np.empty((n_traders, grid.steps))
    for i in range(n_traders):
        idio[i] = _stream(seed, 2, i, grid.steps)
    idio *= root
    return NoiseBundle(common=common, idiosyncratic=idio, lp=lp, dt=grid.dt)


def _stream(seed, kind, index, n):
    rng = np.random.default_rng(np.random.SeedSequence((seed, kind, index)))
    return rng.standard_normal(n)


def initial_trader_states(config, n_traders, seed):
    """Initial ETH inventories drawn from the configured law."""
    if config.trader_init_law == "point":
        return np.full(n_traders, config.trader_init_mean)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3, 0)))
    return config.trader_init_mean + config.trader_init_sd * rng.standard_normal(n_traders)


@dataclass
class SystemTrajectory:
    """Everything one simulation produced, sampled on the grid."""

    grid: TimeGrid
    seed: int
    price_path: np.ndarray
    x_adj_path: np.ndarray
    y_adj_path: np.ndarray
    delta_path: np.ndarray
    reserve_path: np.ndarray
    invariant_path: np.ndarray
    lvr_rate_path: np.ndarray
    lvr_cum_path: np.ndarray
    mean_control_path: np.ndarray
    trader_x: np.ndarray
    trader_y: np.ndarray
    trader_reward: np.ndarray
    trader_objectives: np.ndarray
    lp_x_path: np.ndarray
    lp_y_path: np.ndarray
    lp_z_path: np.ndarray
    lp_s_path: np.ndarray
    lp_reward_path: np.ndarray
    lp_realized_objective: float
    diagnostics: dict = field(default_factory=dict)


def _check_state(step, p, x_adj, y_adj, delta, x0, y0, phi):
    floor_x = EPS_RESERVE_FACTOR * x0
    floor_y = EPS_RESERVE_FACTOR * y0
    if not p > 0:
        raise DegenerateReserves(f"price nonpositive at step {step}: {p}", step=step, quantity=p)
    if x_adj <= floor_x:
        raise DegenerateReserves(
            f"adjusted ETH reserve exhausted at step {step}: {x_adj}", step=step, quantity=x_adj
        )
    if y_adj <= floor_y:
        raise DegenerateReserves(
            f"adjusted USDT reserve exhausted at step {step}: {y_adj}", step=step, quantity=y_adj
        )
    total = x_adj + delta
    if total <= floor_x:
        raise DegenerateReserves(
            f"total ETH reserve exhausted at step {step}: {total}", step=step, quantity=total
        )
    if x_adj + phi * delta <= floor_x:
        raise DegenerateReserves(
            f"fee-leg reserve exhausted at step {step}", step=step, quantity=x_adj + phi * delta
        )


def simulate(config, trader_policy, lp_control_path, seed, noise=None, n_traders=None, deviant_policy=None):
    """Run the coupled system forward.

    ``trader_policy`` maps (step index, inventory vector) to a control vector;
    ``deviant_policy``, if given, overrides player 0. ``lp_control_path`` is a
    per-step rate vector. A prebuilt ``noise`` bundle enables common-random-
    number comparisons; by default one is derived from ``seed``.
    """
    grid = TimeGrid(config.grid_horizon, config.grid_steps)
    dt = grid.dt
    m = int(config.engine_traders if n_traders is None else n_traders)
    lp_control_path = np.asarray(lp_control_path, dtype=float)
    if lp_control_path.shape != (grid.steps,):
        raise InvalidParameter(
            f"lp_control_path must have shape ({grid.steps},), got {lp_control_path.shape}"
        )
    if noise is None:
        noise = make_noise(seed, grid, m)
    if noise.idiosyncratic.shape[0] < m or noise.common.shape[0] != grid.steps:
        raise InvalidParameter("noise bundle does not cover this run")

    x0, y0 = config.pool_x0, config.pool_y0
    k0 = x0 * y0
    phi = 1.0 - config.pool_tau
    wedge = (1.0 + phi * phi) / (2.0 * phi)
    sign = 1.0 if config.model_flow_convention == "definition" else -1.0
    sigma_tr = config.trader_sigma
    sigma0 = config.external_sigma0
    arb_on = config.arbitrage_enabled
    slip_on = config.trader_slippage
    vols = (config.lp_sigma_x, config.lp_sigma_y, config.lp_sigma_z)

    n = grid.steps
    price = np.empty(n + 1)
    x_adj = np.empty(n + 1)
    y_adj = np.empty(n + 1)
    delta = np.empty(n + 1)
    k_path = np.empty(n + 1)
    lvr_rate = np.empty(n)
    lvr_cum = np.empty(n + 1)
    qbar_path = np.empty(n)
    tr_x = np.empty((m, n + 1))
    tr_y = np.empty((m, n + 1))
    tr_f = np.empty((m, n))
    lp_x = np.empty(n + 1)
    lp_y = np.empty(n + 1)
    lp_z = np.empty(n + 1)
    lp_s = np.empty(n + 1)
    lp_f = np.empty(n)

    price[0] = y0 / x0
    x_adj[0] = x0
    y_adj[0] = y0
    delta[0] = 0.0
    lvr_cum[0] = 0.0
    tr_x[:, 0] = initial_trader_states(config, m, seed)
    tr_y[:, 0] = 0.0
    lp = LPState(config.lp_x0, config.lp_y0, config.lp_z0, 0.0)
    lp_x[0], lp_y[0], lp_z[0], lp_s[0] = lp.x_inventory, lp.y_inventory, lp.pool_share_value, 0.0

    for t in range(n):
        p, xa, ya, dl = price[t], x_adj[t], y_adj[t], delta[t]
        _check_state(t, p, xa, ya, dl, x0, y0, phi)
        k_path[t] = k0 * (xa + dl) / (xa + phi * dl)

        alpha = np.asarray(trader_policy(t, tr_x[:, t]), dtype=float)
        if deviant_policy is not None:
            alpha = alpha.copy()
            alpha[0] = float(np.asarray(deviant_policy(t, tr_x[0:1, t]))[0])
        a_lp = lp_control_path[t]
        qbar = float(alpha.mean()) if m > 0 else 0.0
        ell = float(instantaneous_lvr(p, config.external_sigma, k0)) if arb_on else 0.0
        d_rate = sign * (ell - qbar)
        x_total = xa + dl
        g = g_factor(xa, dl, phi)
        pd_price = price_drift(xa, dl, a_lp, d_rate, phi, k0)
        pd_reward = price_drift(xa, dl, a_lp, qbar, phi, k0)

        slip = alpha / x_total if slip_on else np.zeros_like(alpha)
        akg = alpha * (k0 * g)
        tr_f[:, t] = tr_x[:, t] * pd_reward + akg + akg * (1.0 - slip) * (1.0 - wedge)
        lp_f[t] = lp.x_inventory * pd_reward
        qbar_path[t] = qbar
        lvr_rate[t] = ell
        lvr_cum[t + 1] = lvr_cum[t] + ell * dt

        tr_x[:, t + 1] = tr_x[:, t] + alpha * dt + sigma_tr * noise.idiosyncratic[:m, t]
        tr_y[:, t + 1] = tr_y[:, t] - alpha * (1.0 - slip) * wedge * p * dt
        lp = lp_state_step(lp, a_lp, p, dt, noise=noise.lp[:, t], vols=vols, pool_x0=x0)
        lp_x[t + 1], lp_y[t + 1] = lp.x_inventory, lp.y_inventory
        lp_z[t + 1], lp_s[t + 1] = lp.pool_share_value, lp.cumulative_control
        x_adj[t + 1] = xa + a_lp * dt
        y_adj[t + 1] = ya + a_lp * p * dt
        delta[t + 1] = dl + d_rate * dt
        price[t + 1] = p + pd_price * dt + sigma0 * noise.common[t]

    _check_state(n, price[n], x_adj[n], y_adj[n], delta[n], x0, y0, phi)
    k_path[n] = k0 * (x_adj[n] + delta[n]) / (x_adj[n] + phi * delta[n])

    objectives = tr_f.sum(axis=1) * dt - config.trader_terminal_weight * tr_x[:, n] ** 2
    lp_objective = float(
        lp_f.sum() * dt
        - terminal_cost(lp.x_inventory, config.lp_terminal_weight)
        - terminal_cost(lp.pool_share_value, config.lp_terminal_weight)
    )

    return SystemTrajectory(
        grid=grid,
        seed=int(seed),
        price_path=price,
        x_adj_path=x_adj,
        y_adj_path=y_adj,
        delta_path=delta,
        reserve_path=x_adj + delta,
        invariant_path=k_path,
        lvr_rate_path=lvr_rate,
        lvr_cum_path=lvr_cum,
        mean_control_path=qbar_path,
        trader_x=tr_x,
        trader_y=tr_y,
        trader_reward=tr_f,
        trader_objectives=objectives,
        lp_x_path=lp_x,
        lp_y_path=lp_y,
        lp_z_path=lp_z,
        lp_s_path=lp_s,
        lp_reward_path=lp_f,
        lp_realized_objective=lp_objective,
        diagnostics={"n_traders": m, "flow_sign": sign},
    )
