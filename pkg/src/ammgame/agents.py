"""Agent state dynamics and running rewards.

Three kinds of agents act on the pool:

* small traders, each holding (X^i, Y^i), trading at rate alpha with a
  slippage discount S = alpha / X_total and a fee wedge (1 + phi^2)/(2 phi)
  on the USDT leg;
* one liquidity provider moving (X^LP, Y^LP) in and out at the spot ratio,
  whose pool-share value Z^LP drains at rate 2 * alpha^LP * P;
* arbitrageurs, present only through the aggregate drain rate fed in from the
  lvr module.

In the population limit the traders interact through the flow of their control
law: the cumulative net trade flow H (arbitrage drain minus mean control,
left-point quadrature) shifts the execution-price denominators, compressed
into the factor G = 1 / ((x_adj + H)(x_adj + phi*H)). Both running rewards are
the marked-to-pool wealth drifts written in terms of (H, G, mean control).

The LP reward equals the LP's ETH stock times the price drift identically;
``lp_running_reward`` is coded that way so the equality is structural, not a
test artifact. The trader reward credits, on top of the wealth drift implied
by its stated inventory dynamics, the slippage-adjusted traded notional
alpha*P*(1 - S); the engine's consistency checks account for that offset
explicitly.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateReserves, InvalidParameter
from .pool import EPS_RESERVE_FACTOR, slippage


@dataclass(frozen=True)
class TraderState:
    """One trader's inventories; both legs may go negative (shorts allowed)."""

    x_inventory: float
    y_inventory: float


@dataclass(frozen=True)
class LPState:
    """Liquidity provider inventories, pool-share value, cumulative control."""

    x_inventory: float
    y_inventory: float
    pool_share_value: float
    cumulative_control: float


@dataclass(frozen=True)
class ControlLaw:
    """Discrete distribution over control atoms."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.shape != weights.shape or atoms.ndim != 1:
            raise InvalidParameter("atoms and weights must be 1-d and congruent")
        if np.any(weights < 0):
            raise InvalidParameter("control-law weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"weights must sum to 1, got {weights.sum()!r}")

    def mean(self):
        return float(self.atoms @ self.weights)


@dataclass(frozen=True)
class MeanFieldAggregates:
    """Population-level quantities entering the running rewards at one instant."""

    mean_control: float
    h_q: float
    g_factor: float


def trader_drift(alpha, p, phi, x_total):
    """Inventory drift rates (dx, dy) for a trader flowing at rate alpha.

    The ETH leg moves one-for-one; the USDT leg pays the fee wedge
    (1 + phi^2)/(2 phi) on the slippage-discounted notional. Pass
    ``x_total = inf`` to disable slippage.
    """
    slip = slippage(alpha, x_total)
    wedge = (1.0 + phi * phi) / (2.0 * phi)
    return alpha, -alpha * (1.0 - slip) * wedge * p


def lp_state_step(state: LPState, alpha_lp, p, dt, noise=(0.0, 0.0, 0.0), vols=(0.0, 0.0, 0.0), pool_x0=None):
    """One Euler step of the LP state under control rate ``alpha_lp``.

    ``noise`` holds three Brownian increments (already scaled to N(0, dt));
    ``vols`` the matching volatilities. Deposits and withdrawals move both
    personal legs at the spot ratio and drain the pool share at 2*alpha*P.
    """
    if dt <= 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    new = replace(
        state,
        x_inventory=state.x_inventory + alpha_lp * dt + vols[0] * noise[0],
        y_inventory=state.y_inventory + alpha_lp * p * dt + vols[1] * noise[1],
        pool_share_value=state.pool_share_value - 2.0 * alpha_lp * p * dt + vols[2] * noise[2],
        cumulative_control=state.cumulative_control + alpha_lp * dt,
    )
    if pool_x0 is not None and pool_x0 + new.cumulative_control <= EPS_RESERVE_FACTOR * pool_x0:
        raise DegenerateReserves(
            f"LP withdrawals empty the pool (x0 + S = {pool_x0 + new.cumulative_control})"
        )
    return new


def cumulative_flow_impact(lvr_rates, mean_controls, dt):
    """Net trade-flow path H: left-point quadrature of (drain rate - mean control).

    Returns an array one longer than the inputs; H[0] = 0.
    """
    lvr_rates = np.asarray(lvr_rates, dtype=float)
    mean_controls = np.asarray(mean_controls, dtype=float)
    h = np.empty(lvr_rates.shape[0] + 1)
    h[0] = 0.0
    np.cumsum((lvr_rates - mean_controls) * dt, out=h[1:])
    return h


def g_factor(x_adj, h, phi):
    """Reciprocal product of the two execution-price denominators."""
    a = x_adj + phi * h
    b = x_adj + h
    if a <= 0 or b <= 0:
        raise DegenerateReserves(f"price denominators nonpositive (a={a}, b={b})")
    return 1.0 / (a * b)


def mean_field_aggregates(q_flow, lvr_rate_path, t_index, dt, x_adj, phi):
    """Aggregates (mean control, H, G) at grid index ``t_index``.

    ``q_flow`` is a sequence of ControlLaw slices; ``lvr_rate_path`` the
    matching drain rates. H uses the left-point rule over steps before
    ``t_index``.
    """
    if t_index < 0 or t_index > len(q_flow):
        raise InvalidParameter(f"t_index {t_index} outside the flow")
    means = [law.mean() for law in q_flow[:t_index]]
    h = float(
        sum(lvr_rate_path[s] * dt for s in range(t_index)) - sum(m * dt for m in means)
    )
    current = q_flow[min(t_index, len(q_flow) - 1)].mean() if len(q_flow) else 0.0
    return MeanFieldAggregates(
        mean_control=float(current), h_q=h, g_factor=g_factor(x_adj, h, phi)
    )


def price_drift(x_adj, delta_x, alpha_lp, delta_rate, phi, k0):
    """Time derivative of the execution price at the current state.

    ``delta_x`` is the accumulated net trade flow and ``delta_rate`` its time
    derivative under the caller's sign convention. With A = x_adj + phi*delta,
    B = x_adj + delta, the rate is -k0 (A'B + AB') / (AB)^2.
    """
    a = x_adj + phi * delta_x
    b = x_adj + delta_x
    if a <= 0 or b <= 0:
        raise DegenerateReserves(f"price denominators nonpositive (a={a}, b={b})")
    a_rate = alpha_lp + phi * delta_rate
    b_rate = alpha_lp + delta_rate
    ab = a * b
    return -k0 * (a_rate * b + a * b_rate) / (ab * ab)


def trader_running_reward(trader_x, aggregates: MeanFieldAggregates, alpha, lp_alpha, x_adj, phi, k0, x_total):
    """Wealth drift credited to a trader holding ``trader_x`` and flowing ``alpha``.

    Position term: trader_x times the price drift driven by the LP rate and
    the mean control. Trade terms: alpha*k0*G plus the fee-and-slippage
    correction alpha*k0*G*(1 - S)*(1 - (1+phi^2)/(2 phi)), which vanishes at
    phi = 1 with no slippage.
    """
    pd = price_drift(x_adj, aggregates.h_q, lp_alpha, aggregates.mean_control, phi, k0)
    slip = slippage(alpha, x_total)
    wedge = (1.0 + phi * phi) / (2.0 * phi)
    akg = alpha * k0 * aggregates.g_factor
    return trader_x * pd + akg + akg * (1.0 - slip) * (1.0 - wedge)


def lp_running_reward(lp_x, alpha_lp, aggregates: MeanFieldAggregates, x_adj, phi, k0):
    """Wealth drift credited to the LP: its ETH stock times the price drift."""
    pd = price_drift(x_adj, aggregates.h_q, alpha_lp, aggregates.mean_control, phi, k0)
    return lp_x * pd


def terminal_cost(x, c_terminal):
    """Quadratic terminal inventory penalty c * x^2."""
    if c_terminal < 0:
        raise InvalidParameter(f"terminal weight must be nonnegative, got {c_terminal}")
    return c_terminal * x * x
