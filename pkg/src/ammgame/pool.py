"""Constant-product pool mechanics.

A pool holds reserves (X, Y) with invariant k = X*Y and quotes the spot price
Y/X. Trades run in two stages: the invariant is enforced against the
fee-credited leg phi*dx (phi = 1 - tau), then the full dx enters the reserve,
which inflates the invariant. With a liquidity provider adding or removing at
the current ratio, prices are quoted against the LP-adjusted reserves; with
arbitrage and trader flow on top, the running ETH reserve decomposes into
adjusted reserve + arbitrage impact - mean trader impact.

Everything here is plain scalar arithmetic (no numpy), deliberately: the same
functions run on ``fractions.Fraction`` inputs, which is how the test oracles
verify the algebra exactly.
"""

from dataclasses import dataclass

from .errors import DegenerateReserves, InvalidParameter

# Reserve floor, relative to the initial reserve: below this a state is
# treated as degenerate rather than clamped.
EPS_RESERVE_FACTOR = 1e-9

# Tolerance for the stored invariant against x*y after updates.
EPS_INVARIANT_REL = 1e-12


@dataclass(frozen=True)
class PoolState:
    """Constant-product pool snapshot: reserves, invariant, fee."""

    x_reserve: float
    y_reserve: float
    invariant_k: float
    fee_tau: float
    phi: float

    def __post_init__(self):
        if not self.x_reserve > 0:
            raise InvalidParameter(f"x_reserve must be positive, got {self.x_reserve}")
        if not self.y_reserve > 0:
            raise InvalidParameter(f"y_reserve must be positive, got {self.y_reserve}")
        if not (0 <= self.fee_tau < 1):
            raise InvalidParameter(f"fee_tau must lie in [0, 1), got {self.fee_tau}")
        if not (0 < self.phi <= 1):
            raise InvalidParameter(f"phi must lie in (0, 1], got {self.phi}")
        if abs(self.phi - (1 - self.fee_tau)) > EPS_INVARIANT_REL:
            raise InvalidParameter("phi must equal 1 - fee_tau")
        drift = abs(self.invariant_k - self.x_reserve * self.y_reserve)
        if drift > EPS_INVARIANT_REL * abs(self.invariant_k):
            raise InvalidParameter(
                f"invariant_k={self.invariant_k} inconsistent with reserves "
                f"(x*y={self.x_reserve * self.y_reserve})"
            )


def make_pool(x0, y0, tau):
    """Open a pool with reserves (x0, y0) and fee tau."""
    return PoolState(
        x_reserve=x0, y_reserve=y0, invariant_k=x0 * y0, fee_tau=tau, phi=1 - tau
    )


@dataclass(frozen=True)
class ReserveDecomposition:
    """Running ETH reserve split into its three sources.

    ``lp_adjusted_x``/``lp_adjusted_y`` are the reserves after cumulative LP
    action, ``arb_impact`` the accumulated arbitrage inflow, and
    ``trader_impact`` the accumulated mean trader outflow.
    """

    lp_adjusted_x: float
    lp_adjusted_y: float
    arb_impact: float
    trader_impact: float


def spot_price(pool: PoolState):
    """Marginal price of ETH in USDT implied by the reserve ratio."""
    return pool.y_reserve / pool.x_reserve


def execution_price(k0, x_adj, delta_x, phi):
    """Price at which a net flow ``delta_x`` executes against adjusted reserves.

    The two-stage trade leaves the price k0 / ((x_adj + phi*dx) * (x_adj + dx)).
    ``delta_x`` is signed: positive for ETH entering the pool.
    """
    a = x_adj + phi * delta_x
    b = x_adj + delta_x
    if a <= 0 or b <= 0:
        raise DegenerateReserves(
            f"trade of {delta_x} would overdraw the pool (factors {a}, {b})"
        )
    return k0 / (a * b)


def quote_trade(pool: PoolState, x_adj, y_adj, delta_x):
    """USDT leg and post-trade invariant for a signed ETH trade.

    Stage 1 prices the trade on the fee-credited leg:
        delta_y = y_adj - k0 / (x_adj + phi*delta_x)
    Stage 2 admits the full delta_x, so the invariant becomes
        k_new = k0 * (x_adj + delta_x) / (x_adj + phi*delta_x),
    strictly increasing in delta_x whenever tau > 0 and equal to k0 at tau = 0.

    Returns (delta_y, new_invariant). delta_y > 0 means USDT leaves the pool.
    """
    k0 = pool.invariant_k
    phi = pool.phi
    a = x_adj + phi * delta_x
    b = x_adj + delta_x
    floor = EPS_RESERVE_FACTOR * x_adj
    if a <= floor or b <= floor:
        raise DegenerateReserves(
            f"trade of {delta_x} would empty the pool (factors {a}, {b})"
        )
    delta_y = y_adj - k0 / a
    # ratio first: at phi == 1 this is exactly 1.0 and k_new == k0 bit-for-bit
    new_invariant = k0 * (b / a)
    return delta_y, new_invariant


def slippage(alpha, x_total):
    """Execution-price degradation for a flow ``alpha`` against reserve depth.

    Signed fraction alpha / x_total; an infinite depth (slippage disabled)
    yields exactly 0.
    """
    if x_total != x_total or x_total <= 0:  # NaN or nonpositive
        raise DegenerateReserves(f"reserve depth must be positive, got {x_total}")
    return alpha / x_total


def adjusted_reserves(lp_control_path, price_path, t_index, x0, y0, dt):
    """Reserves after cumulative LP deposits/withdrawals at the running ratio.

    Left-endpoint rule on a uniform grid: contributions from steps strictly
    before ``t_index``. Accepts any scalar type supporting + and * (floats in
    production, Fractions in the exact oracles).
    """
    if t_index < 0 or t_index > len(lp_control_path):
        raise InvalidParameter(f"t_index {t_index} outside the sampled path")
    x_adj = x0 + sum(lp_control_path[s] * dt for s in range(t_index))
    y_adj = y0 + sum(lp_control_path[s] * price_path[s] * dt for s in range(t_index))
    if x_adj <= EPS_RESERVE_FACTOR * x0 or y_adj <= EPS_RESERVE_FACTOR * y0:
        raise DegenerateReserves(
            f"LP path drains the pool by step {t_index} (x_adj={x_adj}, y_adj={y_adj})"
        )
    return x_adj, y_adj


def total_eth_reserves(decomp: ReserveDecomposition):
    """Running ETH reserve: LP-adjusted stock plus arbitrage minus trader flow."""
    total = decomp.lp_adjusted_x + decomp.arb_impact - decomp.trader_impact
    if total <= 0:
        raise DegenerateReserves(f"total ETH reserve nonpositive: {total}")
    return total
