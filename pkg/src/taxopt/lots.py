"""Per-asset tax-lot ledger and least-tax-first-out (LTFO) sale accounting.

Holdings of one asset are a list of tax lots, each carrying share quantity,
per-share cost basis, and acquisition date. Selling realizes a capital gain
per lot at the long- or short-term rate; the LTFO policy consumes lots in
ascending order of their per-dollar tax rate, which minimizes the immediate
tax bill of a sale of any given size.

All types are immutable values and all operations are pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from datetime import date

from .errors import InvalidDateError, OversellError

MONEY_TOL = 1e-9  # absolute tolerance for dollar comparisons


class Term(enum.Enum):
    LONG = "long"
    SHORT = "short"


@dataclass(frozen=True)
class TaxParameters:
    """Long/short capital-gains rates and the holding-period boundary.

    Rates are fractions with 0 < long_rate <= short_rate < 1. A lot is long
    term when its acquisition date advanced by ``long_term_years`` calendar
    years is strictly before the trade date.
    """

    long_rate: float = 0.238
    short_rate: float = 0.408
    long_term_years: int = 1

    def __post_init__(self):
        if not (0.0 < self.long_rate <= self.short_rate < 1.0):
            raise ValueError(
                f"rates must satisfy 0 < long_rate <= short_rate < 1, "
                f"got {self.long_rate}, {self.short_rate}"
            )

    def rate(self, term: Term) -> float:
        return self.long_rate if term is Term.LONG else self.short_rate


@dataclass(frozen=True)
class TaxLot:
    """A parcel of shares acquired together."""

    lot_id: str
    quantity: float  # shares, >= 0; fractional shares allowed
    basis: float  # dollars per share, > 0
    acquired: date

    def __post_init__(self):
        if self.quantity < 0:
            raise ValueError(f"lot {self.lot_id}: negative quantity {self.quantity}")
        if self.basis <= 0:
            raise ValueError(f"lot {self.lot_id}: basis must be positive, got {self.basis}")


@dataclass(frozen=True)
class AssetPosition:
    """Current price plus the tax lots held of one asset."""

    asset_id: str
    price: float  # dollars per share, > 0
    lots: tuple[TaxLot, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.price <= 0:
            raise ValueError(f"{self.asset_id}: price must be positive, got {self.price}")
        object.__setattr__(self, "lots", tuple(self.lots))
        ids = [lot.lot_id for lot in self.lots]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.asset_id}: duplicate lot ids")

    @property
    def shares(self) -> float:
        return sum(lot.quantity for lot in self.lots)

    @property
    def holding(self) -> float:
        """Dollar value of the position at the current price."""
        return self.price * self.shares


@dataclass(frozen=True)
class SellAllocation:
    """Dollar amounts sold from each lot, in consumption order."""

    entries: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(k), float(v)) for k, v in self.entries))

    @property
    def total(self) -> float:
        return sum(v for _, v in self.entries)


def _anniversary(acquired: date, years: int) -> date:
    # Feb 29 anniversaries clamp to Feb 28 in non-leap years.
    try:
        return acquired.replace(year=acquired.year + years)
    except ValueError:
        return acquired.replace(year=acquired.year + years, day=28)


def classify_term(lot: TaxLot, asof: date, params: TaxParameters) -> Term:
    """Long term iff the lot was acquired more than the threshold before asof."""
    if asof < lot.acquired:
        raise InvalidDateError(
            f"lot {lot.lot_id}: asof {asof} precedes acquisition {lot.acquired}"
        )
    return Term.LONG if _anniversary(lot.acquired, params.long_term_years) < asof else Term.SHORT


def lot_tax_rate(lot: TaxLot, price: float, term: Term, params: TaxParameters) -> float:
    """Tax owed per dollar of the lot sold: rate * (1 - basis/price).

    Negative when the lot trades at a loss (basis above price).
    """
    if price <= 0:
        raise ValueError(f"price must be positive, got {price}")
    return params.rate(term) * (1.0 - lot.basis / price)


def _ordered_lots(pos: AssetPosition, asof: date, params: TaxParameters):
    """Lots with their tax rates, in LTFO consumption order.

    Ties in the rate break on earliest acquisition, then lot id, so replays
    are deterministic.
    """
    rated = [
        (lot_tax_rate(lot, pos.price, classify_term(lot, asof, params), params), lot)
        for lot in pos.lots
    ]
    rated.sort(key=lambda rl: (rl[0], rl[1].acquired, rl[1].lot_id))
    return rated


def ltfo_allocate(
    pos: AssetPosition, sell_dollars: float, asof: date, params: TaxParameters
) -> SellAllocation:
    """Split a sale across lots, cheapest tax rate first.

    Greedy consumption in ascending rate order minimizes the total tax of the
    sale; raises OversellError if the request exceeds the position value.
    """
    if sell_dollars < 0:
        raise ValueError(f"sell_dollars must be >= 0, got {sell_dollars}")
    if sell_dollars > pos.holding + MONEY_TOL:
        raise OversellError(
            f"{pos.asset_id}: cannot sell {sell_dollars:.2f} of a {pos.holding:.2f} position"
        )
    remaining = min(sell_dollars, pos.holding)
    entries = []
    for _, lot in _ordered_lots(pos, asof, params):
        if remaining <= MONEY_TOL:
            break
        take = min(remaining, lot.quantity * pos.price)
        if take > 0:
            entries.append((lot.lot_id, take))
            remaining -= take
    return SellAllocation(tuple(entries))


def allocation_liability(
    pos: AssetPosition, alloc: SellAllocation, asof: date, params: TaxParameters
) -> float:
    """Tax liability of an explicit allocation: sum of rate * dollars per lot."""
    by_id = {lot.lot_id: lot for lot in pos.lots}
    total = 0.0
    for lot_id, dollars in alloc.entries:
        lot = by_id[lot_id]
        if dollars > lot.quantity * pos.price + MONEY_TOL:
            raise OversellError(f"{pos.asset_id}/{lot_id}: allocation exceeds lot value")
        term = classify_term(lot, asof, params)
        total += lot_tax_rate(lot, pos.price, term, params) * dollars
    return total


def tax_liability(
    pos: AssetPosition, trade_dollars: float, asof: date, params: TaxParameters
) -> float:
    """Immediate tax bill of trading ``trade_dollars`` of the asset.

    Zero for buys (no gain is realized); for sells, the LTFO-minimal sum of
    per-lot liabilities. Negative values are harvested losses.
    """
    if trade_dollars >= 0:
        return 0.0
    alloc = ltfo_allocate(pos, -trade_dollars, asof, params)
    return allocation_liability(pos, alloc, asof, params)


def liability_curve(pos: AssetPosition, asof: date, params: TaxParameters):
    """Tax liability as a piecewise-linear function of the trade amount.

    Domain [-holding, +inf). Identically zero on the buy side; on the sell
    side one linear segment per lot, slope -rate, in LTFO order outward from
    zero. Continuous with value 0 at 0, convex on each side of 0.
    """
    from .piecewise import PiecewiseQuadratic

    breaks = [0.0]
    coeffs = []
    value = 0.0
    edge = 0.0
    for rate, lot in _ordered_lots(pos, asof, params):
        width = lot.quantity * pos.price
        if width <= 0:
            continue
        new_edge = edge - width
        # on [new_edge, edge]: L(u) = value + rate * (edge - u)
        coeffs.append((0.0, -rate, value + rate * edge))
        breaks.append(new_edge)
        value += rate * width
        edge = new_edge
    breaks.reverse()
    coeffs.reverse()
    breaks.append(math.inf)
    coeffs.append((0.0, 0.0, 0.0))
    return PiecewiseQuadratic(breaks, coeffs)


def apply_trade(
    pos: AssetPosition,
    trade_dollars: float,
    trade_date: date,
    exec_price: float,
    params: TaxParameters,
    alloc: SellAllocation | None = None,
    lot_id: str | None = None,
) -> tuple[AssetPosition, float]:
    """Apply a buy or sell to the ledger; returns the new position and the
    realized tax liability.

    Buys open a new lot at the execution price. Sells consume lots per the
    given allocation (LTFO-computed at exec_price when omitted). Positions are
    repriced to exec_price.
    """
    if exec_price <= 0:
        raise ValueError(f"exec_price must be positive, got {exec_price}")
    pos = replace(pos, price=exec_price)
    if trade_dollars >= 0:
        lots = pos.lots
        if trade_dollars > 0:
            new_id = lot_id or f"{pos.asset_id}-{trade_date.isoformat()}"
            if any(lot.lot_id == new_id for lot in lots):
                suffix = sum(1 for lot in lots if lot.lot_id.startswith(new_id))
                new_id = f"{new_id}-{suffix}"
            lots = lots + (
                TaxLot(new_id, trade_dollars / exec_price, exec_price, trade_date),
            )
        return replace(pos, lots=lots), 0.0

    if alloc is None:
        alloc = ltfo_allocate(pos, -trade_dollars, trade_date, params)
    if abs(alloc.total + trade_dollars) > 1e-6 * max(1.0, -trade_dollars):
        raise ValueError(
            f"{pos.asset_id}: allocation total {alloc.total:.4f} does not match "
            f"sale {-trade_dollars:.4f}"
        )
    realized = allocation_liability(pos, alloc, trade_date, params)
    sold = dict.fromkeys((lot_id for lot_id, _ in alloc.entries), 0.0)
    for lot_id_, dollars in alloc.entries:
        sold[lot_id_] += dollars
    new_lots = []
    for lot in pos.lots:
        take = sold.get(lot.lot_id, 0.0)
        if take == 0.0:
            new_lots.append(lot)
            continue
        remaining_q = lot.quantity - take / exec_price
        if remaining_q < -1e-9:
            raise OversellError(f"{pos.asset_id}/{lot.lot_id}: negative resulting quantity")
        if remaining_q > 1e-12:
            new_lots.append(replace(lot, quantity=remaining_q))
    return replace(pos, lots=tuple(new_lots)), realized


def liquidate(
    pos: AssetPosition, asof: date, params: TaxParameters
) -> tuple[float, float]:
    """Sell the whole position at the current price.

    Returns (cash proceeds, realized tax liability).
    """
    proceeds = pos.holding
    liability = tax_liability(pos, -proceeds, asof, params)
    return proceeds, liability
