"""Day-ahead clearing of fleet export contracts against per-hhp demand.

Fleets offer contracts for single half-hour periods: a quantity of kW, a
per-kW bid, and a per-kW fine the fleet pays if it fails to deliver. The
platform cannot observe a fleet's real reliability, so it works with the
bound implied by the offer itself: a fleet that defaults forfeits the fine,
therefore an offer priced at ``bid`` with fine ``f`` is only rational when
the chance of delivering is at least ``(f - bid) / f``. That bound is the
success probability used everywhere below.

Clearing one day:

1. Offers are screened at intake (positive quantity, fine-consistent bid,
   hhp inside a peak block). Rejects are reported, never fatal.
2. For every offer the potential payment is fixed up front: the bid of the
   marginal contract in the demand covering set recomputed *without the
   offering fleet* - the price of the supply that would have had to serve
   had that fleet stayed away. When the wholesale backstop completes that
   cover, the payment is the wholesale price. The payment therefore never
   depends on the offer's own announced bid.
3. Offers whose potential payment falls below their own bid would be paid
   less than they asked; they are treated as withdrawn. Offers bidding
   above the wholesale price at their hhp can never beat the backstop and
   are likewise set aside.
4. A loop repeatedly picks, among hhps with positive residual expected
   demand, the hhp whose best remaining offer has the largest payment minus
   bid margin, and accepts the cheapest remaining offer there. Accepting an
   offer removes every other offer of the same fleet with the same quantity
   in the same peak block: one battery cannot be sold twice in one peak.
5. Whatever expected demand remains is bought at wholesale.

Money is pence per kW per hhp throughout; quantities are kW.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .market_data import HHPS_PER_DAY, DemandProfile, PeakBlock, PriceSeries

#: fleet id reserved for the always-available wholesale backstop
WHOLESALE_FLEET_ID = "__wholesale__"
#: offer id reserved for the wholesale backstop pseudo-offer
WHOLESALE_OFFER_ID = -1


@dataclass(frozen=True)
class Hhp:
    """Half-hour period of a 48-slot trading day."""

    index: int
    day: str | None = None

    def __post_init__(self):
        if not 0 <= self.index < HHPS_PER_DAY:
            raise ValidationError(
                f"hhp index must be in 0..{HHPS_PER_DAY - 1}, got {self.index}"
            )


@dataclass(frozen=True)
class ContractOffer:
    """One fleet's offer to export ``quantity_kw`` during one hhp.

    Attributes:
        id: unique serial within a book; the backstop uses -1.
        fleet_id: owner; all offers of one fleet are withdrawn together when
            computing replacement prices.
        hhp: delivery period.
        quantity_kw: offered export, must be positive (backstop: unlimited).
        penalty_pence_per_kw: fine per offered kW paid on default.
        bid_pence_per_kw: asked payment per kW. May be negative (negative
            import prices make negative marginal costs possible).
        is_wholesale_backstop: marks the synthetic always-available offer.
    """

    id: int
    fleet_id: str
    hhp: Hhp
    quantity_kw: float
    penalty_pence_per_kw: float
    bid_pence_per_kw: float
    is_wholesale_backstop: bool = False

    @property
    def success_probability(self) -> float:
        """Delivery probability bound implied by the bid; 1 for the backstop."""
        if self.is_wholesale_backstop:
            return 1.0
        return estimate_success_probability(self.bid_pence_per_kw, self.penalty_pence_per_kw)

    @property
    def expected_kw(self) -> float:
        if self.is_wholesale_backstop:
            return math.inf
        return self.quantity_kw * self.success_probability


@dataclass(frozen=True)
class FleetPrivateInfo:
    """A fleet's private per-kW cost and real delivery probability for one offer."""

    cost_pence_per_kw: float
    success_probability: float

    def __post_init__(self):
        if not 0.0 <= self.success_probability <= 1.0:
            raise ValidationError(
                f"success probability must lie in [0, 1], got {self.success_probability}"
            )


@dataclass(frozen=True)
class CoveringSet:
    """Cheapest-first prefix of offers whose expected kW covers an hhp's demand.

    ``contract_ids`` may end with the backstop id when offered supply runs
    out (or prices itself out) before the demand is covered; the backstop
    then tops up exactly the missing expected kW. ``marginal_bid`` is the
    per-kW bid of the last (most expensive) member, ``None`` for an empty
    set, and is what replacement pricing reads off this structure.
    """

    hhp: Hhp
    contract_ids: tuple[int, ...]
    expected_kw: float
    total_bid_cost_pence: float
    backstop_topup_kw: float = 0.0
    marginal_bid_pence_per_kw: float | None = None


@dataclass(frozen=True)
class AcceptedContract:
    offer: ContractOffer
    payment_pence_per_kw: float
    peak_block: PeakBlock


@dataclass(frozen=True)
class Allocation:
    """Result of clearing one day.

    ``eliminated`` holds (offer id, reason) pairs for intake rejects, offers
    withdrawn for pricing reasons, and duplicate-quantity removals. Offers
    that simply were not needed appear in neither list.
    """

    accepted: tuple[AcceptedContract, ...]
    residual_demand: DemandProfile
    eliminated: tuple[tuple[int, str], ...]
    potential_payments: dict[int, float] = field(repr=False, default_factory=dict)
    covering_set_evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "accepted": [
                {
                    "offer_id": a.offer.id,
                    "payment_pence_per_kw": a.payment_pence_per_kw,
                    "fine_pence_per_kw": a.offer.penalty_pence_per_kw,
                }
                for a in self.accepted
            ],
            "residual_demand_kw": list(self.residual_demand.kw),
            "eliminated": [
                {"offer_id": oid, "reason": reason} for oid, reason in self.eliminated
            ],
        }


@dataclass(frozen=True)
class MarketContext:
    """Everything a deviation experiment holds fixed: the rival book and the day."""

    offers: tuple[ContractOffer, ...]
    demand: DemandProfile
    partition: tuple[PeakBlock, ...]
    prices: PriceSeries


def estimate_success_probability(bid_pence_per_kw: float, penalty_pence_per_kw: float) -> float:
    """Lower bound on an offer's delivery probability implied by its own terms.

    A fleet that defaults pays the fine, so offering at ``bid`` under fine
    ``penalty`` is only profitable when delivery happens with probability at
    least ``(penalty - bid) / penalty``. Bids below zero clamp to certainty.

    Raises:
        ValidationError: ``penalty`` is not positive (no probability can be
            inferred) or ``bid`` exceeds it (the bound would be negative).
    """
    if penalty_pence_per_kw <= 0:
        raise ValidationError(
            f"a positive fine is required to bound the success probability, "
            f"got {penalty_pence_per_kw}"
        )
    if bid_pence_per_kw > penalty_pence_per_kw:
        raise ValidationError(
            f"bid {bid_pence_per_kw} above fine {penalty_pence_per_kw} implies a "
            f"negative success probability"
        )
    return min(1.0, (penalty_pence_per_kw - bid_pence_per_kw) / penalty_pence_per_kw)


def truthful_bid(
    cost_pence_per_kw: float, success_probability: float, penalty_pence_per_kw: float
) -> float:
    """Bid equal to the fleet's expected unit cost of holding the contract.

    Cost per kW plus the expected fine ``(1 - p) * penalty``: announcing this
    makes the offer's utility zero at the margin, which is the announcement
    the payment rule rewards.
    """
    if not 0.0 <= success_probability <= 1.0:
        raise ValidationError(
            f"success probability must lie in [0, 1], got {success_probability}"
        )
    if penalty_pence_per_kw < 0:
        raise ValidationError(f"fine must be non-negative, got {penalty_pence_per_kw}")
    return cost_pence_per_kw + (1.0 - success_probability) * penalty_pence_per_kw


def expected_covered_quantity(contracts) -> float:
    """Sum of quantity times success probability over ``contracts``."""
    return sum(o.quantity_kw * o.success_probability for o in contracts)


def make_wholesale_backstop(hhp: Hhp, price_pence_per_kw: float) -> ContractOffer:
    """The always-available wholesale offer: certain delivery, unlimited kW."""
    return ContractOffer(
        id=WHOLESALE_OFFER_ID,
        fleet_id=WHOLESALE_FLEET_ID,
        hhp=hhp,
        quantity_kw=math.inf,
        penalty_pence_per_kw=0.0,
        bid_pence_per_kw=price_pence_per_kw,
        is_wholesale_backstop=True,
    )


def demand_covering_set(
    hhp: Hhp,
    offers,
    demand_kw: float,
    wholesale_backstop: ContractOffer,
) -> CoveringSet:
    """Greedy cheapest-first cover of one hhp's expected demand.

    Offers are taken in ascending per-kW bid order (ties by serial, the
    backstop after real offers of equal price) until the summed expected kW
    reaches ``demand_kw``; the last contract may overshoot. Once the next
    candidate would cost more per kW than wholesale, the backstop instead
    tops up exactly the remainder. Zero demand yields the empty set.
    """
    if demand_kw <= 0:
        return CoveringSet(
            hhp=hhp, contract_ids=(), expected_kw=0.0, total_bid_cost_pence=0.0
        )
    backstop_bid = wholesale_backstop.bid_pence_per_kw
    candidates = sorted(
        (o for o in offers if not o.is_wholesale_backstop),
        key=lambda o: (o.bid_pence_per_kw, o.id),
    )
    chosen: list[int] = []
    covered = 0.0
    cost = 0.0
    marginal: float | None = None
    for offer in candidates:
        if covered >= demand_kw:
            break
        if offer.bid_pence_per_kw > backstop_bid:
            break  # wholesale finishes the job cheaper
        chosen.append(offer.id)
        covered += offer.quantity_kw * offer.success_probability
        cost += offer.bid_pence_per_kw * offer.quantity_kw
        marginal = offer.bid_pence_per_kw
    if covered >= demand_kw:
        return CoveringSet(
            hhp=hhp,
            contract_ids=tuple(chosen),
            expected_kw=covered,
            total_bid_cost_pence=cost,
            marginal_bid_pence_per_kw=marginal,
        )
    topup = demand_kw - covered
    chosen.append(wholesale_backstop.id)
    return CoveringSet(
        hhp=hhp,
        contract_ids=tuple(chosen),
        expected_kw=demand_kw,
        total_bid_cost_pence=cost + backstop_bid * topup,
        backstop_topup_kw=topup,
        marginal_bid_pence_per_kw=backstop_bid,
    )


def externality_payment(
    offer: ContractOffer,
    all_offers,
    demand_kw: float,
    wholesale_backstop: ContractOffer,
) -> float:
    """Per-kW payment carried by ``offer`` if it ends up accepted.

    The payment is the bid of the marginal member of the covering set built
    *without any offer from this fleet*: the supply that would have had to
    serve had the fleet not existed. When that cover needs the backstop, the
    payment is the wholesale price. Because the fleet's own announcements
    are excluded from the computation, the payment cannot be moved by the
    fleet's own bid. With zero demand there is nothing to replace and the
    offer's own bid is returned (such offers are never accepted anyway).
    """
    rivals = [
        o
        for o in all_offers
        if o.fleet_id != offer.fleet_id
        and not o.is_wholesale_backstop
        and o.hhp.index == offer.hhp.index
    ]
    cover = demand_covering_set(offer.hhp, rivals, demand_kw, wholesale_backstop)
    if cover.marginal_bid_pence_per_kw is None:
        return offer.bid_pence_per_kw
    return cover.marginal_bid_pence_per_kw


def _intake_reason(offer: ContractOffer, peak_indices: set[int]) -> str | None:
    """Why an offer cannot enter the book at all, or None if it can."""
    if offer.is_wholesale_backstop:
        return "the wholesale backstop cannot be offered through the book"
    if not offer.quantity_kw > 0 or not math.isfinite(offer.quantity_kw):
        return f"quantity must be a positive finite kW figure, got {offer.quantity_kw}"
    if offer.penalty_pence_per_kw <= 0:
        return (
            f"fine {offer.penalty_pence_per_kw} is not positive, no delivery "
            f"probability can be inferred"
        )
    if offer.bid_pence_per_kw > offer.penalty_pence_per_kw:
        return (
            f"bid {offer.bid_pence_per_kw} above fine {offer.penalty_pence_per_kw} "
            f"implies a negative delivery probability"
        )
    if offer.hhp.index not in peak_indices:
        return f"hhp {offer.hhp.index} is not inside any peak block"
    return None


def allocate(
    offers,
    demand: DemandProfile,
    partition,
    prices: PriceSeries,
) -> Allocation:
    """Clear one day's book against the demand profile.

    Args:
        offers: iterable of ContractOffer covering any subset of peak hhps.
        demand: per-hhp expected uncovered demand in kW.
        partition: peak/valley blocks of the day; only peak hhps trade.
        prices: day-ahead series supplying the wholesale price per hhp.

    Returns:
        Allocation with accepted contracts in acceptance order, the demand
        left for wholesale, elimination diagnostics, the potential payment
        fixed for every screened-in offer, and a count of covering set
        evaluations (a cheap proxy for the work done).
    """
    peak_blocks = [b for b in partition if b.label == "peak"]
    peak_indices = {i for b in peak_blocks for i in b.hhps}
    block_by_hhp = {i: b for b in peak_blocks for i in b.hhps}

    eliminated: list[tuple[int, str]] = []
    pool: list[ContractOffer] = []
    for offer in offers:
        reason = _intake_reason(offer, peak_indices)
        if reason is None:
            pool.append(offer)
        else:
            eliminated.append((offer.id, reason))

    by_hhp: dict[int, list[ContractOffer]] = {}
    for offer in pool:
        by_hhp.setdefault(offer.hhp.index, []).append(offer)

    # fix every offer's potential payment once, against the full screened book
    payments: dict[int, float] = {}
    evaluations = 0
    backstops: dict[int, ContractOffer] = {}
    for t, offers_t in by_hhp.items():
        hhp = offers_t[0].hhp
        backstops[t] = make_wholesale_backstop(hhp, prices[t])
        d = demand[t]
        if d <= 0:
            for o in offers_t:
                payments[o.id] = o.bid_pence_per_kw
            continue
        for fleet_id in sorted({o.fleet_id for o in offers_t}):
            rivals = [o for o in offers_t if o.fleet_id != fleet_id]
            cover = demand_covering_set(hhp, rivals, d, backstops[t])
            evaluations += 1
            marginal = cover.marginal_bid_pence_per_kw
            for o in offers_t:
                if o.fleet_id == fleet_id:
                    payments[o.id] = (
                        o.bid_pence_per_kw if marginal is None else marginal
                    )

    # static screening: an offer paid less than it asked is withdrawn, and one
    # bidding above wholesale can never beat the backstop
    eligible_by_hhp: dict[int, list[ContractOffer]] = {}
    for t, offers_t in by_hhp.items():
        if demand[t] <= 0:
            continue
        keep: list[ContractOffer] = []
        for o in sorted(offers_t, key=lambda o: o.id):
            if o.bid_pence_per_kw > prices[t]:
                eliminated.append(
                    (o.id, f"bid {o.bid_pence_per_kw} above the wholesale price {prices[t]} at hhp {t}")
                )
            elif payments[o.id] < o.bid_pence_per_kw:
                eliminated.append(
                    (
                        o.id,
                        f"potential payment {payments[o.id]} below the announced "
                        f"bid {o.bid_pence_per_kw}; treated as withdrawn",
                    )
                )
            else:
                keep.append(o)
        if keep:
            eligible_by_hhp[t] = keep

    # acceptance loop over per-hhp bid and margin orders, with lazy removal
    residual = {t: demand[t] for t in peak_indices}
    bid_order = {
        t: sorted(lst, key=lambda o: (o.bid_pence_per_kw, o.id))
        for t, lst in eligible_by_hhp.items()
    }
    margin_order = {
        t: sorted(
            lst,
            key=lambda o: (-(payments[o.id] - o.bid_pence_per_kw), o.bid_pence_per_kw, o.id),
        )
        for t, lst in eligible_by_hhp.items()
    }
    bid_ptr = {t: 0 for t in eligible_by_hhp}
    margin_ptr = {t: 0 for t in eligible_by_hhp}
    alive: dict[int, bool] = {o.id: True for lst in eligible_by_hhp.values() for o in lst}

    duplicates: dict[tuple[str, float, int], list[ContractOffer]] = {}
    for lst in eligible_by_hhp.values():
        for o in lst:
            key = (o.fleet_id, o.quantity_kw, block_by_hhp[o.hhp.index].hhps[0])
            duplicates.setdefault(key, []).append(o)

    accepted: list[AcceptedContract] = []
    hhp_order = sorted(eligible_by_hhp)
    while True:
        best_t = None
        best_margin = None
        for t in hhp_order:
            if residual[t] <= 0:
                continue
            order = margin_order[t]
            ptr = margin_ptr[t]
            while ptr < len(order) and not alive[order[ptr].id]:
                ptr += 1
            margin_ptr[t] = ptr
            if ptr >= len(order):
                continue
            head = order[ptr]
            margin = payments[head.id] - head.bid_pence_per_kw
            if best_margin is None or margin > best_margin:
                best_margin = margin
                best_t = t
        if best_t is None:
            break
        order = bid_order[best_t]
        ptr = bid_ptr[best_t]
        while ptr < len(order) and not alive[order[ptr].id]:
            ptr += 1
        bid_ptr[best_t] = ptr
        chosen = order[ptr]
        alive[chosen.id] = False
        block = block_by_hhp[best_t]
        accepted.append(
            AcceptedContract(
                offer=chosen,
                payment_pence_per_kw=payments[chosen.id],
                peak_block=block,
            )
        )
        residual[best_t] -= chosen.quantity_kw * chosen.success_probability
        key = (chosen.fleet_id, chosen.quantity_kw, block.hhps[0])
        for other in duplicates.get(key, ()):
            if other.id != chosen.id and alive[other.id]:
                alive[other.id] = False
                eliminated.append(
                    (
                        other.id,
                        f"fleet {chosen.fleet_id} already exports {chosen.quantity_kw:g} kW "
                        f"in this peak block (offer {chosen.id} accepted)",
                    )
                )

    residual_out = tuple(
        max(0.0, residual[i]) if i in peak_indices else demand[i]
        for i in range(HHPS_PER_DAY)
    )
    return Allocation(
        accepted=tuple(accepted),
        residual_demand=DemandProfile(kw=residual_out),
        eliminated=tuple(eliminated),
        potential_payments=payments,
        covering_set_evaluations=evaluations,
    )


_BOOK_FIELDS = {
    "id": int,
    "fleet_id": str,
    "date": str,
    "hhp_index": int,
    "quantity_kw": (int, float),
    "penalty_pence_per_kw": (int, float),
    "bid_pence_per_kw": (int, float),
}


def load_contract_book(path) -> tuple[ContractOffer, ...]:
    """Load an offer book from a JSON list of rows.

    Each row must carry id, fleet_id, date, hhp_index, quantity_kw,
    penalty_pence_per_kw and bid_pence_per_kw; an optional boolean
    is_wholesale_backstop passes through. Structural problems (missing or
    mistyped fields, duplicate or out-of-range ids) raise immediately,
    naming the offending row; economically unacceptable rows (bid above
    fine, non-positive quantities, ...) load fine and are rejected with a
    reason at allocation intake instead.

    Raises:
        ValidationError: the file is not a JSON list of well-formed rows.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, list):
        raise ValidationError(f"{path} must hold a JSON list of offer rows")
    offers: list[ContractOffer] = []
    seen: set[int] = set()
    for i, row in enumerate(raw):
        if not isinstance(row, dict):
            raise ValidationError(f"offer row {i} must be a JSON object")
        label = f"offer row {i}" if "id" not in row else f"offer id {row['id']}"
        for name, types in _BOOK_FIELDS.items():
            if name not in row:
                raise ValidationError(f"{label} is missing the {name!r} field")
            value = row[name]
            if isinstance(value, bool) or not isinstance(value, types):
                raise ValidationError(
                    f"{label} has a malformed {name!r} field: {value!r}"
                )
        if row["id"] in seen:
            raise ValidationError(f"offer id {row['id']} appears more than once")
        seen.add(row["id"])
        try:
            hhp = Hhp(index=row["hhp_index"], day=row["date"])
        except ValidationError as err:
            raise ValidationError(f"offer id {row['id']}: {err}") from err
        offers.append(
            ContractOffer(
                id=row["id"],
                fleet_id=row["fleet_id"],
                hhp=hhp,
                quantity_kw=float(row["quantity_kw"]),
                penalty_pence_per_kw=float(row["penalty_pence_per_kw"]),
                bid_pence_per_kw=float(row["bid_pence_per_kw"]),
                is_wholesale_backstop=bool(row.get("is_wholesale_backstop", False)),
            )
        )
    return tuple(offers)


def deviation_utility(
    offer: ContractOffer,
    announced_bid_pence_per_kw: float,
    private: FleetPrivateInfo,
    market: MarketContext,
) -> float:
    """Expected utility of announcing a given bid for one offer.

    Rivals' announcements stay fixed. The book is re-cleared with the
    offer's bid replaced; if the offer is accepted, the utility is the
    payment minus the fleet's true expected unit cost (cost plus expected
    fine under the *real* delivery probability), otherwise zero.
    """
    book = tuple(
        dataclasses.replace(o, bid_pence_per_kw=announced_bid_pence_per_kw)
        if o.id == offer.id
        else o
        for o in market.offers
    )
    allocation = allocate(book, market.demand, market.partition, market.prices)
    true_unit_cost = truthful_bid(
        private.cost_pence_per_kw,
        private.success_probability,
        offer.penalty_pence_per_kw,
    )
    for a in allocation.accepted:
        if a.offer.id == offer.id:
            return a.payment_pence_per_kw - true_unit_cost
    return 0.0
