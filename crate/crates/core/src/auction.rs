//! Macro-layer trade-reduction double auction.
//!
//! Sellers (aggregators) submit a reservation price and a quantity, buyers
//! submit a bid and a requested quantity. Participants are ordered, equal
//! prices are merged into virtual participants, and the crossing of the
//! cumulative supply and demand step curves gives the marginal seller `L`
//! and marginal buyer `M`. Sellers `1..L-1` and buyers `1..M-1` trade at
//! `(S_L + B_M) / 2`; the marginal pair is excluded.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParticipantId(pub usize);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A seller's offer: reservation price `S_n` ($/MWh) and quantity `A_n` (MWh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ask<T> {
    pub seller: ParticipantId,
    pub reservation_price: T,
    pub quantity: T,
}

impl<T: Scalar> Ask<T> {
    pub fn new(seller: ParticipantId, reservation_price: T, quantity: T) -> Result<Self> {
        check_price("reservation_price", reservation_price)?;
        check_quantity(quantity)?;
        Ok(Ask {
            seller,
            reservation_price,
            quantity,
        })
    }
}

/// A buyer's bid `B_k` ($/MWh) for quantity `X_k` (MWh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuyBid<T> {
    pub buyer: ParticipantId,
    pub bid: T,
    pub quantity: T,
}

impl<T: Scalar> BuyBid<T> {
    pub fn new(buyer: ParticipantId, bid: T, quantity: T) -> Result<Self> {
        check_price("bid", bid)?;
        check_quantity(quantity)?;
        Ok(BuyBid {
            buyer,
            bid,
            quantity,
        })
    }
}

fn check_price<T: Scalar>(name: &'static str, price: T) -> Result<()> {
    if !price.is_finite() || price < T::zero() {
        return Err(MarketError::param(
            name,
            format!("{price} is not a finite non-negative price"),
        ));
    }
    Ok(())
}

fn check_quantity<T: Scalar>(quantity: T) -> Result<()> {
    if !quantity.is_finite() || quantity < T::zero() {
        return Err(MarketError::param(
            "quantity",
            format!("{quantity} is not a finite non-negative quantity"),
        ));
    }
    Ok(())
}

/// One entry of the ordered book. Participants quoting exactly the same
/// price are merged; `members` keeps each original id with its quantity,
/// in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedParticipant<T> {
    pub price: T,
    pub quantity: T,
    pub members: Vec<(ParticipantId, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedBook<T> {
    /// Ascending reservation price.
    pub asks: Vec<MergedParticipant<T>>,
    /// Descending bid.
    pub bids: Vec<MergedParticipant<T>>,
}

/// Orders asks ascending and bids descending, drops zero-quantity entries
/// and merges equal prices into virtual participants.
pub fn order_and_merge<T: Scalar>(asks: &[Ask<T>], bids: &[BuyBid<T>]) -> OrderedBook<T> {
    let asks = merge_side(
        asks.iter()
            .map(|a| (a.reservation_price, a.seller, a.quantity)),
        false,
    );
    let bids = merge_side(bids.iter().map(|b| (b.bid, b.buyer, b.quantity)), true);
    OrderedBook { asks, bids }
}

fn merge_side<T: Scalar>(
    entries: impl Iterator<Item = (T, ParticipantId, T)>,
    descending: bool,
) -> Vec<MergedParticipant<T>> {
    let mut entries: Vec<_> = entries.filter(|(_, _, q)| *q > T::zero()).collect();
    entries.sort_by(|a, b| {
        let by_price = a.0.partial_cmp(&b.0).expect("prices are finite");
        let by_price = if descending {
            by_price.reverse()
        } else {
            by_price
        };
        by_price.then(a.1.cmp(&b.1))
    });

    let mut merged: Vec<MergedParticipant<T>> = Vec::with_capacity(entries.len());
    for (price, id, quantity) in entries {
        match merged.last_mut() {
            Some(last) if last.price == price => {
                last.quantity = last.quantity + quantity;
                last.members.push((id, quantity));
            }
            _ => merged.push(MergedParticipant {
                price,
                quantity,
                members: vec![(id, quantity)],
            }),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Supply,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<T> {
    /// Cumulative quantity at the right end of the step.
    pub cumulative: T,
    pub price: T,
    /// Index of the (merged) participant in the ordered book.
    pub participant: usize,
}

/// Piecewise-constant cumulative supply or demand curve. Step `j` spans
/// `(cumulative[j-1], cumulative[j]]` at `price[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve<T> {
    pub side: Side,
    pub steps: Vec<Step<T>>,
}

impl<T: Scalar> StepCurve<T> {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn total_quantity(&self) -> T {
        self.steps.last().map_or(T::zero(), |s| s.cumulative)
    }

    /// Quantity offered (supply) or requested (demand) at `price`: the
    /// cumulative quantity of every step whose price is acceptable.
    pub fn quantity_at(&self, price: T) -> T {
        let accepted = |step: &Step<T>| match self.side {
            Side::Supply => step.price <= price,
            Side::Demand => step.price >= price,
        };
        // Prices are monotone along the curve, so the accepted steps form a prefix.
        let n = self.steps.partition_point(accepted);
        if n == 0 {
            T::zero()
        } else {
            self.steps[n - 1].cumulative
        }
    }
}

fn build_curve<T: Scalar>(side: Side, ordered: &[MergedParticipant<T>]) -> StepCurve<T> {
    let mut cumulative = T::zero();
    let steps = ordered
        .iter()
        .enumerate()
        .map(|(participant, p)| {
            cumulative = cumulative + p.quantity;
            Step {
                cumulative,
                price: p.price,
                participant,
            }
        })
        .collect();
    StepCurve { side, steps }
}

pub fn build_supply_curve<T: Scalar>(ordered_asks: &[MergedParticipant<T>]) -> StepCurve<T> {
    build_curve(Side::Supply, ordered_asks)
}

pub fn build_demand_curve<T: Scalar>(ordered_bids: &[MergedParticipant<T>]) -> StepCurve<T> {
    build_curve(Side::Demand, ordered_bids)
}

/// Marginal seller `L` and buyer `M`, both 1-based ranks in the ordered book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub seller: usize,
    pub buyer: usize,
}

/// Walks both step curves in quantity order and returns the last pair of
/// steps at which the bid still covers the ask. Once one curve runs out,
/// the pair is extended along the other curve while prices still overlap
/// (the exhausted side behaves as a vertical step at `+inf` / `-inf`).
///
/// The result satisfies `B_M >= S_L` and `B_{M+1} < S_{L+1}` with
/// `S_{N+1} = +inf`, `B_{K+1} = -inf`. Returns `None` when either curve is
/// empty or `B_1 < S_1`.
pub fn find_intersection<T: Scalar>(
    supply: &StepCurve<T>,
    demand: &StepCurve<T>,
) -> Option<Crossing> {
    let (s, d) = (&supply.steps, &demand.steps);
    if s.is_empty() || d.is_empty() || d[0].price < s[0].price {
        return None;
    }

    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let (next_i, next_j) = if s[i].cumulative < d[j].cumulative {
            (i + 1, j)
        } else if d[j].cumulative < s[i].cumulative {
            (i, j + 1)
        } else {
            (i + 1, j + 1)
        };

        if next_i == s.len() {
            while j + 1 < d.len() && d[j + 1].price >= s[i].price {
                j += 1;
            }
            break;
        }
        if next_j == d.len() {
            while i + 1 < s.len() && s[i + 1].price <= d[j].price {
                i += 1;
            }
            break;
        }
        if d[next_j].price < s[next_i].price {
            break;
        }
        i = next_i;
        j = next_j;
    }

    Some(Crossing {
        seller: i + 1,
        buyer: j + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome<T> {
    /// `(S_L + B_M) / 2`; `None` when the curves do not cross.
    pub price: Option<T>,
    pub crossing: Option<Crossing>,
    /// `Q_n` for every submitted seller id (zero when not trading).
    pub seller_allocations: BTreeMap<ParticipantId, T>,
    /// `Y_k` for every submitted buyer id.
    pub buyer_allocations: BTreeMap<ParticipantId, T>,
    /// `Psi`: admitted supply in excess of admitted demand.
    pub oversupply: T,
    /// `Phi`: admitted demand in excess of admitted supply.
    pub undersupply: T,
    pub traded: bool,
    /// Set when the imbalance exceeded the quantity of the last admitted
    /// participant, so clipping spilled over to earlier participants.
    pub clipped_beyond_marginal: bool,
}

impl<T: Scalar> AuctionOutcome<T> {
    pub fn sold_by(&self, seller: ParticipantId) -> T {
        self.seller_allocations
            .get(&seller)
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn bought_by(&self, buyer: ParticipantId) -> T {
        self.buyer_allocations
            .get(&buyer)
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn total_sold(&self) -> T {
        crate::scalar::ordered_sum(self.seller_allocations.values().copied())
    }

    pub fn total_bought(&self) -> T {
        crate::scalar::ordered_sum(self.buyer_allocations.values().copied())
    }
}

/// Clears one auction round.
pub fn clear<T: Scalar>(asks: &[Ask<T>], bids: &[BuyBid<T>]) -> AuctionOutcome<T> {
    let mut outcome = AuctionOutcome {
        price: None,
        crossing: None,
        seller_allocations: zero_map(asks.iter().map(|a| a.seller)),
        buyer_allocations: zero_map(bids.iter().map(|b| b.buyer)),
        oversupply: T::zero(),
        undersupply: T::zero(),
        traded: false,
        clipped_beyond_marginal: false,
    };

    let book = order_and_merge(asks, bids);
    let supply = build_supply_curve(&book.asks);
    let demand = build_demand_curve(&book.bids);
    let Some(crossing) = find_intersection(&supply, &demand) else {
        return outcome;
    };
    let (l, m) = (crossing.seller, crossing.buyer);
    outcome.crossing = Some(crossing);
    outcome.price = Some((book.asks[l - 1].price + book.bids[m - 1].price) / T::two());

    if l == 1 || m == 1 {
        return outcome;
    }

    let admitted_supply = supply.steps[l - 2].cumulative;
    let admitted_demand = demand.steps[m - 2].cumulative;
    outcome.oversupply = (admitted_supply - admitted_demand).max(T::zero());
    outcome.undersupply = (admitted_demand - admitted_supply).max(T::zero());
    outcome.clipped_beyond_marginal = outcome.oversupply > book.asks[l - 2].quantity
        || outcome.undersupply > book.bids[m - 2].quantity;

    let sellers = &book.asks[..l - 1];
    let buyers = &book.bids[..m - 1];
    let seller_fill = fill_in_order(sellers, admitted_demand);
    let buyer_fill = fill_in_order(buyers, admitted_supply);
    demerge(sellers, &seller_fill, &mut outcome.seller_allocations);
    demerge(buyers, &buyer_fill, &mut outcome.buyer_allocations);
    outcome.traded = true;
    outcome
}

fn zero_map<T: Scalar>(ids: impl Iterator<Item = ParticipantId>) -> BTreeMap<ParticipantId, T> {
    ids.map(|id| (id, T::zero())).collect()
}

/// Serves admitted participants in book order up to `capacity`. Equivalent
/// to clipping the imbalance off the last admitted participant and, when
/// that is not enough, continuing backwards.
fn fill_in_order<T: Scalar>(admitted: &[MergedParticipant<T>], capacity: T) -> Vec<T> {
    let mut remaining = capacity;
    admitted
        .iter()
        .map(|p| {
            let take = p.quantity.min(remaining).max(T::zero());
            remaining = remaining - take;
            take
        })
        .collect()
}

/// Splits each virtual participant's allocation over its members in
/// proportion to their quantities; the last member absorbs rounding.
fn demerge<T: Scalar>(
    admitted: &[MergedParticipant<T>],
    filled: &[T],
    allocations: &mut BTreeMap<ParticipantId, T>,
) {
    for (participant, &amount) in admitted.iter().zip(filled) {
        let members = &participant.members;
        let mut assigned = T::zero();
        for (idx, &(id, quantity)) in members.iter().enumerate() {
            let share = if idx + 1 == members.len() {
                (amount - assigned).max(T::zero()).min(quantity)
            } else {
                amount * quantity / participant.quantity
            };
            assigned = assigned + share;
            let slot = allocations.entry(id).or_insert_with(T::zero);
            *slot = *slot + share;
        }
    }
}
