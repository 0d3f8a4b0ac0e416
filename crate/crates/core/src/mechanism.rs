//! Iterative coupling of the auction and the PHEV best responses, plus the
//! single-round greedy baseline.

use serde::{Deserialize, Serialize};

use crate::auction::{clear, Ask, BuyBid, Crossing, ParticipantId};
use crate::error::{MarketError, Result};
use crate::micro::{
    aggregate_supply, allocate_to_phevs, announce_price, phev_utility, validate_proposals,
    AggregatorState,
};
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialProposals {
    /// Every PHEV starts by offering its full capacity.
    #[default]
    AllMax,
    Zero,
    /// Use the `proposals` stored on each aggregator.
    Custom,
}

/// How much per-PHEV data the trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceDetail {
    /// Per-PHEV proposals and allocations for every iteration.
    #[default]
    Full,
    /// Per-PHEV data for the final iteration only.
    FinalIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    pub t_max: usize,
    /// Relative price-change threshold.
    pub xi: f64,
    pub initial_proposals: InitialProposals,
    pub trace_detail: TraceDetail,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            t_max: 50,
            xi: 1e-4,
            initial_proposals: InitialProposals::AllMax,
            trace_detail: TraceDetail::Full,
        }
    }
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 1 {
            return Err(MarketError::param("t_max", "must be at least 1"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(MarketError::param(
                "xi",
                format!("{} must be finite and > 0", self.xi),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PriceConverged,
    MaxIterations,
    NoTrade,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::PriceConverged => "price_converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::NoTrade => "no_trade",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorRecord<T> {
    pub id: ParticipantId,
    /// `A_n` submitted to the auction.
    pub offered: T,
    /// `Q_n` cleared by the auction.
    pub sold: T,
    /// `p_n` announced after clearing; `None` when the auction had no price.
    pub phev_price: Option<T>,
    /// `U_n`: summed PHEV utility at `p_n` and the allocations `q_i`.
    pub utility: T,
    /// `(P - p_n) * Q_n`, kept by the aggregator.
    pub commission: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhevGroupRecord<T> {
    /// `a_i` submitted in this iteration.
    pub proposals: Vec<T>,
    /// `q_i` allocated in this iteration.
    pub allocations: Vec<T>,
    pub utilities: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub t: usize,
    pub price: Option<T>,
    pub crossing: Option<Crossing>,
    pub traded: bool,
    pub aggregators: Vec<AggregatorRecord<T>>,
    /// One entry per aggregator, when the trace detail keeps it.
    pub phevs: Option<Vec<PhevGroupRecord<T>>>,
}

impl<T: Scalar> IterationRecord<T> {
    pub fn total_utility(&self) -> T {
        ordered_sum(self.aggregators.iter().map(|a| a.utility))
    }

    pub fn mean_utility(&self) -> T {
        if self.aggregators.is_empty() {
            return T::zero();
        }
        self.total_utility() / T::from_usize(self.aggregators.len()).expect("count fits scalar")
    }

    pub fn total_sold(&self) -> T {
        ordered_sum(self.aggregators.iter().map(|a| a.sold))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismTrace<T> {
    pub iterations: Vec<IterationRecord<T>>,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl<T: Scalar> MechanismTrace<T> {
    pub fn last(&self) -> &IterationRecord<T> {
        self.iterations
            .last()
            .expect("a trace has at least one iteration")
    }

    /// Price of the last iteration that produced one.
    pub fn final_price(&self) -> Option<T> {
        self.iterations.iter().rev().find_map(|it| it.price)
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }

    /// Mean `U_n` over aggregators in the final iteration.
    pub fn mean_utility_per_aggregator(&self) -> T {
        self.last().mean_utility()
    }

    /// Re-checks the per-iteration feasibility conditions against the
    /// instance the trace was produced from.
    pub fn check_invariants(
        &self,
        buyers: &[BuyBid<T>],
        aggregators: &[AggregatorState<T>],
        config: &MechanismConfig,
    ) -> Result<()> {
        let fail = |msg: String| Err(MarketError::InvariantViolation(msg));
        if self.iterations.is_empty() || self.iterations.len() > config.t_max {
            return fail(format!(
                "trace has {} iterations for t_max {}",
                self.iterations.len(),
                config.t_max
            ));
        }
        let eps = T::lit(1e-9);
        let demand_cap = ordered_sum(buyers.iter().map(|b| b.quantity));
        for (idx, it) in self.iterations.iter().enumerate() {
            if it.t != idx + 1 {
                return fail(format!("iteration index {} at position {}", it.t, idx));
            }
            let total_sold = it.total_sold();
            if total_sold > demand_cap * (T::one() + eps) + eps {
                return fail(format!(
                    "t={}: sold {} exceeds total demand {}",
                    it.t, total_sold, demand_cap
                ));
            }
            for (rec, agg) in it.aggregators.iter().zip(aggregators) {
                if rec.sold > rec.offered {
                    return fail(format!(
                        "t={}: aggregator {} sold {} of {}",
                        it.t, rec.id, rec.sold, rec.offered
                    ));
                }
                if rec.sold > T::zero() {
                    let Some(price) = it.price else {
                        return fail(format!("t={}: trade without a price", it.t));
                    };
                    if agg.reservation_price > price {
                        return fail(format!(
                            "t={}: aggregator {} sold below its reservation price",
                            it.t, rec.id
                        ));
                    }
                }
                if rec.commission < T::zero() {
                    return fail(format!(
                        "t={}: negative commission for aggregator {}",
                        it.t, rec.id
                    ));
                }
            }
            if let Some(groups) = &it.phevs {
                for (group, rec) in groups.iter().zip(&it.aggregators) {
                    let allocated = ordered_sum(group.allocations.iter().copied());
                    if (allocated - rec.sold).abs() > eps * (T::one() + rec.sold) {
                        return fail(format!(
                            "t={}: PHEV allocations of aggregator {} do not add up",
                            it.t, rec.id
                        ));
                    }
                    if group
                        .allocations
                        .iter()
                        .zip(&group.proposals)
                        .any(|(q, a)| q > a || *q < T::zero())
                    {
                        return fail(format!(
                            "t={}: PHEV allocation outside [0, a_i] for aggregator {}",
                            it.t, rec.id
                        ));
                    }
                }
            }
        }
        if self.converged != (self.stop_reason == StopReason::PriceConverged) {
            return fail("converged flag disagrees with stop reason".into());
        }
        Ok(())
    }
}

/// `|P_t - P_prev| / |P_t| < xi`; a zero price counts as converged only
/// when the previous price was zero too.
pub fn has_converged<T: Scalar>(price: T, previous: T, xi: T) -> bool {
    if price == T::zero() {
        return previous == T::zero();
    }
    ((price - previous) / price).abs() < xi
}

/// Runs the market mechanism until the price settles, the auction stops
/// producing a price, or `t_max` rounds have been played.
///
/// Each round: aggregators submit `(S_n, A_n = sum a_i)`, the auction sets
/// `P(t)` and `Q_n`, every aggregator announces `p_n = gamma_n P(t)`, and
/// each PHEV best-responds to `p_n`; those responses are next round's
/// proposals. Reservation prices stay fixed. A round whose crossing leaves
/// the trading sets empty still has a price and the run continues.
pub fn run_market<T: Scalar>(
    buyers: &[BuyBid<T>],
    aggregators: &[AggregatorState<T>],
    config: &MechanismConfig,
) -> Result<MechanismTrace<T>> {
    config.validate()?;
    if buyers.is_empty() {
        return Err(MarketError::InvalidInput("no buyers".into()));
    }
    if aggregators.is_empty() {
        return Err(MarketError::InvalidInput("no aggregators".into()));
    }

    let mut proposals: Vec<Vec<T>> = match config.initial_proposals {
        InitialProposals::AllMax => aggregators
            .iter()
            .map(|a| a.phevs.iter().map(|p| p.a_max).collect())
            .collect(),
        InitialProposals::Zero => aggregators
            .iter()
            .map(|a| vec![T::zero(); a.phevs.len()])
            .collect(),
        InitialProposals::Custom => {
            for agg in aggregators {
                validate_proposals(&agg.phevs, &agg.proposals)?;
            }
            aggregators.iter().map(|a| a.proposals.clone()).collect()
        }
    };

    let xi = T::lit(config.xi);
    let mut iterations = Vec::new();
    let mut previous_price: Option<T> = None;

    let mut latest_groups = Vec::new();

    for t in 1..=config.t_max {
        let (mut record, groups) = play_round(t, buyers, aggregators, &proposals)?;
        match config.trace_detail {
            TraceDetail::Full => record.phevs = Some(groups),
            TraceDetail::FinalIteration => latest_groups = groups,
        }
        let price = record.price;
        iterations.push(record);

        let Some(price) = price else {
            return Ok(finish(iterations, latest_groups, StopReason::NoTrade));
        };
        if let Some(prev) = previous_price {
            if has_converged(price, prev, xi) {
                return Ok(finish(
                    iterations,
                    latest_groups,
                    StopReason::PriceConverged,
                ));
            }
        }
        previous_price = Some(price);

        for (agg, props) in aggregators.iter().zip(proposals.iter_mut()) {
            let p_n = announce_price(agg.gamma, price)?;
            *props = agg.best_responses(p_n);
        }
    }
    Ok(finish(iterations, latest_groups, StopReason::MaxIterations))
}

/// Single auction round in which every PHEV offers its full capacity.
pub fn run_greedy<T: Scalar>(
    buyers: &[BuyBid<T>],
    aggregators: &[AggregatorState<T>],
) -> Result<MechanismTrace<T>> {
    let config = MechanismConfig {
        t_max: 1,
        initial_proposals: InitialProposals::AllMax,
        ..MechanismConfig::default()
    };
    run_market(buyers, aggregators, &config)
}

/// `latest_groups` is non-empty only in final-iteration mode.
fn finish<T: Scalar>(
    mut iterations: Vec<IterationRecord<T>>,
    latest_groups: Vec<PhevGroupRecord<T>>,
    stop_reason: StopReason,
) -> MechanismTrace<T> {
    if let Some(last) = iterations.last_mut() {
        if last.phevs.is_none() {
            last.phevs = Some(latest_groups);
        }
    }
    MechanismTrace {
        converged: stop_reason == StopReason::PriceConverged,
        iterations,
        stop_reason,
    }
}

fn play_round<T: Scalar>(
    t: usize,
    buyers: &[BuyBid<T>],
    aggregators: &[AggregatorState<T>],
    proposals: &[Vec<T>],
) -> Result<(IterationRecord<T>, Vec<PhevGroupRecord<T>>)> {
    let offered: Vec<T> = proposals.iter().map(|p| aggregate_supply(p)).collect();
    let asks: Vec<Ask<T>> = aggregators
        .iter()
        .zip(&offered)
        .map(|(agg, &a_n)| Ask {
            seller: agg.id,
            reservation_price: agg.reservation_price,
            quantity: a_n,
        })
        .collect();
    let outcome = clear(&asks, buyers);

    let mut records = Vec::with_capacity(aggregators.len());
    let mut groups = Vec::with_capacity(aggregators.len());
    for ((agg, props), &a_n) in aggregators.iter().zip(proposals).zip(&offered) {
        let sold = outcome.sold_by(agg.id).min(a_n);
        let allocations = allocate_to_phevs(props, sold)?;
        let phev_price = match outcome.price {
            Some(price) => Some(announce_price(agg.gamma, price)?),
            None => None,
        };
        let utilities: Vec<T> = match phev_price {
            Some(p_n) => agg
                .phevs
                .iter()
                .zip(&allocations)
                .map(|(phev, &q)| phev_utility(&phev.cost, p_n, q))
                .collect(),
            None => vec![T::zero(); allocations.len()],
        };
        let commission = match (outcome.price, phev_price) {
            (Some(price), Some(p_n)) => (price - p_n) * sold,
            _ => T::zero(),
        };
        records.push(AggregatorRecord {
            id: agg.id,
            offered: a_n,
            sold,
            phev_price,
            utility: ordered_sum(utilities.iter().copied()),
            commission,
        });
        groups.push(PhevGroupRecord {
            proposals: props.clone(),
            allocations,
            utilities,
        });
    }

    let record = IterationRecord {
        t,
        price: outcome.price,
        crossing: outcome.crossing,
        traded: outcome.traded,
        aggregators: records,
        phevs: None,
    };
    Ok((record, groups))
}
