//! Micro layer: commission pricing, PHEV best responses, supply
//! aggregation and proportional re-allocation of sold energy.

use serde::{Deserialize, Serialize};

use crate::auction::ParticipantId;
use crate::error::{MarketError, Result};
use crate::scalar::{clamp, ordered_sum, Scalar};

/// Discharge cost of a PHEV. Linear: `c(a) = eta * a`.
/// Quadratic: `c(a) = eta * a + upsilon * a^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostSpec<T> {
    Linear { eta: T },
    Quadratic { eta: T, upsilon: T },
}

impl<T: Scalar> CostSpec<T> {
    pub fn linear(eta: T) -> Result<Self> {
        check_eta(eta)?;
        Ok(CostSpec::Linear { eta })
    }

    pub fn quadratic(eta: T, upsilon: T) -> Result<Self> {
        check_eta(eta)?;
        check_upsilon(upsilon)?;
        Ok(CostSpec::Quadratic { eta, upsilon })
    }

    pub fn eta(&self) -> T {
        match *self {
            CostSpec::Linear { eta } | CostSpec::Quadratic { eta, .. } => eta,
        }
    }

    pub fn cost(&self, a: T) -> T {
        match *self {
            CostSpec::Linear { eta } => eta * a,
            CostSpec::Quadratic { eta, upsilon } => eta * a + upsilon * a * a,
        }
    }

    /// Profit-maximising supply at commission price `p_n`, within `[0, a_max]`.
    pub fn best_response(&self, p_n: T, a_max: T) -> T {
        match *self {
            CostSpec::Linear { eta } => best_response_linear(p_n, eta, a_max),
            CostSpec::Quadratic { eta, upsilon } => quadratic_response(p_n, eta, upsilon, a_max),
        }
    }
}

fn check_eta<T: Scalar>(eta: T) -> Result<()> {
    if !eta.is_finite() || eta < T::zero() {
        return Err(MarketError::param(
            "eta",
            format!("{eta} must be finite and >= 0"),
        ));
    }
    Ok(())
}

fn check_upsilon<T: Scalar>(upsilon: T) -> Result<()> {
    if !upsilon.is_finite() || upsilon <= T::zero() {
        return Err(MarketError::param(
            "upsilon",
            format!("{upsilon} must be finite and > 0"),
        ));
    }
    Ok(())
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(MarketError::param(
            "gamma",
            format!("{gamma} is outside (0, 1)"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phev<T> {
    pub id: ParticipantId,
    /// Energy the owner can sell after reserving enough for its own use (MWh).
    pub a_max: T,
    pub cost: CostSpec<T>,
}

impl<T: Scalar> Phev<T> {
    pub fn new(id: ParticipantId, a_max: T, cost: CostSpec<T>) -> Result<Self> {
        if !a_max.is_finite() || a_max < T::zero() {
            return Err(MarketError::param(
                "a_max",
                format!("{a_max} must be finite and >= 0"),
            ));
        }
        Ok(Phev { id, a_max, cost })
    }

    pub fn best_response(&self, p_n: T) -> T {
        self.cost.best_response(p_n, self.a_max)
    }
}

/// An aggregator: the seller in the auction and the price setter for its PHEVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorState<T> {
    pub id: ParticipantId,
    /// Commission rate: PHEVs receive `gamma * P`.
    pub gamma: T,
    pub reservation_price: T,
    pub phevs: Vec<Phev<T>>,
    /// Current proposals `a_i`, aligned with `phevs`.
    pub proposals: Vec<T>,
}

impl<T: Scalar> AggregatorState<T> {
    /// Creates an aggregator whose PHEVs initially propose their full capacity.
    pub fn new(
        id: ParticipantId,
        gamma: T,
        reservation_price: T,
        phevs: Vec<Phev<T>>,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if !reservation_price.is_finite() || reservation_price < T::zero() {
            return Err(MarketError::param(
                "reservation_price",
                format!("{reservation_price} must be finite and >= 0"),
            ));
        }
        let proposals = phevs.iter().map(|p| p.a_max).collect();
        Ok(AggregatorState {
            id,
            gamma,
            reservation_price,
            phevs,
            proposals,
        })
    }

    pub fn with_proposals(mut self, proposals: Vec<T>) -> Result<Self> {
        validate_proposals(&self.phevs, &proposals)?;
        self.proposals = proposals;
        Ok(self)
    }

    pub fn offered_supply(&self) -> T {
        aggregate_supply(&self.proposals)
    }

    pub fn max_supply(&self) -> T {
        ordered_sum(self.phevs.iter().map(|p| p.a_max))
    }

    pub fn best_responses(&self, p_n: T) -> Vec<T> {
        self.phevs.iter().map(|p| p.best_response(p_n)).collect()
    }
}

pub(crate) fn validate_proposals<T: Scalar>(phevs: &[Phev<T>], proposals: &[T]) -> Result<()> {
    if proposals.len() != phevs.len() {
        return Err(MarketError::InvalidInput(format!(
            "{} proposals for {} PHEVs",
            proposals.len(),
            phevs.len()
        )));
    }
    for (phev, &a) in phevs.iter().zip(proposals) {
        if !(a >= T::zero() && a <= phev.a_max) {
            return Err(MarketError::InvalidInput(format!(
                "proposal {a} of PHEV {} outside [0, {}]",
                phev.id, phev.a_max
            )));
        }
    }
    Ok(())
}

/// Price `p_n = gamma * P` announced by an aggregator to its PHEVs.
pub fn announce_price<T: Scalar>(gamma: T, price: T) -> Result<T> {
    check_gamma(gamma)?;
    Ok(gamma * price)
}

/// Bang-bang response under linear cost: sell everything iff the margin is
/// strictly positive. A zero margin leaves the PHEV out of the market.
pub fn best_response_linear<T: Scalar>(p_n: T, eta: T, a_max: T) -> T {
    if eta < p_n {
        a_max
    } else {
        T::zero()
    }
}

/// `(p_n - eta) / (2 upsilon)` clamped to `[0, a_max]`.
pub fn best_response_quadratic<T: Scalar>(p_n: T, eta: T, upsilon: T, a_max: T) -> Result<T> {
    check_upsilon(upsilon)?;
    Ok(quadratic_response(p_n, eta, upsilon, a_max))
}

fn quadratic_response<T: Scalar>(p_n: T, eta: T, upsilon: T, a_max: T) -> T {
    clamp((p_n - eta) / (T::two() * upsilon), T::zero(), a_max)
}

/// Revenue `p_n * a` minus discharge cost.
pub fn phev_utility<T: Scalar>(cost: &CostSpec<T>, p_n: T, a: T) -> T {
    p_n * a - cost.cost(a)
}

pub fn aggregate_supply<T: Scalar>(proposals: &[T]) -> T {
    ordered_sum(proposals.iter().copied())
}

/// Splits the sold quantity over PHEVs in proportion to their proposals.
/// The last PHEV with a non-zero proposal absorbs the rounding residual, so
/// the allocations add up to `sold`.
pub fn allocate_to_phevs<T: Scalar>(proposals: &[T], sold: T) -> Result<Vec<T>> {
    let total = aggregate_supply(proposals);
    if sold > total {
        return Err(MarketError::InfeasibleAllocation(format!(
            "sold quantity {sold} exceeds proposed supply {total}"
        )));
    }
    if sold <= T::zero() {
        return Ok(vec![T::zero(); proposals.len()]);
    }
    let last = proposals
        .iter()
        .rposition(|&a| a > T::zero())
        .ok_or_else(|| MarketError::InfeasibleAllocation("all proposals are zero".into()))?;

    if sold == total {
        return Ok(proposals.to_vec());
    }

    let share = sold / total;
    let mut out = Vec::with_capacity(proposals.len());
    let mut assigned = T::zero();
    for (i, &a) in proposals.iter().enumerate() {
        let q = if i == last {
            clamp(sold - assigned, T::zero(), a)
        } else {
            (a * share).min(a)
        };
        assigned = assigned + q;
        out.push(q);
    }
    Ok(out)
}
