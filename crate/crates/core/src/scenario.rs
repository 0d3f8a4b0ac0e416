//! Randomised market instances with reproducible seeding.
//!
//! Generator: ChaCha8 seeded with `ChaCha8Rng::seed_from_u64(seed)`.
//! A real draw in `[lo, hi]` is `lo + (hi - lo) * u` with
//! `u = (next_u64 >> 11) * 2^-53`; an integer draw in `[lo, hi]` is
//! `lo + next_u64 % (hi - lo + 1)`.
//!
//! Draw order: for each aggregator in id order its reservation price, its
//! PHEV count, then for each PHEV the reserved miles, `eta` and `upsilon`;
//! afterwards, for each buyer in id order, its bid and its demand. `eta`
//! and `upsilon` are drawn for both cost models so that the linear and
//! quadratic variants of a seed share every other value.

use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{BuyBid, ParticipantId};
use crate::error::{MarketError, Result};
use crate::micro::{AggregatorState, CostSpec, Phev};
use crate::scalar::Scalar;

pub const DEFAULT_KWH_PER_100_MILES: f64 = 22.0;

/// Closed interval written as a two-element array `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
pub struct Interval<T: Copy> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Interval<T> {
    pub const fn new(lo: T, hi: T) -> Self {
        Interval { lo, hi }
    }
}

impl<T: Copy> From<[T; 2]> for Interval<T> {
    fn from([lo, hi]: [T; 2]) -> Self {
        Interval { lo, hi }
    }
}

impl<T: Copy> From<Interval<T>> for [T; 2] {
    fn from(i: Interval<T>) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval<f64> {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    #[default]
    Linear,
    Quadratic,
}

impl CostModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostModel::Linear => "linear",
            CostModel::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_aggregators: usize,
    pub n_buyers: usize,
    pub phevs_per_aggregator_range: Interval<u64>,
    /// Miles of range each PHEV keeps for its own use.
    pub reserve_miles_range: Interval<f64>,
    pub battery_miles: f64,
    pub kwh_per_100_miles: f64,
    /// $/MWh
    pub seller_reservation_range: Interval<f64>,
    /// $/MWh
    pub buyer_bid_range: Interval<f64>,
    /// MWh
    pub buyer_demand_range: Interval<f64>,
    pub gamma: f64,
    pub eta_range: Interval<f64>,
    pub upsilon_range: Interval<f64>,
    pub cost_model: CostModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_aggregators: 5,
            n_buyers: 5,
            phevs_per_aggregator_range: Interval::new(500, 1000),
            reserve_miles_range: Interval::new(30.0, 100.0),
            battery_miles: 250.0,
            kwh_per_100_miles: DEFAULT_KWH_PER_100_MILES,
            seller_reservation_range: Interval::new(10.0, 50.0),
            buyer_bid_range: Interval::new(15.0, 60.0),
            buyer_demand_range: Interval::new(20.0, 60.0),
            gamma: 0.91,
            eta_range: Interval::new(10.0, 50.0),
            upsilon_range: Interval::new(1000.0, 2000.0),
            cost_model: CostModel::Linear,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| MarketError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MarketError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(MarketError::param(name, reason));
        if self.n_aggregators < 1 {
            return bad("n_aggregators", "must be at least 1".into());
        }
        if self.n_buyers < 1 {
            return bad("n_buyers", "must be at least 1".into());
        }
        let p = self.phevs_per_aggregator_range;
        if p.lo > p.hi {
            return bad(
                "phevs_per_aggregator_range",
                format!("[{}, {}] is empty", p.lo, p.hi),
            );
        }
        let ranges = [
            ("reserve_miles_range", self.reserve_miles_range),
            ("seller_reservation_range", self.seller_reservation_range),
            ("buyer_bid_range", self.buyer_bid_range),
            ("buyer_demand_range", self.buyer_demand_range),
            ("eta_range", self.eta_range),
            ("upsilon_range", self.upsilon_range),
        ];
        for (name, r) in ranges {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo >= 0.0 && r.lo <= r.hi) {
                return bad(
                    name,
                    format!(
                        "[{}, {}] must be a finite non-negative interval",
                        r.lo, r.hi
                    ),
                );
            }
        }
        if !(self.battery_miles.is_finite() && self.battery_miles >= 0.0) {
            return bad(
                "battery_miles",
                format!("{} must be finite and >= 0", self.battery_miles),
            );
        }
        if !(self.kwh_per_100_miles.is_finite() && self.kwh_per_100_miles >= 0.0) {
            return bad(
                "kwh_per_100_miles",
                format!("{} must be finite and >= 0", self.kwh_per_100_miles),
            );
        }
        if self.reserve_miles_range.hi > self.battery_miles {
            return bad(
                "reserve_miles_range",
                format!(
                    "reserve {} exceeds battery range {}",
                    self.reserve_miles_range.hi, self.battery_miles
                ),
            );
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("{} is outside (0, 1)", self.gamma));
        }
        if self.cost_model == CostModel::Quadratic && self.upsilon_range.lo <= 0.0 {
            return bad("upsilon_range", "quadratic costs need upsilon > 0".into());
        }
        Ok(())
    }
}

/// Energy in MWh needed to drive `miles` at 22 kWh per 100 miles.
pub fn miles_to_mwh(miles: f64) -> Result<f64> {
    energy_for_miles(miles, DEFAULT_KWH_PER_100_MILES)
}

pub fn energy_for_miles(miles: f64, kwh_per_100_miles: f64) -> Result<f64> {
    if !(miles >= 0.0) {
        return Err(MarketError::param("miles", format!("{miles} must be >= 0")));
    }
    Ok(miles * kwh_per_100_miles / 100.0 / 1000.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance<T> {
    pub buyers: Vec<BuyBid<T>>,
    pub aggregators: Vec<AggregatorState<T>>,
}

struct Draws(ChaCha8Rng);

impl Draws {
    fn uniform(&mut self, r: Interval<f64>) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        r.lo + (r.hi - r.lo) * u
    }

    fn integer(&mut self, r: Interval<u64>) -> u64 {
        let span = r.hi - r.lo + 1;
        r.lo + self.0.next_u64() % span
    }
}

/// Draws a market instance from `config`; identical configs (seed included)
/// give identical instances.
pub fn generate<T: Scalar>(config: &ScenarioConfig) -> Result<MarketInstance<T>> {
    config.validate()?;
    let mut rng = Draws(ChaCha8Rng::seed_from_u64(config.seed));
    let gamma = T::lit(config.gamma);

    let mut aggregators = Vec::with_capacity(config.n_aggregators);
    for n in 0..config.n_aggregators {
        let reservation = rng.uniform(config.seller_reservation_range);
        let count = rng.integer(config.phevs_per_aggregator_range) as usize;
        let mut phevs = Vec::with_capacity(count);
        for i in 0..count {
            let reserve = rng.uniform(config.reserve_miles_range);
            let eta = rng.uniform(config.eta_range);
            let upsilon = rng.uniform(config.upsilon_range);
            let a_max = energy_for_miles(config.battery_miles - reserve, config.kwh_per_100_miles)?;
            let cost = match config.cost_model {
                CostModel::Linear => CostSpec::linear(T::lit(eta))?,
                CostModel::Quadratic => CostSpec::quadratic(T::lit(eta), T::lit(upsilon))?,
            };
            phevs.push(Phev::new(ParticipantId(i), T::lit(a_max), cost)?);
        }
        aggregators.push(AggregatorState::new(
            ParticipantId(n),
            gamma,
            T::lit(reservation),
            phevs,
        )?);
    }

    let mut buyers = Vec::with_capacity(config.n_buyers);
    for k in 0..config.n_buyers {
        let bid = rng.uniform(config.buyer_bid_range);
        let demand = rng.uniform(config.buyer_demand_range);
        buyers.push(BuyBid::new(ParticipantId(k), T::lit(bid), T::lit(demand))?);
    }

    Ok(MarketInstance {
        buyers,
        aggregators,
    })
}
