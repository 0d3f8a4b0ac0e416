//! Closed-form market analysis used to cross-check the simulation.
//!
//! Two regimes are covered:
//! * linear PHEV costs against linear supply `alpha P` and demand
//!   `Q_0 - beta P`, with equilibrium price `Q_0 / (alpha + beta)`;
//! * quadratic PHEV costs, where an aggregator's unclamped supply is
//!   `C_n p_n - d_n` and the equilibrium is the joint fixed point of
//!   `P = Q_0 / (A + beta)` and `A = C_n gamma P - d_n`.

use std::cmp::Ordering;

use crate::auction::StepCurve;
use crate::error::{MarketError, Result};
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMarketModel<T> {
    /// Supply slope.
    pub alpha: T,
    /// Demand slope.
    pub beta: T,
    /// Demand intercept: total demand at zero price.
    pub q0: T,
}

impl<T: Scalar> LinearMarketModel<T> {
    pub fn new(alpha: T, beta: T, q0: T) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("q0", q0)] {
            if !v.is_finite() || v < T::zero() {
                return Err(MarketError::param(
                    name,
                    format!("{v} must be finite and >= 0"),
                ));
            }
        }
        if alpha + beta <= T::zero() {
            return Err(MarketError::SingularMarket);
        }
        Ok(LinearMarketModel { alpha, beta, q0 })
    }
}

/// `P* = Q_0 / (alpha + beta)`.
pub fn equilibrium_price<T: Scalar>(model: &LinearMarketModel<T>) -> Result<T> {
    let slope = model.alpha + model.beta;
    if slope == T::zero() {
        return Err(MarketError::SingularMarket);
    }
    Ok(model.q0 / slope)
}

/// Supply and utility of one linear-cost PHEV at the linear-market
/// equilibrium: it sells `a_max` iff `eta < gamma P*`.
pub fn phev_equilibrium_utility<T: Scalar>(
    model: &LinearMarketModel<T>,
    gamma: T,
    eta: T,
    a_max: T,
) -> Result<(T, T)> {
    let p_n = gamma * equilibrium_price(model)?;
    if eta >= p_n {
        Ok((T::zero(), T::zero()))
    } else {
        Ok((a_max, (p_n - eta) * a_max))
    }
}

/// Sum of the equilibrium PHEV utilities over the participating PHEVs.
/// `phevs` holds `(eta, a_max)` pairs.
pub fn aggregator_equilibrium_utility<T: Scalar>(
    model: &LinearMarketModel<T>,
    gamma: T,
    phevs: &[(T, T)],
) -> Result<T> {
    let mut total = T::zero();
    for &(eta, a_max) in phevs {
        total = total + phev_equilibrium_utility(model, gamma, eta, a_max)?.1;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariedParameter {
    Identical,
    Alpha,
    Beta,
    Demand,
    /// More than one parameter differs; no directional claim applies.
    Several,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport<T> {
    pub varied: VariedParameter,
    pub first_utility: T,
    pub second_utility: T,
    /// Whether the expected ordering holds: a steeper supply or demand slope
    /// never raises utility, a larger demand intercept never lowers it, and
    /// identical markets give identical utility.
    pub holds: bool,
}

/// Compares the equilibrium aggregator utility of the same PHEV population
/// in two linear markets that differ in one parameter.
pub fn monotonicity_report<T: Scalar>(
    first: &LinearMarketModel<T>,
    second: &LinearMarketModel<T>,
    gamma: T,
    phevs: &[(T, T)],
) -> Result<MonotonicityReport<T>> {
    let u1 = aggregator_equilibrium_utility(first, gamma, phevs)?;
    let u2 = aggregator_equilibrium_utility(second, gamma, phevs)?;
    let diffs = [
        first.alpha != second.alpha,
        first.beta != second.beta,
        first.q0 != second.q0,
    ];
    let varied = match diffs.iter().filter(|d| **d).count() {
        0 => VariedParameter::Identical,
        1 if diffs[0] => VariedParameter::Alpha,
        1 if diffs[1] => VariedParameter::Beta,
        1 => VariedParameter::Demand,
        _ => VariedParameter::Several,
    };
    // Orientation: `grows` is true when the second market has the larger parameter.
    let ordered = |a: T, b: T, grows: bool, increasing: bool| -> bool {
        match (grows, increasing) {
            (true, true) | (false, false) => b >= a,
            _ => a >= b,
        }
    };
    let holds = match varied {
        VariedParameter::Identical => u1 == u2,
        VariedParameter::Alpha => ordered(u1, u2, second.alpha > first.alpha, false),
        VariedParameter::Beta => ordered(u1, u2, second.beta > first.beta, false),
        VariedParameter::Demand => ordered(u1, u2, second.q0 > first.q0, true),
        VariedParameter::Several => true,
    };
    Ok(MonotonicityReport {
        varied,
        first_utility: u1,
        second_utility: u2,
        holds,
    })
}

/// `C_n = sum 1/(2 upsilon_i)`, `d_n = sum eta_i/(2 upsilon_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSupplyCoefficients<T> {
    pub c: T,
    pub d: T,
    /// Set for an empty PHEV list, where both coefficients are zero.
    pub degenerate: bool,
    /// With a price bound: whether some PHEV would hit its capacity at that
    /// price, which breaks the unclamped affine supply.
    pub clamps_at_bound: Option<bool>,
}

impl<T: Scalar> QuadraticSupplyCoefficients<T> {
    /// Unclamped aggregate supply `C_n p_n - d_n`.
    pub fn supply_at(&self, p_n: T) -> T {
        self.c * p_n - self.d
    }
}

/// `phevs` holds `(eta, upsilon)` pairs.
pub fn supply_coefficients<T: Scalar>(phevs: &[(T, T)]) -> Result<QuadraticSupplyCoefficients<T>> {
    let mut c = T::zero();
    let mut d = T::zero();
    for &(eta, upsilon) in phevs {
        if !upsilon.is_finite() || upsilon <= T::zero() {
            return Err(MarketError::param(
                "upsilon",
                format!("{upsilon} must be finite and > 0"),
            ));
        }
        let w = T::one() / (T::two() * upsilon);
        c = c + w;
        d = d + eta * w;
    }
    Ok(QuadraticSupplyCoefficients {
        c,
        d,
        degenerate: phevs.is_empty(),
        clamps_at_bound: None,
    })
}

/// Like [`supply_coefficients`], additionally reporting whether any PHEV
/// `(eta, upsilon, a_max)` would be capped at commission price `p_bound`.
pub fn supply_coefficients_bounded<T: Scalar>(
    phevs: &[(T, T, T)],
    p_bound: T,
) -> Result<QuadraticSupplyCoefficients<T>> {
    let pairs: Vec<(T, T)> = phevs.iter().map(|&(e, u, _)| (e, u)).collect();
    let mut coeffs = supply_coefficients(&pairs)?;
    let clamps = phevs
        .iter()
        .any(|&(eta, upsilon, a_max)| (p_bound - eta) / (T::two() * upsilon) > a_max);
    coeffs.clamps_at_bound = Some(clamps);
    Ok(coeffs)
}

/// The two discriminant conditions of the existence lemma, evaluated as
/// stated (the quantity condition there carries no commission rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lemma1Check {
    /// `(beta + d)^2 - 4 (d beta - C Q_0) >= 0`
    pub quantity_condition: bool,
    /// `(beta - d)^2 + 4 C Q_0 >= 0`
    pub price_condition: bool,
}

impl Lemma1Check {
    pub fn satisfied(&self) -> bool {
        self.quantity_condition && self.price_condition
    }
}

pub fn check_lemma1<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
) -> Lemma1Check {
    let (c, d) = (coeffs.c, coeffs.d);
    let four = T::lit(4.0);
    let a_disc = (beta + d) * (beta + d) - four * (d * beta - c * q0);
    let p_disc = (beta - d) * (beta - d) + four * c * q0;
    Lemma1Check {
        quantity_condition: a_disc >= T::zero(),
        price_condition: p_disc >= T::zero(),
    }
}

/// Discriminant of the quantity fixed-point quadratic, including `gamma`:
/// `(beta + d)^2 - 4 (beta d - C gamma Q_0)`.
pub fn quantity_discriminant<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
    gamma: T,
) -> T {
    let (c, d) = (coeffs.c, coeffs.d);
    (beta + d) * (beta + d) - T::lit(4.0) * (beta * d - c * gamma * q0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRoots<T> {
    /// Real roots in ascending order (empty when none exist).
    pub roots: Vec<T>,
    /// The non-negative root that forms the equilibrium, if any.
    pub admissible: Option<T>,
}

/// Real roots of `a x^2 + b x + c = 0`, ascending. Handles the linear case.
fn real_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        if b == T::zero() {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    if disc == T::zero() {
        return vec![-b / (T::two() * a)];
    }
    // Stable form: avoid cancellation between -b and sqrt(disc).
    let sign = if b >= T::zero() { T::one() } else { -T::one() };
    let q = -(b + sign * disc.sqrt()) / T::two();
    let mut roots = if q == T::zero() {
        vec![T::zero(), -b / a]
    } else {
        vec![q / a, c / q]
    };
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    roots
}

/// Roots of `A^2 + (beta + d) A + beta d - C gamma Q_0 = 0`.
pub fn solve_quantity_fixed_point<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
    gamma: T,
) -> FixedPointRoots<T> {
    let (c, d) = (coeffs.c, coeffs.d);
    let roots = real_roots(T::one(), beta + d, beta * d - c * gamma * q0);
    let admissible = pick_admissible(&roots, |a| a + beta > T::zero());
    FixedPointRoots { roots, admissible }
}

/// Roots of `C gamma P^2 + (beta - d) P - Q_0 = 0`.
pub fn solve_price_fixed_point<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
    gamma: T,
) -> FixedPointRoots<T> {
    let (c, d) = (coeffs.c, coeffs.d);
    let roots = real_roots(c * gamma, beta - d, -q0);
    // The implied supply must be non-negative as well.
    let admissible = pick_admissible(&roots, |p| c * gamma * p - d >= T::zero());
    FixedPointRoots { roots, admissible }
}

/// Largest non-negative root passing the consistency check; at most one is
/// expected in practice.
fn pick_admissible<T: Scalar>(roots: &[T], consistent: impl Fn(T) -> bool) -> Option<T> {
    roots
        .iter()
        .rev()
        .copied()
        .find(|&r| r >= T::zero() && consistent(r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSolution<T> {
    pub a_star: T,
    pub p_star: T,
    pub exists: bool,
    pub lemma1_satisfied: bool,
}

/// Admissible `(A*, P*)` from the quantity root, with the price recovered
/// from `P* = Q_0 / (A* + beta)`.
pub fn solve_equilibrium<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
    gamma: T,
) -> EquilibriumSolution<T> {
    let lemma1_satisfied = check_lemma1(coeffs, beta, q0).satisfied();
    match solve_quantity_fixed_point(coeffs, beta, q0, gamma).admissible {
        Some(a_star) => EquilibriumSolution {
            a_star,
            p_star: q0 / (a_star + beta),
            exists: true,
            lemma1_satisfied,
        },
        None => EquilibriumSolution {
            a_star: T::zero(),
            p_star: T::zero(),
            exists: false,
            lemma1_satisfied,
        },
    }
}

/// Alternates `A = max(0, C gamma P - d)` and `P = Q_0 / (A + beta)`
/// starting from `p0`. Returns `steps + 1` prices, `p0` first.
pub fn iterate_price<T: Scalar>(
    coeffs: &QuadraticSupplyCoefficients<T>,
    beta: T,
    q0: T,
    gamma: T,
    p0: T,
    steps: usize,
) -> Result<Vec<T>> {
    if !(p0 >= T::zero()) {
        return Err(MarketError::param("p0", format!("{p0} must be >= 0")));
    }
    if steps < 1 {
        return Err(MarketError::param("steps", "must be at least 1"));
    }
    let mut prices = Vec::with_capacity(steps + 1);
    prices.push(p0);
    let mut price = p0;
    for step in 1..=steps {
        let supply = (coeffs.c * gamma * price - coeffs.d).max(T::zero());
        let denom = supply + beta;
        if denom == T::zero() {
            return Err(MarketError::SingularIteration { step });
        }
        price = q0 / denom;
        prices.push(price);
    }
    Ok(prices)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub model: LinearMarketModel<T>,
    /// Root-mean-square residual of `alpha P` against the supply curve.
    pub supply_rms_residual: T,
    /// Root-mean-square residual of `Q_0 - beta P` against the demand curve.
    pub demand_rms_residual: T,
    pub samples: usize,
    /// Set when fewer than two distinct sample prices were available or the
    /// curves' price ranges do not overlap.
    pub degenerate: bool,
}

/// Least-squares fit of `Supply = alpha P` (through the origin) and
/// `Demand = Q_0 - beta P` to the step curves, sampled at the union of
/// their breakpoint prices inside the price range both curves cover.
pub fn fit_linear_curves<T: Scalar>(
    supply: &StepCurve<T>,
    demand: &StepCurve<T>,
) -> Result<LinearFit<T>> {
    if supply.is_empty() || demand.is_empty() {
        return Err(MarketError::InvalidInput(
            "cannot fit an empty curve".into(),
        ));
    }
    let mut prices: Vec<T> = supply
        .steps
        .iter()
        .chain(&demand.steps)
        .map(|s| s.price)
        .collect();
    prices.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    prices.dedup();

    let first = |c: &StepCurve<T>| c.steps[0].price;
    let last = |c: &StepCurve<T>| c.steps[c.steps.len() - 1].price;
    let lo = first(supply).max(last(demand));
    let hi = last(supply).min(first(demand));
    let overlapping: Vec<T> = prices
        .iter()
        .copied()
        .filter(|&p| p >= lo && p <= hi)
        .collect();
    let mut degenerate = false;
    let samples = if overlapping.len() >= 2 {
        overlapping
    } else {
        degenerate = true;
        prices
    };
    if samples.len() < 2 {
        degenerate = true;
    }

    let s_obs: Vec<T> = samples.iter().map(|&p| supply.quantity_at(p)).collect();
    let d_obs: Vec<T> = samples.iter().map(|&p| demand.quantity_at(p)).collect();
    let n = T::from_usize(samples.len()).expect("sample count fits scalar");

    let pp = ordered_sum(samples.iter().map(|&p| p * p));
    let ps = ordered_sum(samples.iter().zip(&s_obs).map(|(&p, &s)| p * s));
    let alpha = if pp > T::zero() {
        (ps / pp).max(T::zero())
    } else {
        degenerate = true;
        T::zero()
    };

    let p_mean = ordered_sum(samples.iter().copied()) / n;
    let d_mean = ordered_sum(d_obs.iter().copied()) / n;
    let var = ordered_sum(samples.iter().map(|&p| (p - p_mean) * (p - p_mean)));
    let cov = ordered_sum(
        samples
            .iter()
            .zip(&d_obs)
            .map(|(&p, &d)| (p - p_mean) * (d - d_mean)),
    );
    let beta = if var > T::zero() {
        (-cov / var).max(T::zero())
    } else {
        degenerate = true;
        T::zero()
    };
    let q0 = (d_mean + beta * p_mean).max(T::zero());

    let rms =
        |residuals: &mut dyn Iterator<Item = T>| (ordered_sum(residuals.map(|r| r * r)) / n).sqrt();
    let supply_rms_residual = rms(&mut samples.iter().zip(&s_obs).map(|(&p, &s)| alpha * p - s));
    let demand_rms_residual =
        rms(&mut samples.iter().zip(&d_obs).map(|(&p, &d)| q0 - beta * p - d));

    if alpha + beta <= T::zero() {
        return Err(MarketError::SingularMarket);
    }
    Ok(LinearFit {
        model: LinearMarketModel { alpha, beta, q0 },
        supply_rms_residual,
        demand_rms_residual,
        samples: samples.len(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{
        build_demand_curve, build_supply_curve, order_and_merge, Ask, BuyBid, ParticipantId,
    };
    use approx::assert_relative_eq;

    fn model(alpha: f64, beta: f64, q0: f64) -> LinearMarketModel<f64> {
        LinearMarketModel::new(alpha, beta, q0).unwrap()
    }

    fn coeffs(c: f64, d: f64) -> QuadraticSupplyCoefficients<f64> {
        QuadraticSupplyCoefficients {
            c,
            d,
            degenerate: false,
            clamps_at_bound: None,
        }
    }

    #[test]
    fn equilibrium_price_values() {
        assert_eq!(equilibrium_price(&model(2.0, 1.0, 30.0)).unwrap(), 10.0);
        assert_eq!(equilibrium_price(&model(0.0, 1.0, 0.0)).unwrap(), 0.0);
        assert_eq!(equilibrium_price(&model(1.0, 0.0, 5.0)).unwrap(), 5.0);
        assert!(matches!(
            LinearMarketModel::new(0.0, 0.0, 1.0),
            Err(MarketError::SingularMarket)
        ));
        let raw = LinearMarketModel {
            alpha: 0.0,
            beta: 0.0,
            q0: 1.0,
        };
        assert!(matches!(
            equilibrium_price(&raw),
            Err(MarketError::SingularMarket)
        ));
    }

    #[test]
    fn phev_utility_at_equilibrium() {
        let m = model(2.0, 1.0, 30.0);
        let (a, u) = phev_equilibrium_utility(&m, 0.91, 5.0, 2.0).unwrap();
        assert_eq!(a, 2.0);
        assert_relative_eq!(u, 8.2, max_relative = 1e-12);
        let threshold = 0.91 * 10.0;
        assert_eq!(
            phev_equilibrium_utility(&m, 0.91, threshold, 2.0).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            phev_equilibrium_utility(&m, 0.91, 50.0, 2.0).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn aggregator_utility_sums_participants() {
        let m = model(2.0, 1.0, 30.0);
        let u = aggregator_equilibrium_utility(&m, 0.91, &[(5.0, 2.0), (20.0, 3.0)]).unwrap();
        assert_relative_eq!(u, 8.2, max_relative = 1e-12);
        assert_eq!(aggregator_equilibrium_utility(&m, 0.91, &[]).unwrap(), 0.0);
        let u = aggregator_equilibrium_utility(&m, 0.91, &[(0.0, 1.0), (0.0, 2.0)]).unwrap();
        assert_relative_eq!(u, 0.91 * 10.0 * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn coefficients() {
        let c = supply_coefficients(&[(10.0, 2.0)]).unwrap();
        assert_eq!((c.c, c.d), (0.25, 2.5));
        let c = supply_coefficients(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!((c.c, c.d), (1.0, 0.0));
        let c = supply_coefficients::<f64>(&[]).unwrap();
        assert!(c.degenerate);
        assert_eq!((c.c, c.d), (0.0, 0.0));
        assert!(supply_coefficients(&[(1.0, 0.0)]).is_err());
        assert_eq!(c.supply_at(3.0), 0.0);
    }

    #[test]
    fn bounded_coefficients_report_clamping() {
        let c = supply_coefficients_bounded(&[(10.0, 2.0, 1.0)], 12.0).unwrap();
        assert_eq!(c.clamps_at_bound, Some(false));
        let c = supply_coefficients_bounded(&[(10.0, 2.0, 1.0)], 20.0).unwrap();
        assert_eq!(c.clamps_at_bound, Some(true));
    }

    #[test]
    fn lemma_conditions() {
        let l = check_lemma1(&coeffs(1.0, 0.0), 1.0, 2.0);
        assert!(l.quantity_condition && l.price_condition);
        assert!(check_lemma1(&coeffs(0.0, 0.0), 0.0, 0.0).satisfied());
        // (beta + d)^2 - 4 d beta = (beta - d)^2, so only a negative C Q0 can break either condition.
        let l = check_lemma1(&coeffs(1.0, 1.0), 1.0, -1.0);
        assert!(!l.quantity_condition && !l.price_condition);
        assert_eq!(quantity_discriminant(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0), 9.0);
    }

    #[test]
    fn quantity_roots() {
        let r = solve_quantity_fixed_point(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0);
        assert_eq!(r.roots, vec![-2.0, 1.0]);
        assert_eq!(r.admissible, Some(1.0));
        let r = solve_quantity_fixed_point(&coeffs(0.0, 0.0), 1.0, 5.0, 0.9);
        assert_eq!(r.roots, vec![-1.0, 0.0]);
        assert_eq!(r.admissible, Some(0.0));
        // No payment: roots -d and -beta.
        let r = solve_quantity_fixed_point(&coeffs(1.0, 2.0), 3.0, 5.0, 0.0);
        assert_eq!(r.roots, vec![-3.0, -2.0]);
        assert_eq!(r.admissible, None);
        let r = solve_quantity_fixed_point(&coeffs(1.0, 0.0), 3.0, 5.0, 0.0);
        assert_eq!(r.admissible, Some(0.0));
    }

    #[test]
    fn price_roots() {
        let r = solve_price_fixed_point(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0);
        assert_eq!(r.roots, vec![-2.0, 1.0]);
        assert_eq!(r.admissible, Some(1.0));
        let a = solve_quantity_fixed_point(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0)
            .admissible
            .unwrap();
        assert_eq!(2.0 / (a + 1.0), 1.0);
        let r = solve_price_fixed_point(&coeffs(1.0, 0.0), 1.0, 0.0, 1.0);
        assert_eq!(r.admissible, Some(0.0));
        // C gamma = 0: (beta - d) P = Q0.
        let r = solve_price_fixed_point(&coeffs(0.0, 0.0), 2.0, 4.0, 0.9);
        assert_eq!(r.roots, vec![2.0]);
    }

    #[test]
    fn equilibrium_solution() {
        let s = solve_equilibrium(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0);
        assert!(s.exists && s.lemma1_satisfied);
        assert_eq!((s.a_star, s.p_star), (1.0, 1.0));
    }

    #[test]
    fn price_iteration_approaches_fixed_point() {
        let seq = iterate_price(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0, 2.0, 60).unwrap();
        assert_relative_eq!(seq[1], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(seq[2], 1.2, max_relative = 1e-15);
        assert_relative_eq!(*seq.last().unwrap(), 1.0, max_relative = 1e-12);

        let fixed = iterate_price(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0, 1.0, 5).unwrap();
        assert!(fixed.iter().all(|&p| p == 1.0));

        let zero = iterate_price(&coeffs(1.0, 0.0), 1.0, 0.0, 1.0, 3.0, 5).unwrap();
        assert!(zero[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn price_iteration_errors() {
        assert!(matches!(
            iterate_price(&coeffs(1.0, 5.0), 0.0, 2.0, 1.0, 1.0, 3),
            Err(MarketError::SingularIteration { step: 1 })
        ));
        assert!(iterate_price(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0, -1.0, 3).is_err());
        assert!(iterate_price(&coeffs(1.0, 0.0), 1.0, 2.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn monotonicity_directions() {
        let phevs = [(5.0, 2.0), (8.0, 1.0), (30.0, 3.0)];
        let r = monotonicity_report(&model(2.0, 1.0, 30.0), &model(3.0, 1.0, 30.0), 0.91, &phevs)
            .unwrap();
        assert_eq!(r.varied, VariedParameter::Alpha);
        assert!(r.holds && r.first_utility >= r.second_utility);
        let r = monotonicity_report(&model(2.0, 1.0, 30.0), &model(2.0, 1.0, 40.0), 0.91, &phevs)
            .unwrap();
        assert_eq!(r.varied, VariedParameter::Demand);
        assert!(r.holds && r.second_utility >= r.first_utility);
        let r = monotonicity_report(&model(2.0, 1.0, 30.0), &model(2.0, 1.0, 30.0), 0.91, &phevs)
            .unwrap();
        assert_eq!(r.varied, VariedParameter::Identical);
        assert!(r.holds);
        assert_eq!(r.first_utility, r.second_utility);
    }

    fn curves(asks: &[(f64, f64)], bids: &[(f64, f64)]) -> (StepCurve<f64>, StepCurve<f64>) {
        let a: Vec<_> = asks
            .iter()
            .enumerate()
            .map(|(i, &(s, q))| Ask::new(ParticipantId(i), s, q).unwrap())
            .collect();
        let b: Vec<_> = bids
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| BuyBid::new(ParticipantId(i), p, q).unwrap())
            .collect();
        let book = order_and_merge(&a, &b);
        (
            build_supply_curve(&book.asks),
            build_demand_curve(&book.bids),
        )
    }

    #[test]
    fn fit_recovers_exact_line() {
        let n = 50;
        let asks: Vec<_> = (1..=n).map(|k| (k as f64, 1.0)).collect();
        // Uniform unit bids at 1..n: demand at P is n - P + 1.
        let bids: Vec<_> = (1..=n).map(|k| (k as f64, 1.0)).collect();
        let (s, d) = curves(&asks, &bids);
        let fit = fit_linear_curves(&s, &d).unwrap();
        assert_relative_eq!(fit.model.alpha, 1.0, max_relative = 1e-6);
        assert!(fit.supply_rms_residual < 1e-9);
        assert_relative_eq!(fit.model.beta, 1.0, max_relative = 1e-9);
        assert_relative_eq!(fit.model.q0, n as f64 + 1.0, max_relative = 1e-9);
        assert!(!fit.degenerate);
    }

    #[test]
    fn single_step_fit_is_flagged() {
        let (s, d) = curves(&[(10.0, 5.0)], &[(35.0, 4.0), (25.0, 4.0), (15.0, 4.0)]);
        let fit = fit_linear_curves(&s, &d).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn fit_rejects_empty_curves() {
        let (s, d) = curves(&[], &[(35.0, 4.0)]);
        assert!(fit_linear_curves(&s, &d).is_err());
    }
}
