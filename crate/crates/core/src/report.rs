//! CSV output for traces, run summaries, sweeps and step curves.
//!
//! Every file has a header row and a fixed column order. Real numbers are
//! written with 6 significant digits in plain decimal notation; a missing
//! value (for example the price of a round without a crossing) is an empty
//! field. Column sets are versioned by [`SCHEMA_VERSION`].

use std::io::Write;

use crate::auction::{
    build_demand_curve, build_supply_curve, order_and_merge, Ask, BuyBid, Side, StepCurve,
};
use crate::equilibrium::{equilibrium_price, LinearFit};
use crate::error::{MarketError, Result};
use crate::mechanism::{IterationRecord, MechanismTrace};
use crate::micro::AggregatorState;
use crate::scalar::Scalar;
use crate::sweep::{Baseline, SweepResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 10] = [
    "baseline",
    "t",
    "price",
    "traded",
    "aggregator",
    "offered",
    "sold",
    "phev_price",
    "utility",
    "commission",
];

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "baseline",
    "stop_reason",
    "converged",
    "iterations",
    "final_price",
    "total_sold",
    "mean_utility",
    "total_utility",
];

pub const SWEEP_COLUMNS_AFTER_VALUE: [&str; 13] = [
    "cost_model",
    "baseline",
    "runs",
    "mean_utility",
    "std_utility",
    "mean_price",
    "std_price",
    "mean_iterations",
    "std_iterations",
    "mean_converged_price",
    "converged_fraction",
    "terminated_fraction",
    "priced_runs",
];

pub const CURVE_COLUMNS: [&str; 6] = ["t", "side", "step", "participant", "cumulative", "price"];

pub const FIT_COLUMNS: [&str; 10] = [
    "t",
    "alpha",
    "beta",
    "q0",
    "supply_rms_residual",
    "demand_rms_residual",
    "samples",
    "degenerate",
    "fitted_price",
    "realized_price",
];

/// Formats `x` with `digits` significant digits, without exponent notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("valid float");
    let s = rounded.to_string();
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn num<T: Scalar>(x: T) -> String {
    format_sig(x.as_f64(), 6)
}

fn opt<T: Scalar>(x: Option<T>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> MarketError {
    MarketError::Config(format!("cannot write CSV: {e}"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()
        .map_err(|e| MarketError::Config(format!("cannot write CSV: {e}")))
}

/// One row per `(iteration, aggregator)`.
pub fn write_trace_csv<T: Scalar, W: Write>(
    out: W,
    traces: &[(Baseline, &MechanismTrace<T>)],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for (baseline, trace) in traces {
        for it in &trace.iterations {
            for rec in &it.aggregators {
                w.write_record([
                    baseline.as_str().to_string(),
                    it.t.to_string(),
                    opt(it.price),
                    it.traded.to_string(),
                    rec.id.0.to_string(),
                    num(rec.offered),
                    num(rec.sold),
                    opt(rec.phev_price),
                    num(rec.utility),
                    num(rec.commission),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    flush(w)
}

/// One row per baseline.
pub fn write_summary_csv<T: Scalar, W: Write>(
    out: W,
    traces: &[(Baseline, &MechanismTrace<T>)],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for (baseline, trace) in traces {
        let last = trace.last();
        w.write_record([
            baseline.as_str().to_string(),
            trace.stop_reason.as_str().to_string(),
            trace.converged.to_string(),
            trace.iterations_run().to_string(),
            opt(trace.final_price()),
            num(last.total_sold()),
            num(last.mean_utility()),
            num(last.total_utility()),
        ])
        .map_err(csv_err)?;
    }
    flush(w)
}

/// One row per sweep cell; the first column is named after the swept variable.
pub fn write_sweep_csv<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec![result.variable.column_name()];
    header.extend(SWEEP_COLUMNS_AFTER_VALUE);
    w.write_record(&header).map_err(csv_err)?;
    for row in &result.rows {
        let priced = result
            .runs
            .iter()
            .filter(|r| {
                r.value == row.value && r.cost_model == row.cost_model && r.baseline == row.baseline
            })
            .filter(|r| r.final_price.is_some())
            .count();
        w.write_record([
            row.value.to_string(),
            row.cost_model.as_str().to_string(),
            row.baseline.as_str().to_string(),
            row.runs.to_string(),
            num(row.mean_utility),
            num(row.std_utility),
            opt(row.mean_price),
            opt(row.std_price),
            num(row.mean_iterations),
            num(row.std_iterations),
            opt(row.mean_converged_price),
            num(row.converged_fraction),
            num(row.terminated_fraction),
            priced.to_string(),
        ])
        .map_err(csv_err)?;
    }
    flush(w)
}

/// Supply and demand step curves seen by the auction in one iteration.
pub fn curves_at<T: Scalar>(
    buyers: &[BuyBid<T>],
    aggregators: &[AggregatorState<T>],
    record: &IterationRecord<T>,
) -> (StepCurve<T>, StepCurve<T>) {
    let asks: Vec<Ask<T>> = aggregators
        .iter()
        .zip(&record.aggregators)
        .map(|(agg, rec)| Ask {
            seller: agg.id,
            reservation_price: agg.reservation_price,
            quantity: rec.offered,
        })
        .collect();
    let book = order_and_merge(&asks, buyers);
    (
        build_supply_curve(&book.asks),
        build_demand_curve(&book.bids),
    )
}

/// Long-format step curves: one row per step, tagged with the iteration.
pub fn write_curves_csv<T: Scalar, W: Write>(
    out: W,
    curves: &[(usize, &StepCurve<T>, &StepCurve<T>)],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(CURVE_COLUMNS).map_err(csv_err)?;
    for (t, supply, demand) in curves {
        for curve in [supply, demand] {
            let side = match curve.side {
                Side::Supply => "supply",
                Side::Demand => "demand",
            };
            for (j, step) in curve.steps.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    side.to_string(),
                    (j + 1).to_string(),
                    step.participant.to_string(),
                    num(step.cumulative),
                    num(step.price),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    flush(w)
}

/// One row per fitted iteration: `(t, fit, realized auction price)`.
pub fn write_fit_csv<T: Scalar, W: Write>(
    out: W,
    fits: &[(usize, &LinearFit<T>, Option<T>)],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(FIT_COLUMNS).map_err(csv_err)?;
    for (t, fit, realized) in fits {
        w.write_record([
            t.to_string(),
            num(fit.model.alpha),
            num(fit.model.beta),
            num(fit.model.q0),
            num(fit.supply_rms_residual),
            num(fit.demand_rms_residual),
            fit.samples.to_string(),
            fit.degenerate.to_string(),
            opt(equilibrium_price(&fit.model).ok()),
            opt(*realized),
        ])
        .map_err(csv_err)?;
    }
    flush(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::ParticipantId;
    use crate::mechanism::{run_market, MechanismConfig};
    use crate::micro::{CostSpec, Phev};

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(22.5, 6), "22.5");
        assert_eq!(format_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(format_sig(123456789.0, 6), "123457000");
        assert_eq!(format_sig(37.1234567, 6), "37.1235");
        assert_eq!(format_sig(0.000123456789, 6), "0.000123457");
        assert_eq!(format_sig(-2.0, 6), "-2");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(-1e-30, 2), "-0.000000000000000000000000000001");
    }

    fn small_market() -> (Vec<BuyBid<f64>>, Vec<AggregatorState<f64>>) {
        let buyers = vec![
            BuyBid::new(ParticipantId(0), 35.0, 4.0).unwrap(),
            BuyBid::new(ParticipantId(1), 25.0, 4.0).unwrap(),
        ];
        let phevs = |eta: f64| {
            vec![Phev::new(ParticipantId(0), 5.0, CostSpec::linear(eta).unwrap()).unwrap()]
        };
        let aggs = vec![
            AggregatorState::new(ParticipantId(0), 0.9, 10.0, phevs(5.0)).unwrap(),
            AggregatorState::new(ParticipantId(1), 0.9, 20.0, phevs(5.0)).unwrap(),
        ];
        (buyers, aggs)
    }

    #[test]
    fn trace_and_summary_layout() {
        let (buyers, aggs) = small_market();
        let trace = run_market(&buyers, &aggs, &MechanismConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[(Baseline::TwoLayer, &trace)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(lines.count(), trace.iterations.len() * 2);

        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[(Baseline::TwoLayer, &trace)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("two_layer,price_converged,true,2,"));
    }

    #[test]
    fn curves_follow_offers() {
        let (buyers, aggs) = small_market();
        let trace = run_market(&buyers, &aggs, &MechanismConfig::default()).unwrap();
        let (s, d) = curves_at(&buyers, &aggs, &trace.iterations[0]);
        assert_eq!(s.total_quantity(), 10.0);
        assert_eq!(d.total_quantity(), 8.0);
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[(1, &s, &d)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1,supply,1,0,5,10");
        assert_eq!(text.lines().count(), 5);
    }
}
