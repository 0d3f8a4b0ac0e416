//! Independent oracles for checking the market crate: rank correlation,
//! brute-force best responses and misreports, and auction invariants
//! recomputed from the raw order book.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use v2g_market::{clear, Ask64, BuyBid64, CostSpec64, ParticipantId};

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Utility `p a - c(a)` written out from the cost definitions.
pub fn utility(cost: &CostSpec64, p: f64, a: f64) -> f64 {
    match *cost {
        CostSpec64::Linear { eta } => p * a - eta * a,
        CostSpec64::Quadratic { eta, upsilon } => p * a - (eta * a + upsilon * a * a),
    }
}

/// Best utility over `points + 1` evenly spaced supplies in `[0, a_max]`.
pub fn grid_max_utility(cost: &CostSpec64, p: f64, a_max: f64, points: usize) -> f64 {
    (0..=points)
        .map(|i| utility(cost, p, a_max * i as f64 / points as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub struct SmallBook {
    pub asks: Vec<Ask64>,
    pub bids: Vec<BuyBid64>,
}

/// Book with 1..=max_side participants per side, integer prices in
/// `[1, max_price]` and integer quantities in `[1, max_qty]`.
pub fn small_integer_book(
    rng: &mut ChaCha8Rng,
    max_side: usize,
    max_price: u32,
    max_qty: u32,
) -> SmallBook {
    let n = rng.gen_range(1..=max_side);
    let k = rng.gen_range(1..=max_side);
    let asks = (0..n)
        .map(|i| {
            let s = rng.gen_range(1..=max_price) as f64;
            let a = rng.gen_range(1..=max_qty) as f64;
            Ask64::new(ParticipantId(i), s, a).unwrap()
        })
        .collect();
    let bids = (0..k)
        .map(|j| {
            let b = rng.gen_range(1..=max_price) as f64;
            let x = rng.gen_range(1..=max_qty) as f64;
            BuyBid64::new(ParticipantId(j), b, x).unwrap()
        })
        .collect();
    SmallBook { asks, bids }
}

/// Book with real prices and quantities, sometimes forcing price ties.
pub fn random_book(rng: &mut ChaCha8Rng, max_side: usize) -> SmallBook {
    let n = rng.gen_range(1..=max_side);
    let k = rng.gen_range(1..=max_side);
    let price = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.3) {
            rng.gen_range(1..=6) as f64 * 10.0
        } else {
            rng.gen_range(0.0..60.0)
        }
    };
    let asks = (0..n)
        .map(|i| Ask64::new(ParticipantId(i), price(rng), rng.gen_range(0.0..10.0)).unwrap())
        .collect();
    let bids = (0..k)
        .map(|j| BuyBid64::new(ParticipantId(j), price(rng), rng.gen_range(0.0..10.0)).unwrap())
        .collect();
    SmallBook { asks, bids }
}

/// Revenue `P * min(Q_n, A_true)` seller `n` realises when it reports
/// `reported` instead of its true quantity.
pub fn revenue_with_report(book: &SmallBook, seller: usize, reported: f64) -> f64 {
    let mut asks = book.asks.clone();
    let true_qty = asks[seller].quantity;
    asks[seller].quantity = reported;
    let outcome = clear(&asks, &book.bids);
    match outcome.price {
        Some(p) => p * outcome.sold_by(ParticipantId(seller)).min(true_qty),
        None => 0.0,
    }
}

/// First profitable quantity misreport found for any seller, as
/// `(seller, report, truthful revenue, deviating revenue)`.
pub fn profitable_deviation(book: &SmallBook, max_qty: u32) -> Option<(usize, f64, f64, f64)> {
    for n in 0..book.asks.len() {
        let truthful = revenue_with_report(book, n, book.asks[n].quantity);
        for r in 0..=max_qty {
            let revenue = revenue_with_report(book, n, r as f64);
            if revenue > truthful + 1e-9 {
                return Some((n, r as f64, truthful, revenue));
            }
        }
    }
    None
}

fn distinct_prices(prices: impl Iterator<Item = f64>, descending: bool) -> Vec<f64> {
    let mut v: Vec<f64> = prices.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    if descending {
        v.reverse();
    }
    v
}

/// Checks individual rationality, conservation and exclusion of the
/// marginal participants for `clear` on `book`, recomputing the marginal
/// prices from the raw book.
pub fn check_auction_invariants(book: &SmallBook) -> Result<(), String> {
    let outcome = clear(&book.asks, &book.bids);
    let sold: Vec<f64> = book
        .asks
        .iter()
        .map(|a| outcome.sold_by(a.seller))
        .collect();
    let bought: Vec<f64> = book
        .bids
        .iter()
        .map(|b| outcome.bought_by(b.buyer))
        .collect();
    let total_sold: f64 = sold.iter().sum();
    let total_bought: f64 = bought.iter().sum();

    if sold.iter().chain(&bought).any(|q| *q < 0.0) {
        return Err("negative allocation".into());
    }
    for (a, q) in book.asks.iter().zip(&sold) {
        if *q > a.quantity * (1.0 + 1e-12) {
            return Err(format!("seller {} sold {} of {}", a.seller, q, a.quantity));
        }
    }
    for (b, y) in book.bids.iter().zip(&bought) {
        if *y > b.quantity * (1.0 + 1e-12) {
            return Err(format!("buyer {} got {} of {}", b.buyer, y, b.quantity));
        }
    }

    let Some(crossing) = outcome.crossing else {
        return if total_sold == 0.0 && total_bought == 0.0 && !outcome.traded {
            Ok(())
        } else {
            Err("trade without a crossing".into())
        };
    };
    let price = outcome.price.ok_or("crossing without a price")?;
    let asks = distinct_prices(
        book.asks
            .iter()
            .filter(|a| a.quantity > 0.0)
            .map(|a| a.reservation_price),
        false,
    );
    let bids = distinct_prices(
        book.bids.iter().filter(|b| b.quantity > 0.0).map(|b| b.bid),
        true,
    );
    let s_l = asks[crossing.seller - 1];
    let b_m = bids[crossing.buyer - 1];
    if price != (s_l + b_m) / 2.0 || s_l > b_m {
        return Err(format!("price {price} for S_L {s_l}, B_M {b_m}"));
    }

    for (a, q) in book.asks.iter().zip(&sold) {
        if *q > 0.0 && a.reservation_price > price {
            return Err(format!("seller {} sells above-price ask", a.seller));
        }
        if *q > 0.0 && a.reservation_price >= s_l {
            return Err(format!("marginal seller {} trades", a.seller));
        }
    }
    for (b, y) in book.bids.iter().zip(&bought) {
        if *y > 0.0 && b.bid < price {
            return Err(format!("buyer {} buys below its bid", b.buyer));
        }
        if *y > 0.0 && b.bid <= b_m {
            return Err(format!("marginal buyer {} trades", b.buyer));
        }
    }

    let admitted_supply: f64 = book
        .asks
        .iter()
        .filter(|a| a.reservation_price < s_l)
        .map(|a| a.quantity)
        .sum();
    let admitted_demand: f64 = book
        .bids
        .iter()
        .filter(|b| b.bid > b_m)
        .map(|b| b.quantity)
        .sum();
    let expected = admitted_supply.min(admitted_demand);
    let tol = 1e-9 * (1.0 + expected);
    if (total_sold - total_bought).abs() > tol || (total_sold - expected).abs() > tol {
        return Err(format!(
            "sold {total_sold}, bought {total_bought}, expected {expected}"
        ));
    }
    if outcome.traded && expected == 0.0 {
        return Err("traded flag set without volume".into());
    }
    Ok(())
}

#[cfg(test)]
mod properties;
