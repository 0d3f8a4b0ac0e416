use v2g_market::report::{write_summary_csv, write_trace_csv};
use v2g_market::{
    clear, generate, run_greedy, run_market, Ask32, Baseline, BuyBid32, CostModel, MechanismConfig,
    ParticipantId, ScenarioConfig, StopReason,
};

fn config(cost_model: CostModel, seed: u64) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(&format!(
        "n_aggregators = 4\nn_buyers = 5\ncost_model = \"{}\"\nseed = {seed}\n",
        cost_model.as_str()
    ))
    .unwrap()
}

#[test]
fn generated_markets_run_cleanly() {
    for model in [CostModel::Linear, CostModel::Quadratic] {
        for seed in 0..10 {
            let inst = generate::<f64>(&config(model, seed)).unwrap();
            let mech = MechanismConfig::default();
            let trace = run_market(&inst.buyers, &inst.aggregators, &mech).unwrap();
            trace
                .check_invariants(&inst.buyers, &inst.aggregators, &mech)
                .unwrap();
            let greedy = run_greedy(&inst.buyers, &inst.aggregators).unwrap();
            assert_eq!(greedy.iterations_run(), 1);
            assert_eq!(greedy.iterations[0], trace.iterations[0]);

            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &[(Baseline::TwoLayer, &trace)]).unwrap();
            let rows = String::from_utf8(buf).unwrap().lines().count() - 1;
            assert_eq!(rows, trace.iterations_run() * inst.aggregators.len());
            let mut buf = Vec::new();
            write_summary_csv(
                &mut buf,
                &[(Baseline::TwoLayer, &trace), (Baseline::Greedy, &greedy)],
            )
            .unwrap();
            assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        }
    }
}

#[test]
fn quadratic_run_settles() {
    let inst = generate::<f64>(&config(CostModel::Quadratic, 5)).unwrap();
    let trace = run_market(&inst.buyers, &inst.aggregators, &MechanismConfig::default()).unwrap();
    assert_ne!(trace.stop_reason, StopReason::MaxIterations);
}

#[test]
fn single_precision_matches_double() {
    let asks: Vec<Ask32> = [(10.0, 5.0), (20.0, 5.0), (30.0, 5.0)]
        .iter()
        .enumerate()
        .map(|(i, &(s, a))| Ask32::new(ParticipantId(i), s, a).unwrap())
        .collect();
    let bids: Vec<BuyBid32> = [(35.0, 4.0), (25.0, 4.0), (15.0, 4.0)]
        .iter()
        .enumerate()
        .map(|(k, &(b, x))| BuyBid32::new(ParticipantId(k), b, x).unwrap())
        .collect();
    let out = clear(&asks, &bids);
    assert_eq!(out.price, Some(22.5f32));
    assert_eq!(out.oversupply, 1.0f32);

    let c = config(CostModel::Linear, 2);
    let (i64_, i32_) = (generate::<f64>(&c).unwrap(), generate::<f32>(&c).unwrap());
    let mech = MechanismConfig::default();
    let t64 = run_market(&i64_.buyers, &i64_.aggregators, &mech).unwrap();
    let t32 = run_market(&i32_.buyers, &i32_.aggregators, &mech).unwrap();
    let p64 = t64.iterations[0].price.unwrap();
    let p32 = t32.iterations[0].price.unwrap() as f64;
    assert!((p64 - p32).abs() < 1e-4 * p64);
}
