//! Estimates the bidder arrival rate by inverting the expected number of
//! standing-price changes, and shows how the estimate tightens with K.

use auction_valuation::initial::{select, SelectionRule};
use auction_valuation::lambda::{estimate_lambda, GTable};
use auction_valuation::simulate::{run_study, SimConfig, ValuationDistribution};

fn main() {
    let table = GTable::regular(150.0, 0.1, 50_000, 1).expect("table");
    for x in [1.0, 10.0, 100.0] {
        println!("g({x}) = {:.4}", table.eval(x));
    }
    let dist = ValuationDistribution::uniform(1.0, 20.0).unwrap();
    for k in [100, 1000, 5000] {
        let data = run_study(&SimConfig::new(1.0, 100.0, k, 3), &dist).unwrap();
        let sel = select(&data, SelectionRule::default()).unwrap();
        let est = estimate_lambda(&data, &table, &sel.members).unwrap();
        println!(
            "K = {k:>5}: {} low-reserve auctions, mean jumps {:.3}, lambda_hat {:.4} (true 1)",
            est.used, est.mean_jumps, est.lambda_hat
        );
    }
}
