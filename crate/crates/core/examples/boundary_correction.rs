//! Compares the likelihood estimate with and without holding the initial
//! estimate fixed below the smallest standing-price change.

use auction_valuation::lambda::GTable;
use auction_valuation::metrics::ks_distance;
use auction_valuation::pipeline::{fit, FitOptions};
use auction_valuation::simulate::{run_study, SimConfig, ValuationDistribution};

fn main() {
    let dist = ValuationDistribution::gamma(10.0, 2.0).unwrap();
    let table = GTable::regular(150.0, 0.1, 50_000, 1).unwrap();
    let opts = FitOptions { also_unconstrained: true, ..FitOptions::default() };
    println!("{:>4} {:>8} {:>13} {:>15}", "rep", "xbar_1", "KS(corrected)", "KS(uncorrected)");
    for r in 0..10 {
        let data = run_study(&SimConfig::new(1.0, 100.0, 150, 100 + r), &dist).unwrap();
        let f = fit(&data, &table, &opts).unwrap();
        let (_, free) = f.unconstrained.as_ref().unwrap();
        println!(
            "{r:>4} {:>8.3} {:>13.4} {:>15.4}",
            f.xbar_min.unwrap_or(f64::NAN),
            ks_distance(&f.f_mle, &dist),
            ks_distance(free, &dist)
        );
    }
}
