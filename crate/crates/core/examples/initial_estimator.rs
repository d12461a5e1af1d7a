//! Builds the initial estimate from first standing prices and final
//! prices, and compares the two splice rules.

use auction_valuation::initial::SpliceRule;
use auction_valuation::lambda::GTable;
use auction_valuation::metrics::ks_distance;
use auction_valuation::model::MonotoneCurve;
use auction_valuation::pipeline::{fit_initial, FitOptions};
use auction_valuation::simulate::{run_study, SimConfig, ValuationDistribution};

/// Largest CDF error at or above `from`.
fn sup_error_above(curve: &MonotoneCurve, dist: &ValuationDistribution, from: f64) -> f64 {
    (0..=1000)
        .map(|i| from + (20.0 - from) * i as f64 / 1000.0)
        .map(|x| (curve.eval(x) - dist.cdf(x)).abs())
        .fold(0.0, f64::max)
}

fn main() {
    let dist = ValuationDistribution::uniform(1.0, 20.0).unwrap();
    let table = GTable::regular(150.0, 0.1, 50_000, 1).unwrap();
    for (k, seed) in [(500, 21), (100, 4)] {
        let data = run_study(&SimConfig::new(1.0, 100.0, k, seed), &dist).unwrap();
        println!("K = {k}");
        for rule in [SpliceRule::MaxAnchor, SpliceRule::FirstPrice] {
            let opts = FitOptions { splice: rule, ..FitOptions::default() };
            let init = fit_initial(&data, &table, &opts).unwrap();
            let a = init.initial.anchors;
            println!("  {rule:?}: p1 {:.3}, p2 {:.3}, bridge from {:.3} to {:.3}", a.p1, a.p2, a.c, a.target);
            println!("    KS of the first-price part      {:.4}", ks_distance(&init.f_fp, &dist));
            println!("    final-price part error above p2 {:.4}", sup_error_above(&init.f_sp, &dist, a.p2));
            println!("    KS of the spliced estimate      {:.4}", ks_distance(&init.initial.continuous, &dist));
        }
    }
}
