//! Small replication study over the built-in valuation laws.
//!
//! Pass a replicate count to change the default of 20.

use auction_valuation::lambda::GTable;
use auction_valuation::metrics::{replicate_table, StudyOptions, StudyReport, StudySetting};
use auction_valuation::simulate::ValuationDistribution;

fn main() {
    let reps: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("replicate count"));
    let laws = [
        ("uniform", ValuationDistribution::uniform(1.0, 20.0).unwrap()),
        ("gamma", ValuationDistribution::gamma(10.0, 2.0).unwrap()),
        ("beta", ValuationDistribution::beta(2.0, 2.0).unwrap()),
    ];
    let settings: Vec<StudySetting> = laws
        .iter()
        .flat_map(|(name, dist)| {
            [100, 1000].map(|k| StudySetting { label: format!("{name}{k}"), dist: dist.clone(), num_auctions: k })
        })
        .collect();
    let table = GTable::regular(150.0, 0.1, 50_000, 1).unwrap();
    let reports = replicate_table(&settings, reps, 2024, &StudyOptions::default(), &table);
    println!("{}", StudyReport::csv_header());
    for r in &reports {
        println!("{}", r.csv_row());
    }
}
