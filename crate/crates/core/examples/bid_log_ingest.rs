//! Turns a bid log into auction summaries and scores the two estimators on
//! held-out auctions.
//!
//! With no argument a bid log is simulated first; otherwise pass the path
//! of a CSV with columns auctionid, bid, bidtime, bidder, bidderrate,
//! openbid, price, and the auction length in days.

use auction_valuation::ingest::{ingest_bid_csv, ingest_bid_reader, NoiseOptions};
use auction_valuation::initial::SelectionRule;
use auction_valuation::lambda::GTable;
use auction_valuation::metrics::train_test_eval;
use auction_valuation::pipeline::FitOptions;
use auction_valuation::simulate::{run_study_with_traces, write_bid_trace, ReservePolicy, SimConfig, ValuationDistribution};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (data, report) = match args.as_slice() {
        [path, duration] => ingest_bid_csv(path.as_ref(), duration.parse().unwrap(), NoiseOptions::default()).unwrap(),
        _ => {
            let dist = ValuationDistribution::gamma(20.0, 0.1).unwrap();
            let config =
                SimConfig::new(3.0, 7.0, 400, 5).with_reserve(ReservePolicy::Uniform { low: 0.0, high: 150.0 });
            let (_, traces) = run_study_with_traces(&config, &dist).unwrap();
            let mut log = Vec::new();
            write_bid_trace(&traces, &mut log).unwrap();
            ingest_bid_reader(&log[..], 7.0, NoiseOptions::default()).unwrap()
        }
    };
    println!(
        "{} auctions from {} rows; {} bidders, {} bid more than once, {} rows dropped, {} anomalies",
        report.auctions,
        report.rows,
        report.bidders,
        report.multi_bid_bidders,
        report.removed_rows,
        report.anomalies.len()
    );
    let table = GTable::regular(150.0, 0.1, 50_000, 1).unwrap();
    let opts = FitOptions { selection: SelectionRule::Threshold(10.0), ..FitOptions::default() };
    for fraction in [0.5, 2.0 / 3.0] {
        let tt = train_test_eval(&data, fraction, 50, 7, &table, &opts).unwrap();
        println!(
            "train fraction {fraction:.2}: avg TV to the test fit, initial {:.4}, likelihood {:.4} ({} splits skipped)",
            tt.avg_tv_init, tt.avg_tv_mle, tt.skipped
        );
    }
}
