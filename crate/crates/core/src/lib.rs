//! Non-parametric estimation of a consumer valuation distribution from the
//! standing-price sequences of second-price auctions.
//!
//! The pipeline has two stages. The bidder arrival rate is estimated first by
//! inverting the monotone map from the thinned Poisson mean to the expected
//! number of standing-price changes ([`lambda`]). The valuation CDF is then
//! estimated by coordinate ascent on a profile likelihood written in
//! survival-ratio coordinates ([`mle`]), started from an initial estimator
//! built from final selling prices and first observed bids ([`initial`]).
//!
//! Supporting modules cover simulation ([`simulate`]), confidence bands
//! ([`bands`]), distances and replication studies ([`metrics`]), bid-log
//! ingestion ([`ingest`]) and the command-line surface ([`cli`]).
//!
//! ```no_run
//! use auction_valuation::prelude::*;
//!
//! let dist: ValuationDistribution = "uniform:1,20".parse().unwrap();
//! let config = SimConfig::new(1.0, 100.0, 200, 7);
//! let dataset = run_study(&config, &dist).unwrap();
//! let table = GTable::regular(10.0, 0.1, 20_000, 11).unwrap();
//! let fit = fit(&dataset, &table, &FitOptions::default()).unwrap();
//! println!("lambda_hat = {}", fit.lambda.lambda_hat);
//! println!("F(10.5) = {}", fit.f_mle.eval(10.5));
//! ```

pub mod bands;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod initial;
pub mod lambda;
pub mod metrics;
pub mod mle;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod simulate;

pub use error::{Error, ErrorClass, Result};

pub mod prelude {
    pub use crate::bands::{
        estimate_median_bias, hulc_band, hulc_batches, ConfidenceBand, EstimatorKind,
        MedianBiasEstimate,
    };
    pub use crate::error::{Error, Result};
    pub use crate::initial::{select_low_reserve, LowReserveSelection, SelectionRule};
    pub use crate::lambda::{estimate_lambda, GTable};
    pub use crate::metrics::{ks_distance, tv_distance, Target};
    pub use crate::mle::{coordinate_ascent, AscentOptions, LikelihoodContext};
    pub use crate::model::{
        pool, AuctionRecord, CurveKind, Jump, MonotoneCurve, ObservedDataset, PooledData,
        ThetaVector,
    };
    pub use crate::pipeline::{fit, Fit, FitOptions};
    pub use crate::simulate::{run_auction, run_study, ReservePolicy, SimConfig, ValuationDistribution};
}
