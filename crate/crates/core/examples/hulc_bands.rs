//! HulC confidence band for the valuation CDF, written as CSV and SVG.
//!
//! Run with an output directory: `cargo run --example hulc_bands -- out/`.

use std::path::PathBuf;

use auction_valuation::bands::{estimate_median_bias, hulc_band, hulc_batches, transformed_reserves, EstimatorKind};
use auction_valuation::lambda::GTable;
use auction_valuation::pipeline::{fit, FitOptions};
use auction_valuation::plot::{collect_series, render_svg, Series};
use auction_valuation::simulate::{run_study, SimConfig, ValuationDistribution};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let dist = ValuationDistribution::uniform(1.0, 20.0).unwrap();
    let data = run_study(&SimConfig::new(1.0, 100.0, 1000, 8), &dist).unwrap();
    let table = GTable::regular(150.0, 0.1, 50_000, 1).unwrap();
    let opts = FitOptions::default();
    let full = fit(&data, &table, &opts).unwrap();

    let profile = transformed_reserves(&data, &full.selection.members, &full.f_mle);
    let kind = EstimatorKind::ConstrainedMle;
    let bias =
        estimate_median_bias(kind, data.len(), full.lambda.lambda_hat, 100.0, &profile, 100, 9, &table, &opts).unwrap();
    let batches = hulc_batches(0.10, bias.delta).unwrap();
    println!("median bias {:.4}, {batches} batches", bias.delta);

    let band = hulc_band(&data, kind, 0.10, bias.delta, 10, &table, &opts).unwrap().with_estimate(&full.f_mle);
    let grid: Vec<f64> = (10..=200).map(|i| i as f64 / 10.0).collect();
    println!("mean width on [1, 20]: {:.4}", band.mean_width_on(&grid));
    let (lo, hi) = (band.lower_curve(), band.upper_curve());
    let covered = grid.iter().filter(|&&x| (lo.eval(x)..=hi.eval(x)).contains(&dist.cdf(x))).count();
    println!("true CDF inside the band at {covered} of {} grid points", grid.len());

    band.write_csv(std::fs::File::create(dir.join("band.csv")).unwrap()).unwrap();
    let mut series = collect_series(&[("cmle", &full.f_mle)], Some(&band));
    series.push(Series { name: "truth".into(), points: grid.iter().map(|&x| (x, dist.cdf(x))).collect() });
    std::fs::write(dir.join("band.svg"), render_svg(&series, "90% HulC band")).unwrap();
    println!("wrote {}", dir.join("band.svg").display());
}
