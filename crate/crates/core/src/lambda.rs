//! Method-of-moments estimation of the bidder arrival rate.
//!
//! With `N ~ Poisson(x)` bidders above the reserve, the expected number of
//! standing-price changes is `g(x) = E[1{N>1} 2 sum_{i=2}^N 1/i]`. `g` is
//! tabulated by Monte Carlo over `N` only (the conditional mean is exact),
//! made monotone by isotonic regression, and inverted by interpolation.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::ObservedDataset;
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum LambdaError {
    #[error("mc_reps must be at least 1")]
    NoReplicates,
    #[error("grid must be ascending, finite and start at a non-negative value")]
    BadGrid,
    #[error("mean jump count must be non-negative, got {0}")]
    NegativeTarget(f64),
    #[error("table cannot be extended far enough to cover {0}")]
    OutOfRange(f64),
    #[error("low-reserve set is empty")]
    EmptyLowReserveSet,
    #[error("auction index {0} out of range")]
    BadIndex(usize),
    #[error("cache file: {0}")]
    Cache(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Expected number of standing-price changes given `n` bids above a
/// negligible reserve: 0 for `n <= 1`, else `2 sum_{i=2}^n 1/i`.
pub fn conditional_mean_jumps(n: u64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    2.0 * (2..=n).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Tabulated `g` on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GTable {
    grid: Vec<f64>,
    gvals: Vec<f64>,
    raw: Vec<f64>,
    mc_reps: usize,
    seed: u64,
    /// Grid spacing used when extending the table; `None` for irregular grids.
    spacing: Option<f64>,
}

fn mc_g(x: f64, mc_reps: usize, seed: u64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // each grid point has its own stream, so extensions reproduce old values
    let mut rng = substream(seed, x.to_bits());
    let poisson = Poisson::new(x).expect("positive mean");
    let mut cache: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for _ in 0..mc_reps {
        let n = poisson.sample(&mut rng) as usize;
        if n >= cache.len() {
            extend_harmonic(&mut cache, n);
        }
        total += cache[n];
    }
    total / mc_reps as f64
}

fn extend_harmonic(cache: &mut Vec<f64>, n: usize) {
    if cache.is_empty() {
        cache.extend([0.0, 0.0]);
    }
    while cache.len() <= n {
        let i = cache.len();
        let prev = cache[i - 1];
        cache.push(prev + 2.0 / i as f64);
    }
}

/// Pool-adjacent-violators for equal weights.
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb));
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Builds a table on an arbitrary ascending grid.
pub fn build_g_table(grid: &[f64], mc_reps: usize, seed: u64) -> Result<GTable, LambdaError> {
    if mc_reps < 1 {
        return Err(LambdaError::NoReplicates);
    }
    if grid.is_empty()
        || grid[0] < 0.0
        || grid.iter().any(|x| !x.is_finite())
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(LambdaError::BadGrid);
    }
    let raw: Vec<f64> = grid.par_iter().map(|&x| mc_g(x, mc_reps, seed)).collect();
    let mut table = GTable {
        grid: grid.to_vec(),
        gvals: Vec::new(),
        raw,
        mc_reps,
        seed,
        spacing: None,
    };
    table.project();
    Ok(table)
}

impl GTable {
    /// Table on `0, h, 2h, ...` up to at least `upper`.
    pub fn regular(upper: f64, spacing: f64, mc_reps: usize, seed: u64) -> Result<Self, LambdaError> {
        if !(spacing > 0.0 && upper >= 0.0 && upper.is_finite()) {
            return Err(LambdaError::BadGrid);
        }
        let n = (upper / spacing).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * spacing).collect();
        let mut t = build_g_table(&grid, mc_reps, seed)?;
        t.spacing = Some(spacing);
        Ok(t)
    }

    fn project(&mut self) {
        let mut g = isotonic(&self.raw);
        if self.grid[0] == 0.0 {
            g[0] = 0.0;
        }
        self.gvals = g;
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn gvals(&self) -> &[f64] {
        &self.gvals
    }

    pub fn mc_reps(&self) -> usize {
        self.mc_reps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn upper(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    /// Interpolated `g(x)` inside the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let j = self.grid.partition_point(|&v| v <= x);
        if j == 0 {
            return self.gvals[0];
        }
        if j == self.grid.len() {
            return self.gvals[j - 1];
        }
        let t = (x - self.grid[j - 1]) / (self.grid[j] - self.grid[j - 1]);
        self.gvals[j - 1] + t * (self.gvals[j] - self.gvals[j - 1])
    }

    /// Doubles the grid range until `g` reaches `y`.
    pub fn extend_to_cover(&mut self, y: f64) -> Result<(), LambdaError> {
        // a Poisson mean past 1e7 would need an astronomically large jump count
        while self.gvals.last().copied().unwrap_or(0.0) < y {
            let upper = self.upper();
            if upper > 1e7 {
                return Err(LambdaError::OutOfRange(y));
            }
            let h = self.spacing.unwrap_or_else(|| {
                self.grid.windows(2).last().map_or(0.1, |w| w[1] - w[0])
            });
            let start = self.grid.len();
            let target = (2.0 * upper).max(upper + h);
            let first = self.spacing.map_or(0, |_| start);
            let mut extra = Vec::new();
            let mut i = 1;
            loop {
                let x = match self.spacing {
                    Some(h) => (first + i - 1) as f64 * h,
                    None => upper + i as f64 * h,
                };
                if x > target + 1e-12 {
                    break;
                }
                extra.push(x);
                i += 1;
            }
            let vals: Vec<f64> = extra.par_iter().map(|&x| mc_g(x, self.mc_reps, self.seed)).collect();
            self.grid.extend(extra);
            self.raw.extend(vals);
            self.project();
        }
        Ok(())
    }

    /// Smallest `x` with `g(x) = y`, by linear interpolation on the table.
    /// The table is extended on a clone when `y` lies beyond its range.
    pub fn g_inverse(&self, y: f64) -> Result<f64, LambdaError> {
        if !(y >= 0.0) {
            return Err(LambdaError::NegativeTarget(y));
        }
        if y == 0.0 {
            return Ok(self.grid[0]);
        }
        if *self.gvals.last().expect("non-empty") < y {
            let mut bigger = self.clone();
            bigger.extend_to_cover(y)?;
            return bigger.g_inverse(y);
        }
        let j = self.gvals.partition_point(|&g| g < y);
        if j == 0 {
            return Ok(self.grid[0]);
        }
        let (g0, g1) = (self.gvals[j - 1], self.gvals[j]);
        let t = (y - g0) / (g1 - g0);
        Ok(self.grid[j - 1] + t * (self.grid[j] - self.grid[j - 1]))
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), LambdaError> {
        writeln!(out, "# mc_reps={}", self.mc_reps)?;
        writeln!(out, "# seed={}", self.seed)?;
        match self.spacing {
            Some(h) => writeln!(out, "# spacing={h}")?,
            None => writeln!(out, "# spacing=none")?,
        }
        writeln!(out, "grid,gval,raw")?;
        for ((x, g), r) in self.grid.iter().zip(&self.gvals).zip(&self.raw) {
            writeln!(out, "{x},{g},{r}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self, LambdaError> {
        let mut mc_reps = None;
        let mut seed = None;
        let mut spacing = None;
        let (mut grid, mut gvals, mut raw) = (Vec::new(), Vec::new(), Vec::new());
        let bad = |m: &str| LambdaError::Cache(m.to_string());
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.trim().split_once('=').ok_or_else(|| bad("malformed header"))?;
                match k.trim() {
                    "mc_reps" => mc_reps = Some(v.trim().parse().map_err(|_| bad("mc_reps"))?),
                    "seed" => seed = Some(v.trim().parse().map_err(|_| bad("seed"))?),
                    "spacing" => {
                        spacing = Some(match v.trim() {
                            "none" => None,
                            s => Some(s.parse::<f64>().map_err(|_| bad("spacing"))?),
                        })
                    }
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line.starts_with("grid") {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("unparseable row"))?;
            if cols.len() != 3 {
                return Err(bad("expected three columns"));
            }
            grid.push(cols[0]);
            gvals.push(cols[1]);
            raw.push(cols[2]);
        }
        if grid.is_empty() {
            return Err(bad("no rows"));
        }
        Ok(GTable {
            grid,
            gvals,
            raw,
            mc_reps: mc_reps.ok_or_else(|| bad("missing mc_reps"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            spacing: spacing.ok_or_else(|| bad("missing spacing"))?,
        })
    }

    /// Loads a cached regular table when its parameters match, otherwise
    /// builds one and writes it to `path`.
    pub fn load_or_build(
        path: &Path,
        upper: f64,
        spacing: f64,
        mc_reps: usize,
        seed: u64,
    ) -> Result<Self, LambdaError> {
        if let Ok(f) = std::fs::File::open(path) {
            match GTable::load(BufReader::new(f)) {
                Ok(t) if t.mc_reps == mc_reps && t.seed == seed && t.spacing == Some(spacing) => {
                    if t.upper() >= upper {
                        return Ok(t);
                    }
                }
                Ok(_) => log::info!("g table cache {} has different parameters, rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable g table cache {}: {e}", path.display()),
            }
        }
        let t = GTable::regular(upper, spacing, mc_reps, seed)?;
        t.save(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    /// Mean jump count over the low-reserve auctions.
    pub mean_jumps: f64,
    /// `g^{-1}` of the mean, i.e. `lambda_hat * tau`.
    pub argument: f64,
    pub used: usize,
}

/// `lambda_hat = g^{-1}(mean M over low_reserve) / tau`.
pub fn estimate_lambda(
    dataset: &ObservedDataset,
    table: &GTable,
    low_reserve: &[usize],
) -> Result<LambdaEstimate, LambdaError> {
    if low_reserve.is_empty() {
        return Err(LambdaError::EmptyLowReserveSet);
    }
    let auctions = dataset.auctions();
    let mut total = 0usize;
    for &k in low_reserve {
        total += auctions.get(k).ok_or(LambdaError::BadIndex(k))?.num_jumps();
    }
    let mean_jumps = total as f64 / low_reserve.len() as f64;
    let argument = table.g_inverse(mean_jumps)?;
    Ok(LambdaEstimate {
        lambda_hat: argument / dataset.duration(),
        mean_jumps,
        argument,
        used: low_reserve.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_pmf(x: f64, n: u64) -> f64 {
        let mut ln = -x + n as f64 * x.ln();
        for i in 1..=n {
            ln -= (i as f64).ln();
        }
        ln.exp()
    }

    // truncated series for g, independent of the Monte Carlo path
    fn g_series(x: f64, terms: u64) -> f64 {
        (2..terms).map(|n| poisson_pmf(x, n) * conditional_mean_jumps(n)).sum()
    }

    #[test]
    fn conditional_mean_values() {
        assert_eq!(conditional_mean_jumps(0), 0.0);
        assert_eq!(conditional_mean_jumps(1), 0.0);
        assert_eq!(conditional_mean_jumps(2), 1.0);
        let v = 2.0 * (1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 4.0 + 1.0 / 5.0);
        assert!((conditional_mean_jumps(5) - v).abs() < 1e-15);
    }

    #[test]
    fn table_is_monotone_with_pinned_zero() {
        let t = GTable::regular(5.0, 0.1, 2_000, 3).unwrap();
        assert_eq!(t.grid().len(), 51);
        assert_eq!(t.gvals()[0], 0.0);
        assert!(t.gvals().windows(2).all(|w| w[0] <= w[1]));
        assert!((t.eval(5.0) - g_series(5.0, 60)).abs() < 0.05);
    }

    #[test]
    fn monte_carlo_matches_series() {
        let t = build_g_table(&[5.0], 200_000, 9).unwrap();
        assert!((t.gvals()[0] - g_series(5.0, 60)).abs() < 3e-3);
    }

    #[test]
    fn inverse_round_trip_and_extension() {
        let t = GTable::regular(5.0, 0.1, 2_000, 5).unwrap();
        assert_eq!(t.g_inverse(0.0).unwrap(), 0.0);
        for (i, &g) in t.gvals().iter().enumerate().skip(1) {
            if g > t.gvals()[i - 1] {
                assert!((t.eval(t.g_inverse(g).unwrap()) - g).abs() < 1e-12);
            }
        }
        assert!(t.g_inverse(-1.0).is_err());
        let target = g_series(30.0, 200);
        let x = t.g_inverse(target).unwrap();
        assert!((x - 30.0).abs() < 1.0, "{x}");
        let mut ext = t.clone();
        ext.extend_to_cover(target).unwrap();
        assert!(ext.upper() >= 30.0);
        // extending keeps the original raw values
        assert_eq!(&ext.raw[..t.raw.len()], &t.raw[..]);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn cache_round_trip() {
        let t = GTable::regular(2.0, 0.5, 100, 1).unwrap();
        let mut buf = Vec::new();
        t.save(&mut buf).unwrap();
        let back = GTable::load(&buf[..]).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn zero_jumps_give_zero_rate() {
        use crate::model::{AuctionRecord, ObservedDataset};
        let d = ObservedDataset::new(vec![
            AuctionRecord::new(0.0, 10.0, vec![], false).unwrap(),
            AuctionRecord::new(1.0, 10.0, vec![], true).unwrap(),
        ])
        .unwrap();
        let t = GTable::regular(1.0, 0.1, 10, 1).unwrap();
        assert_eq!(estimate_lambda(&d, &t, &[0, 1]).unwrap().lambda_hat, 0.0);
        assert!(matches!(estimate_lambda(&d, &t, &[]), Err(LambdaError::EmptyLowReserveSet)));
    }
}
