//! Bid-log ingestion and the canonical dataset file format.
//!
//! A bid log has one row per bid with the columns `auctionid, bid, bidtime,
//! bidder, bidderrate, openbid, price`. Cleaning keeps each bidder's latest
//! bid, optionally adds small uniform noise to separate ties, and replays the
//! remaining bids through the standing-price mechanics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{jitter_ties, AuctionRecord, Jump, ModelError, ObservedDataset};
use crate::rng::substream;
use crate::simulate::replay_bids;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: missing column {column}")]
    MissingColumn { row: u64, column: &'static str },
    #[error("row {row}: cannot parse {column} value {value:?}")]
    Unparseable { row: u64, column: &'static str, value: String },
    #[error("row {row}: {message}")]
    InvalidRow { row: u64, message: String },
    #[error("row {row}: duplicate of row {first} (same auction, bidder and time)")]
    Duplicate { row: u64, first: u64 },
    #[error("row {row}: bid time {time} exceeds duration {duration}")]
    LateBid { row: u64, time: f64, duration: f64 },
    #[error("auction {auction}: {source}")]
    Auction { auction: String, source: ModelError },
    #[error("no bids in input")]
    Empty,
    #[error("dataset file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One parsed bid-log row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidRow {
    pub row: u64,
    pub auctionid: String,
    pub bid: f64,
    pub bidtime: f64,
    pub bidder: String,
    pub bidderrate: Option<i64>,
    pub openbid: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseOptions {
    pub seed: u64,
    /// Upper bound of the Uniform noise added to each bid; 0 disables it.
    pub amplitude: f64,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions { seed: 0, amplitude: 0.01 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CleaningReport {
    pub auctions: usize,
    pub rows: usize,
    pub bidders: usize,
    /// Bidders who bid more than once in the same auction.
    pub multi_bid_bidders: usize,
    /// Earlier bids of multi-bid bidders that were dropped.
    pub removed_rows: usize,
    /// Retained bids closer than 0.01 to another bid in the same auction.
    pub close_pairs: usize,
    /// Reserves nudged apart because they tied across auctions.
    pub reserve_ties_jittered: usize,
    /// Auctions whose replay does not match the file's own summary.
    pub anomalies: Vec<String>,
    /// Auction ids in dataset order.
    pub auction_ids: Vec<String>,
}

const COLUMNS: [&str; 7] = ["auctionid", "bid", "bidtime", "bidder", "bidderrate", "openbid", "price"];

/// Parses and validates rows. Row numbers count the header as row 1.
pub fn read_bid_rows<R: Read>(input: R, duration: f64) -> Result<Vec<BidRow>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut pos = [0usize; 7];
    for (i, name) in COLUMNS.iter().enumerate() {
        pos[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or(IngestError::MissingColumn { row: 1, column: name })?;
    }
    let mut rows = Vec::new();
    let mut seen: HashMap<(String, String, u64), u64> = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 2;
        let field = |c: usize| rec.get(pos[c]).ok_or(IngestError::MissingColumn { row, column: COLUMNS[c] });
        let num = |c: usize| -> Result<f64, IngestError> {
            let s = field(c)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::Unparseable { row, column: COLUMNS[c], value: s.to_string() })
        };
        let bidderrate = match field(4)? {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0)
                    .map(|v| v as i64)
                    .ok_or_else(|| IngestError::Unparseable { row, column: "bidderrate", value: s.to_string() })?,
            ),
        };
        let r = BidRow {
            row,
            auctionid: field(0)?.to_string(),
            bid: num(1)?,
            bidtime: num(2)?,
            bidder: field(3)?.to_string(),
            bidderrate,
            openbid: num(5)?,
            price: num(6)?,
        };
        if r.bid <= 0.0 {
            return Err(IngestError::InvalidRow { row, message: format!("bid {} is not positive", r.bid) });
        }
        if r.openbid < 0.0 {
            return Err(IngestError::InvalidRow { row, message: format!("openbid {} is negative", r.openbid) });
        }
        if r.bidtime < 0.0 {
            return Err(IngestError::InvalidRow { row, message: format!("bidtime {} is negative", r.bidtime) });
        }
        if r.bidtime > duration {
            return Err(IngestError::LateBid { row, time: r.bidtime, duration });
        }
        let key = (r.auctionid.clone(), r.bidder.clone(), r.bidtime.to_bits());
        if let Some(&first) = seen.get(&key) {
            return Err(IngestError::Duplicate { row, first });
        }
        seen.insert(key, row);
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(rows)
}

/// Numeric order when every id is an integer, lexicographic otherwise.
fn order_ids(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().expect("checked"));
    } else {
        ids.sort();
    }
}

/// Cleans parsed rows into a dataset.
pub fn clean_rows(
    rows: &[BidRow],
    duration: f64,
    noise: NoiseOptions,
) -> Result<(ObservedDataset, CleaningReport), IngestError> {
    let mut groups: HashMap<&str, Vec<&BidRow>> = HashMap::new();
    for r in rows {
        groups.entry(r.auctionid.as_str()).or_default().push(r);
    }
    let mut ids: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
    order_ids(&mut ids);

    let mut report = CleaningReport { auctions: ids.len(), rows: rows.len(), ..Default::default() };
    let mut reserves = Vec::with_capacity(ids.len());
    let mut retained: Vec<Vec<(f64, f64)>> = Vec::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        let mut group = groups[id.as_str()].clone();
        group.sort_by(|a, b| a.bidtime.total_cmp(&b.bidtime).then(a.row.cmp(&b.row)));
        let open = group[0].openbid;
        if group.iter().any(|r| r.openbid != open) {
            report.anomalies.push(format!("auction {id}: openbid differs between rows, using {open}"));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &group {
            *counts.entry(r.bidder.as_str()).or_default() += 1;
        }
        report.bidders += counts.len();
        report.multi_bid_bidders += counts.values().filter(|&&c| c > 1).count();
        report.removed_rows += counts.values().map(|c| c - 1).sum::<usize>();
        // keep the latest bid of each bidder
        let mut seen = HashSet::new();
        let mut kept: Vec<&BidRow> = group.iter().rev().filter(|r| seen.insert(r.bidder.as_str())).copied().collect();
        kept.reverse();

        let mut values: Vec<f64> = kept.iter().map(|r| r.bid).collect();
        values.sort_by(f64::total_cmp);
        report.close_pairs += values.windows(2).filter(|w| w[1] - w[0] < 0.01).count();

        let mut rng = substream(noise.seed, k as u64);
        let bids: Vec<(f64, f64)> = kept
            .iter()
            .map(|r| {
                let eps = if noise.amplitude > 0.0 { rng.random::<f64>() * noise.amplitude } else { 0.0 };
                (r.bidtime, r.bid + eps)
            })
            .collect();
        reserves.push(open);
        retained.push(bids);
    }

    if noise.amplitude > 0.0 {
        // keep every retained bid above its (possibly nudged) reserve
        let caps: Vec<f64> = reserves
            .iter()
            .zip(&retained)
            .map(|(&r, bids)| {
                let gap = bids.iter().map(|b| b.1 - r).filter(|&g| g > 0.0).fold(f64::INFINITY, f64::min);
                noise.amplitude.min(0.5 * gap)
            })
            .collect();
        let mut rng = substream(noise.seed, ids.len() as u64);
        report.reserve_ties_jittered = jitter_ties(&mut reserves, &caps, &mut rng);
    }

    let mut auctions = Vec::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        let replay = replay_bids(reserves[k], duration, &retained[k])
            .map_err(|source| IngestError::Auction { auction: id.clone(), source })?;
        let above = retained[k].iter().filter(|b| b.1 > reserves[k]).count();
        let m = replay.record.num_jumps();
        if above > 0 && m + 1 != above {
            report.anomalies.push(format!(
                "auction {id}: {above} bids above the reserve but {m} standing-price changes"
            ));
        }
        auctions.push(replay.record);
    }
    report.auction_ids = ids;
    Ok((ObservedDataset::new(auctions)?, report))
}

/// Reads, cleans and replays a bid log.
pub fn ingest_bid_reader<R: Read>(
    input: R,
    duration: f64,
    noise: NoiseOptions,
) -> Result<(ObservedDataset, CleaningReport), IngestError> {
    let rows = read_bid_rows(input, duration)?;
    clean_rows(&rows, duration, noise)
}

pub fn ingest_bid_csv(
    path: &Path,
    duration: f64,
    noise: NoiseOptions,
) -> Result<(ObservedDataset, CleaningReport), IngestError> {
    ingest_bid_reader(std::fs::File::open(path)?, duration, noise)
}

const DATASET_HEADER: &str = "kind,auction,reserve,duration,sold,price,wait";

/// Writes the canonical dataset CSV: an `auction` row per auction followed
/// by its `jump` rows. `provenance` lines are written as `# key=value`.
pub fn write_dataset<W: Write>(dataset: &ObservedDataset, provenance: &[(String, String)], mut out: W) -> std::io::Result<()> {
    for (k, v) in provenance {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{DATASET_HEADER}")?;
    for (k, a) in dataset.auctions().iter().enumerate() {
        writeln!(out, "auction,{k},{},{},{},,", a.reserve(), a.duration(), u8::from(a.sold()))?;
        for j in a.jumps() {
            writeln!(out, "jump,{k},,,,{},{}", j.price, j.wait)?;
        }
    }
    Ok(())
}

pub fn export_dataset(dataset: &ObservedDataset, provenance: &[(String, String)], path: &Path) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(dataset, provenance, &mut w)?;
    w.flush()
}

/// Reads a canonical dataset CSV, returning it with its provenance lines.
pub fn read_dataset<R: BufRead>(input: R) -> Result<(ObservedDataset, Vec<(String, String)>), IngestError> {
    struct Pending {
        reserve: f64,
        duration: f64,
        sold: bool,
        jumps: Vec<Jump>,
    }
    let mut provenance = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let bad = |message: String| IngestError::Format { line: n, message };
        let t = line.trim();
        if t.is_empty() || t == DATASET_HEADER {
            continue;
        }
        if let Some(meta) = t.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                provenance.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let cols: Vec<&str> = t.split(',').collect();
        if cols.len() != 7 {
            return Err(bad(format!("expected 7 columns, found {}", cols.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {what} {s:?}")));
        let idx: usize = cols[1].parse().map_err(|_| bad(format!("bad auction index {:?}", cols[1])))?;
        match cols[0] {
            "auction" => {
                if idx != pending.len() {
                    return Err(bad(format!("auction {idx} out of order")));
                }
                let sold = match cols[4] {
                    "1" => true,
                    "0" => false,
                    s => return Err(bad(format!("bad sold flag {s:?}"))),
                };
                pending.push(Pending {
                    reserve: num(cols[2], "reserve")?,
                    duration: num(cols[3], "duration")?,
                    sold,
                    jumps: Vec::new(),
                });
            }
            "jump" => {
                if idx + 1 != pending.len() {
                    return Err(bad(format!("jump for auction {idx} outside its block")));
                }
                let j = Jump { price: num(cols[5], "price")?, wait: num(cols[6], "wait")? };
                pending.last_mut().expect("checked").jumps.push(j);
            }
            other => return Err(bad(format!("unknown row kind {other:?}"))),
        }
    }
    let auctions = pending
        .into_iter()
        .map(|p| AuctionRecord::new(p.reserve, p.duration, p.jumps, p.sold))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((ObservedDataset::new(auctions)?, provenance))
}

pub fn import_dataset(path: &Path) -> Result<(ObservedDataset, Vec<(String, String)>), IngestError> {
    read_dataset(BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "auctionid,bid,bidtime,bidder,bidderrate,openbid,price\n";

    fn ingest(body: &str, noise: f64) -> Result<(ObservedDataset, CleaningReport), IngestError> {
        ingest_bid_reader(format!("{HEADER}{body}").as_bytes(), 7.0, NoiseOptions { seed: 1, amplitude: noise })
    }

    #[test]
    fn single_bid_sells_at_reserve() {
        let (d, _) = ingest("1,30,0.5,alice,3,10,10\n", 0.0).unwrap();
        let a = &d.auctions()[0];
        assert_eq!(a.num_jumps(), 0);
        assert!(a.sold());
    }

    #[test]
    fn keeps_latest_bid_per_bidder() {
        let body = "1,20,0.5,alice,3,10,25\n1,22,1.0,bob,1,10,25\n1,30,2.0,alice,3,10,25\n";
        let (d, rep) = ingest(body, 0.0).unwrap();
        assert_eq!(rep.multi_bid_bidders, 1);
        assert_eq!(rep.removed_rows, 1);
        assert_eq!(rep.bidders, 2);
        let a = &d.auctions()[0];
        assert_eq!(a.jumps(), &[Jump { price: 22.0, wait: 2.0 }]);
    }

    #[test]
    fn row_level_errors_carry_row_numbers() {
        match ingest("1,20,0.5,a,3,10,25\n1,2x,0.7,b,3,10,25\n", 0.0) {
            Err(IngestError::Unparseable { row: 3, column: "bid", .. }) => {}
            other => panic!("{other:?}"),
        }
        match ingest("1,20,0.5,a,3,10,25\n1,21,0.5,a,3,10,25\n", 0.0) {
            Err(IngestError::Duplicate { row: 3, first: 2 }) => {}
            other => panic!("{other:?}"),
        }
        match ingest("1,20,7.5,a,3,10,25\n", 0.0) {
            Err(IngestError::LateBid { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let body = "1,20,0.5,a,3,10,25\n1,25,1.0,b,3,10,25\n2,30,0.5,c,3,10,31\n2,31,1.5,d,3,10,31\n";
        let (d1, rep) = ingest(body, 0.01).unwrap();
        let (d2, _) = ingest(body, 0.01).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(rep.reserve_ties_jittered, 2);
        let j = d1.auctions()[0].jumps()[0].price;
        assert!(j > 20.0 && j < 20.01);
        assert_ne!(d1.auctions()[0].reserve(), d1.auctions()[1].reserve());
    }

    #[test]
    fn ids_sort_numerically() {
        let (_, rep) = ingest("10,20,0.5,a,3,1,1\n9,20,0.5,a,3,2,1\n", 0.0).unwrap();
        assert_eq!(rep.auction_ids, vec!["9", "10"]);
    }

    #[test]
    fn dataset_file_round_trip() {
        let d = ObservedDataset::new(vec![
            AuctionRecord::new(0.1 + 0.2, 7.0, vec![Jump { price: 1.0 / 3.0, wait: 0.1 }], true).unwrap(),
            AuctionRecord::new(10.0, 7.0, vec![], false).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &[("seed".into(), "7".into())], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("auction,")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("jump,")).count(), 1);
        let (back, prov) = read_dataset(&buf[..]).unwrap();
        assert_eq!(back, d);
        assert_eq!(prov, vec![("seed".to_string(), "7".to_string())]);
    }
}
