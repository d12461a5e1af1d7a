use auction_valuation::bands::envelope;
use auction_valuation::ingest::{clean_rows, read_dataset, write_dataset, BidRow, NoiseOptions};
use auction_valuation::lambda::{isotonic, GTable};
use auction_valuation::metrics::{binned_tv_distance, ks_distance, tv_distance};
use auction_valuation::mle::{coordinate_ascent, project_feasible, AscentOptions, LikelihoodContext};
use auction_valuation::model::{
    cdf_to_theta, jitter_ties, pool, theta_to_cdf, CurveKind, MonotoneCurve, Origin, ThetaVector,
};
use auction_valuation::rng::substream;
use auction_valuation::simulate::{replay_bids, run_study, ReservePolicy, SimConfig, ValuationDistribution};
use proptest::prelude::*;

fn linear_curve() -> impl Strategy<Value = MonotoneCurve> {
    (2usize..8, any::<u64>()).prop_map(|(n, seed)| {
        use rand::Rng;
        let mut rng = substream(seed, 0);
        let mut x = rng.random_range(0.0..2.0);
        let mut knots = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for _ in 0..n {
            knots.push(x);
            values.push(rng.random_range(0.0..1.0));
            x += rng.random_range(0.1..3.0);
        }
        values.sort_by(f64::total_cmp);
        if rng.random_bool(0.5) {
            *values.last_mut().unwrap() = 1.0;
        }
        MonotoneCurve::new(knots, values, CurveKind::Linear).unwrap()
    })
}

fn small_study() -> impl Strategy<Value = (SimConfig, ValuationDistribution)> {
    (0.1f64..2.0, 1usize..12, any::<u64>(), 0.0f64..8.0).prop_map(|(lambda, k, seed, reserve_high)| {
        let config = SimConfig::new(lambda, 10.0, k, seed)
            .with_reserve(ReservePolicy::Uniform { low: 0.0, high: reserve_high + 1e-3 });
        (config, ValuationDistribution::uniform(0.0, 10.0).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn theta_and_cdf_round_trip(theta in prop::collection::vec(0.5f64..0.999, 1..8)) {
        let z: Vec<f64> = (0..theta.len()).map(|i| i as f64 + 1.0).collect();
        let curve = theta_to_cdf(&ThetaVector(theta.clone()), &z).unwrap();
        prop_assert!(curve.values().windows(2).all(|w| w[0] <= w[1]));
        let back = cdf_to_theta(curve.values());
        for (a, b) in theta.iter().zip(&back.0) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn final_price_is_second_highest_of_reserve_and_bids(
        reserve in 0.0f64..5.0,
        values in prop::collection::vec(0.0f64..10.0, 0..12),
    ) {
        let bids: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 * 0.5 + 0.1, v)).collect();
        let auction = replay_bids(reserve, 10.0, &bids).unwrap();
        let mut all = vec![reserve, reserve];
        all.extend(values.iter().copied());
        all.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(auction.record.final_price(), all[1]);
        prop_assert_eq!(auction.record.sold(), values.iter().any(|&v| v >= reserve));
    }

    #[test]
    fn pooled_structure_is_consistent((config, dist) in small_study()) {
        let data = run_study(&config, &dist).unwrap();
        let p = pool(&data).unwrap();
        let jumps: usize = data.auctions().iter().map(|a| a.num_jumps()).sum();
        prop_assert_eq!(p.ell(), jumps);
        prop_assert_eq!(p.len(), data.len() + jumps);
        prop_assert!(p.z.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.xbar.windows(2).all(|w| w[0] < w[1]));
        for (j, &pos) in p.u.iter().enumerate() {
            prop_assert_eq!(p.z[pos], p.xbar[j]);
            let is_jump = matches!(p.origin[pos], Origin::Jump { .. });
            prop_assert!(is_jump);
        }
        for i in 0..p.len() {
            prop_assert_eq!(p.l[i], p.u.iter().filter(|&&pos| pos <= i).count());
            prop_assert_eq!(p.qsize[i], p.sbar.iter().filter(|&&pos| pos >= i).count());
        }
        let above = data.auctions().iter().filter(|a| a.num_jumps() > 0).count();
        prop_assert_eq!(p.s.len(), above);
        prop_assert!(p.sold.len() >= above);
        let hold: f64 = p.ttilde.iter().sum();
        prop_assert!((hold - data.len() as f64 * data.duration()).abs() < 1e-8 * hold.max(1.0));
    }

    #[test]
    fn ascent_stays_feasible_and_never_decreases((config, dist) in small_study(), constrained in any::<bool>()) {
        let data = run_study(&config, &dist).unwrap();
        let p = pool(&data).unwrap();
        let ctx = LikelihoodContext::new(&p, config.lambda).unwrap();
        let mut theta0 = ThetaVector(vec![0.5; p.len()]);
        project_feasible(&ctx, &mut theta0, constrained);
        let opts = AscentOptions { constrained, check_ascent: true, ..AscentOptions::default() };
        let res = coordinate_ascent(&ctx, &theta0, &opts).unwrap();
        prop_assert_eq!(res.violations, 0);
        prop_assert!(res.final_log_lik().is_finite());
        prop_assert!(res.theta.0.iter().all(|t| (0.0..=1.0).contains(t)));
        prop_assert!(res.final_log_lik() >= res.log[0] - 1e-9 * (1.0 + res.log[0].abs()));
        if constrained {
            if let Some(u1) = ctx.first_jump {
                prop_assert_eq!(&res.theta.0[..=u1], &theta0.0[..=u1]);
            }
        }
    }

    #[test]
    fn distances_are_symmetric_and_ordered(a in linear_curve(), b in linear_curve()) {
        let ks = ks_distance(&a, &b);
        let tv = tv_distance(&a, &b).unwrap();
        let binned = binned_tv_distance(&a, &b, 50).unwrap();
        prop_assert!((ks - ks_distance(&b, &a)).abs() < 1e-12);
        prop_assert!((tv - tv_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ks) && (0.0..=1.0).contains(&tv));
        prop_assert!(ks <= tv + 1e-9, "ks {ks} tv {tv}");
        prop_assert!(binned <= tv + 1e-9, "binned {binned} tv {tv}");
        prop_assert!(ks_distance(&a, &a) == 0.0 && tv_distance(&a, &a).unwrap() == 0.0);
    }

    #[test]
    fn envelope_brackets_every_curve(curves in prop::collection::vec(linear_curve(), 1..6)) {
        let band = envelope(&curves, 0.1).unwrap();
        prop_assert!(band.lower.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(band.upper.windows(2).all(|w| w[0] <= w[1]));
        for (i, &x) in band.knots.iter().enumerate() {
            prop_assert!(band.lower[i] <= band.upper[i]);
            for c in &curves {
                prop_assert!(band.lower[i] <= c.eval(x) && c.eval(x) <= band.upper[i]);
            }
        }
    }

    #[test]
    fn isotonic_fit_is_monotone_and_keeps_the_mean(values in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let fit = isotonic(&values);
        prop_assert_eq!(fit.len(), values.len());
        prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let (s0, s1): (f64, f64) = (values.iter().sum(), fit.iter().sum());
        prop_assert!((s0 - s1).abs() < 1e-9);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(isotonic(&sorted), sorted);
    }

    #[test]
    fn jitter_leaves_no_ties(
        base in prop::collection::vec(0u8..6, 2..30),
        seed in any::<u64>(),
    ) {
        let mut values: Vec<f64> = base.iter().map(|&v| v as f64).collect();
        let caps = vec![0.01; values.len()];
        jitter_ties(&mut values, &caps, &mut substream(seed, 0));
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert!(sorted.windows(2).all(|w| w[0] < w[1]));
        for (v, &b) in values.iter().zip(&base) {
            prop_assert!(*v >= b as f64 && *v < b as f64 + 0.01);
        }
    }

    #[test]
    fn dataset_csv_round_trip((config, dist) in small_study()) {
        let data = run_study(&config, &dist).unwrap();
        let prov = vec![("seed".to_string(), config.seed.to_string())];
        let mut buf = Vec::new();
        write_dataset(&data, &prov, &mut buf).unwrap();
        let (back, prov_back) = read_dataset(&buf[..]).unwrap();
        prop_assert_eq!(back, data);
        prop_assert_eq!(prov_back, prov);
    }

    #[test]
    fn cleaning_counts_duplicates(
        bids in prop::collection::vec((0u8..4, 0u8..5, 1.0f64..50.0, 0.0f64..7.0), 1..40),
    ) {
        let rows: Vec<BidRow> = bids
            .iter()
            .enumerate()
            .map(|(i, &(auction, bidder, bid, time))| BidRow {
                row: i as u64 + 2,
                auctionid: auction.to_string(),
                bid,
                bidtime: time,
                bidder: format!("b{bidder}"),
                bidderrate: None,
                openbid: 1.0 + auction as f64,
                price: 0.0,
            })
            .collect();
        let (data, report) = clean_rows(&rows, 7.0, NoiseOptions { seed: 1, amplitude: 0.0 }).unwrap();
        let mut pairs: Vec<(u8, u8)> = bids.iter().map(|b| (b.0, b.1)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let auctions = {
            let mut a: Vec<u8> = bids.iter().map(|b| b.0).collect();
            a.sort_unstable();
            a.dedup();
            a.len()
        };
        prop_assert_eq!(report.rows, rows.len());
        prop_assert_eq!(report.bidders, pairs.len());
        prop_assert_eq!(report.removed_rows, rows.len() - pairs.len());
        prop_assert!(report.multi_bid_bidders <= report.bidders);
        prop_assert_eq!(report.auctions, auctions);
        prop_assert_eq!(data.len(), auctions);
        for (a, id) in data.auctions().iter().zip(&report.auction_ids) {
            let retained = pairs.iter().filter(|p| p.0.to_string() == *id).count();
            prop_assert!(a.num_jumps() <= retained);
        }
    }
}

#[test]
fn g_table_is_monotone_and_inverts() {
    let table = GTable::regular(8.0, 0.1, 2_000, 3).unwrap();
    assert!(table.gvals().windows(2).all(|w| w[0] <= w[1]));
    let mut rng = substream(5, 0);
    for _ in 0..200 {
        use rand::Rng;
        let x: f64 = rng.random_range(0.2..7.9);
        let y = table.eval(x);
        let back = table.g_inverse(y).unwrap();
        assert!((table.eval(back) - y).abs() < 1e-9, "x {x} y {y} back {back}");
        assert!(back <= x + 1e-9);
    }
}
