//! Pools reserves and standing prices from several auctions into the
//! ordered structure the likelihood works on.

use auction_valuation::model::{pool, AuctionRecord, Jump, ObservedDataset, Origin};

fn main() {
    let j = |v: &[f64]| v.iter().map(|&price| Jump { price, wait: 1.0 }).collect::<Vec<_>>();
    let data = ObservedDataset::new(vec![
        AuctionRecord::new(10.0, 100.0, j(&[12.0, 15.0, 19.0]), true).unwrap(),
        AuctionRecord::new(5.0, 100.0, j(&[16.0, 18.0, 20.0, 25.0]), true).unwrap(),
        AuctionRecord::new(8.0, 100.0, vec![], false).unwrap(),
    ])
    .unwrap();
    let p = pool(&data).unwrap();
    println!("{:>3} {:>6} {:>8} {:>16} {:>3} {:>3}", "i", "z", "holding", "origin", "l", "|Q|");
    for i in 0..p.len() {
        let origin = match p.origin[i] {
            Origin::Reserve { auction } => format!("reserve of {auction}"),
            Origin::Jump { auction, index } => format!("jump {index} of {auction}"),
        };
        println!("{i:>3} {:>6} {:>8} {origin:>16} {:>3} {:>3}", p.z[i], p.ttilde[i], p.l[i], p.qsize[i]);
    }
    println!("jump prices {:?}", p.xbar);
    println!("final prices sit at z positions {:?}", p.sbar);
}
