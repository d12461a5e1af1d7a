//! Replays one auction bid by bid and prints the standing-price path.

use auction_valuation::simulate::replay_bids;

fn main() {
    // (time, valuation); most arrivals never beat the standing price
    let bids = [
        (0.55, 8.05),
        (5.96, 5.09),
        (7.10, 3.20),
        (8.40, 4.75),
        (9.65, 12.82),
        (15.0, 6.10),
        (24.0, 10.14),
        (60.0, 9.30),
        (101.0, 7.70),
    ];
    let auction = replay_bids(2.0, 114.43, &bids).expect("valid bids");
    println!("{:>8} {:>8} {:>7} {:>9}", "time", "bid", "placed", "standing");
    let mut standing = auction.record.reserve();
    let mut next_jump = auction.jump_times.iter().zip(auction.record.jumps()).peekable();
    for ev in &auction.trace {
        if let Some((&t, j)) = next_jump.peek() {
            if t == ev.time {
                standing = j.price;
                next_jump.next();
            }
        }
        println!("{:>8.2} {:>8.2} {:>7} {:>9.2}", ev.time, ev.value, ev.placed, standing);
    }
    println!("reserve {}, final price {}", auction.record.reserve(), auction.record.final_price());
    for (t, j) in auction.jump_times.iter().zip(auction.record.jumps()) {
        println!("jump to {:.2} at t = {t:.2} after waiting {:.2}", j.price, j.wait);
    }
}
