//! Best-worst scaling scores from a handful of pairwise judgements.

use prefrank::bws::{compute_bws, rank_of};
use prefrank::corpus::PairLabel;

fn main() -> prefrank::Result<()> {
    let pairs = vec![
        PairLabel::new("pun_a", "pun_b", 3),
        PairLabel::new("pun_b", "pun_a", 1),
        PairLabel::new("pun_a", "pun_c", 2),
        PairLabel::new("pun_c", "pun_b", 2),
    ];
    let ids = ["pun_a", "pun_b", "pun_c", "pun_d"];
    let scores = compute_bws(&ids, &pairs)?;
    for (id, s) in scores.iter() {
        println!("{id}\t{s:+.3}");
    }
    println!("ranking: {}", rank_of(&scores).join(" > "));
    Ok(())
}
