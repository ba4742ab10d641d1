//! Prints `log Π(p)` for `p = 2^{-k}` under both threshold conventions.
//!
//! Usage: `cargo run --release --example table3 -- [k_max] [threads]`

use bpdp::chain::{compute_pi, ChainParams, Convention};
use bpdp::ModelParams;
use std::time::Instant;

fn main() -> bpdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let k_max: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let threads: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    println!("k,L,convention,log_pi,seconds");
    for k in 2..=k_max {
        let model = ModelParams::from_log2_inv_p(k)?;
        for convention in [Convention::HitExactly, Convention::HitAtLeast] {
            let params = ChainParams { convention, ..ChainParams::for_model(model) };
            let start = Instant::now();
            let r = compute_pi(&params, threads)?;
            println!(
                "{k},{},{},{:.17e},{:.3}",
                params.threshold,
                convention.label(),
                r.log_pi,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
