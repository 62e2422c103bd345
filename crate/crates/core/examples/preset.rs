//! Trains one preset and prints its summary.
//!
//! `cargo run --release -p pinnkit --example preset -- heat 3`

use pinnkit::trainer::{train, RunConfig};

fn main() -> pinnkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "linear".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = match name.as_str() {
        "linear" => RunConfig::linear(seed),
        "quadratic" => RunConfig::quadratic(seed),
        "heat" => RunConfig::heat_forward(seed),
        "inverse" => RunConfig::heat_inverse(seed),
        other => {
            eprintln!("unknown preset `{other}` (linear, quadratic, heat, inverse)");
            std::process::exit(1);
        }
    };
    if let Some(epochs) = args.next().and_then(|s| s.parse().ok()) {
        cfg.epochs = epochs;
    }
    let report = train(&cfg)?;
    println!("status      {:?}", report.status);
    if let Some(first) = report.curve.first() {
        println!("epoch 1     {:e}", first.total);
    }
    println!("final loss  {:e}", report.final_loss.total);
    for (region, mse) in &report.gt_mse {
        println!("gt mse      {region:<8} {mse:e}");
    }
    if let Some(d) = report.final_d {
        println!("D           {d}");
    }
    println!("wall time   {:.2} s", report.wall_time_s);
    Ok(())
}
