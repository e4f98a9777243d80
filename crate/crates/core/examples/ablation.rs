//! Runs the synthetic transfer ablation with default settings and prints
//! the report. Usage: `cargo run --release --example ablation [runs]`.

use std::time::Instant;

use nastransfer::pipeline::{run_synthetic_benchmark, SynthBenchConfig};

fn main() -> nastransfer::Result<()> {
    let runs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let cfg = SynthBenchConfig { runs, ..SynthBenchConfig::default() };
    let start = Instant::now();
    let result = run_synthetic_benchmark(&cfg, None)?;
    print!("{}", result.report.to_table());
    let pre: f64 = result.timings.iter().map(|t| t.2.pre_search_secs).sum();
    let search: f64 = result.timings.iter().map(|t| t.2.search_secs).sum();
    println!("\npre-search {pre:.2}s, search {search:.2}s, total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
