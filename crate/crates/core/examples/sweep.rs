// Runs a λ sweep on the synthetic corpus and tests whether regularization
// raises boundary recall. `SWEEP_CONFIG` may name a key = value config; the
// default is a small demonstration grid.

use spixreg::experiment::{run_cells, summarize, to_csv, ExperimentConfig};
use spixreg::metrics::mann_whitney_one_sided;

pub fn demo_config() -> ExperimentConfig {
    ExperimentConfig {
        seeds: vec![0, 1],
        train: 24,
        val: 6,
        test: 6,
        size: 32,
        epochs: 2,
        ..ExperimentConfig::default()
    }
}

pub fn run(config: &ExperimentConfig) -> spixreg::Result<()> {
    let start = std::time::Instant::now();
    let cells = run_cells(config, None)?;
    for c in &cells {
        println!(
            "{} = {}, seed {}: ACC {:.4} BR {:.4} (epoch {})",
            config.sweep.name(),
            c.value,
            c.seed,
            c.accuracy,
            c.boundary_recall,
            c.best_epoch
        );
    }
    print!("{}", to_csv(config.sweep, &summarize(config, &cells)));
    if let [low, .., high] = config.values[..] {
        let br = |v: f64| cells.iter().filter(|c| c.value == v).map(|c| c.boundary_recall).collect::<Vec<_>>();
        let test = mann_whitney_one_sided(&br(high), &br(low))?;
        println!("BR({high}) > BR({low}): U = {}, p = {:.4}", test.u, test.p_value);
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> spixreg::Result<()> {
    let config = match std::env::var_os("SWEEP_CONFIG") {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => demo_config(),
    };
    run(&config)
}
