//! Drive a subcommand from code: load a config with overrides, run it and
//! write the report into `out/example`.

use std::path::Path;

use spectral_tori::cli::{run_subcommand, write_outputs, ExperimentConfig};

fn main() -> spectral_tori::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/kruskal.json");
    let cfg = ExperimentConfig::load(Some(&path), &["grid.n2=32".into()])?;
    let out = run_subcommand("kruskal", &cfg)?;
    for ch in &out.report.checks {
        println!("{:<12} {:?} bound {:e} passed {}", ch.name, ch.value, ch.bound, ch.passed);
    }
    write_outputs(Path::new("out/example"), &out)?;
    println!("report written to out/example/report.json");
    Ok(())
}
