//! Config-driven run: write a JSON config, load and validate it, run a genus
//! sweep and store JSON-lines records under MASSFLOW_OUT (or a temporary
//! directory), then read them back.

use anyhow::Result;
use massflow::config::ExperimentConfig;
use massflow::minmax::{estimate_genus_level, GenusOptions};
use massflow::record::{append_json_line, read_records};
use massflow::DomainSpec;

fn main() -> Result<()> {
    let base = ExperimentConfig {
        id: "example".into(),
        domain: DomainSpec::Interval {
            a: 0.0,
            b: 1.0,
            n: 127,
        },
        mu_list: vec![1e-2, 1e-3],
        k_list: vec![2, 3],
        ..ExperimentConfig::default()
    };
    let tmp = std::env::temp_dir().join("massflow-example");
    let cfg = ExperimentConfig {
        output_dir: tmp,
        ..base
    };
    let out = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out)?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()?)?;

    let cfg = ExperimentConfig::load(&cfg_path)?;
    let hash = cfg.sha256()?;
    let records = out.join("records.jsonl");
    let _ = std::fs::remove_file(&records);
    let d = cfg.domain.build()?;
    let opts = GenusOptions {
        seed: cfg.seed,
        id: cfg.id.clone(),
        ..GenusOptions::default()
    };
    for &k in &cfg.k_list {
        for &mu in &cfg.mu_list {
            let mut rec = estimate_genus_level(&d, k, mu, 1.0, cfg.p, &opts)?.record;
            rec.config_sha256 = Some(hash.clone());
            append_json_line(&records, &rec)?;
        }
    }
    for r in read_records(&records)? {
        println!(
            "k = {:?}, mu = {:.0e}: lambda = {:.6}, E/mu = {:.6}, Morse {:?}",
            r.k,
            r.mu,
            r.lambda,
            r.energy / r.mu,
            r.morse
        );
    }
    println!("records in {}", records.display());
    Ok(())
}
