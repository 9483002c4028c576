use std::path::PathBuf;

use clap::Args;
use footlift_core::ablation::{ablation_csv, run_ablation, AblationRow};
use footlift_core::io::{write_atomic, write_json};

use crate::{load_skeleton, CliResult, ConfigArgs};

#[derive(Args, Debug, Clone)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// CSV output; a JSON copy of the rows is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Trains every configured variant for every seed, evaluates on the
/// held-out profile and writes the comparison CSV.
pub fn run(args: &AblateArgs) -> CliResult<Vec<AblationRow>> {
    let cfg = args.config.load()?;
    let skeleton = load_skeleton(&cfg)?;
    let rows = run_ablation(&cfg, &skeleton, |r| {
        eprintln!(
            "{:<24} seed {:>3}  initial AJAE {:.2}°  refined AJAE {:.2}°  N-FKE_2d {:.5}",
            r.variant, r.seed, r.initial_ajae_deg, r.ajae_deg, r.n_fke_2d
        );
    })?;
    let csv = ablation_csv(&rows);
    write_atomic(&args.out, csv.as_bytes())?;
    write_json(&args.out.with_extension("json"), &rows)?;
    for line in csv.lines().filter(|l| l.starts_with("# ")) {
        println!("{line}");
    }
    Ok(rows)
}
