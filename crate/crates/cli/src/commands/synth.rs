use std::path::PathBuf;

use clap::Args;
use footlift_core::io::{write_json, write_motion, write_observation, Manifest, ManifestEntry, SkeletonRef, FORMAT_VERSION, MANIFEST_NAME};
use footlift_core::synth::{derived_rng, generate_sequence, initial_motion, make_example, profile_by_name, KneeSource};

use crate::{create_dir, load_skeleton, CliResult, ConfigArgs};

const STREAM_MOTION: u64 = 21;
const STREAM_EXAMPLE: u64 = 22;

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of sequences (overrides `synth_sequences`).
    #[arg(short = 'n', long)]
    pub count: Option<usize>,
}

/// Writes `<name>.motion.json` (ground truth), `<name>.obs.json` and
/// `<name>.init.json` (the simulated estimate as a motion) per sequence,
/// then the manifest.
pub fn run(args: &SynthArgs) -> CliResult<Manifest> {
    let cfg = args.config.load()?;
    let skeleton = load_skeleton(&cfg)?;
    let t = &cfg.train;
    let profile = profile_by_name(&t.profile)?;
    let n = args.count.unwrap_or(cfg.synth_sequences);
    create_dir(&args.out)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let seq = generate_sequence(profile.as_ref(), t.seq_len, t.fps, &mut derived_rng(t.seed, i as u64, STREAM_MOTION))?;
        let mut rng = derived_rng(t.seed, i as u64, STREAM_EXAMPLE);
        let ex = make_example(&seq, &skeleton, &t.camera, &t.noise, t.augment, KneeSource::Estimated, &mut rng)?;
        let name = format!("seq{i:04}");
        let entry = ManifestEntry {
            motion: format!("{name}.motion.json"),
            observation: format!("{name}.obs.json"),
            initial: format!("{name}.init.json"),
            name,
        };
        let inline = SkeletonRef::Inline(skeleton.clone());
        write_motion(&args.out.join(&entry.motion), &ex.gt_sequence, inline.clone())?;
        write_observation(&args.out.join(&entry.observation), &ex.observation)?;
        write_motion(&args.out.join(&entry.initial), &initial_motion(&ex, &skeleton)?, inline)?;
        entries.push(entry);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: t.seed,
        profile: t.profile.clone(),
        config: cfg.to_text(),
        sequences: entries,
    };
    write_json(&args.out.join(MANIFEST_NAME), &manifest)?;
    eprintln!("wrote {n} sequences to {}", args.out.display());
    Ok(manifest)
}
