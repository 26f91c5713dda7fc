//! Runs the synthetic benchmark for a few seeds and prints the headline
//! comparisons: base vs CUE calibration on the test split, cue-token
//! recovery and the single-bin ablation curve.
//!
//! Usage: `cargo run --release -p cue-core --example benchmark [seeds] [config.json]`
//!
//! The optional JSON file holds a full `BenchmarkConfig`.

use cue_core::benchmark::{run_benchmark, BenchmarkConfig};
use cue_core::dataset::{SplitTag, CUE_TOKEN_TEXT};
use cue_core::evaluate::{predict_split, EvalOptions, Plugin, Variant};
use cue_core::interpret::{ablate_dims, ufi, AblationConfig};
use cue_core::metrics::{spearman, CalibrationReport};
use cue_core::numerics::{entropy, norm_sq, sub, LogBase, RngState};

fn main() -> cue_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg: BenchmarkConfig = match std::env::args().nth(2) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).expect("readable config");
            serde_json::from_str(&text).expect("valid BenchmarkConfig JSON")
        }
        None => BenchmarkConfig::default(),
    };
    let opts = EvalOptions::default();
    for seed in 0..seeds {
        let run = run_benchmark(&cfg, seed)?;
        let ds = &run.data.dataset;
        let model = &run.cue.model;
        let mut rng = RngState::new(seed);
        let base = predict_split(&run.head, Plugin::None, Variant::Base, ds, SplitTag::Test, &opts, &mut rng)?;
        let cue = predict_split(&run.head, Plugin::Cue(model), Variant::Cue, ds, SplitTag::Test, &opts, &mut rng)?;
        let rb = CalibrationReport::compute(&base, &opts.report)?;
        let rc = CalibrationReport::compute(&cue, &opts.report)?;
        println!(
            "seed {seed}: acc {:.4} -> {:.4}  ece {:.4} -> {:.4}  H {:.4} -> {:.4}  agree {:.4}",
            rb.accuracy,
            rc.accuracy,
            rb.ece,
            rc.ece,
            rb.avg_entropy,
            rc.avg_entropy,
            base.argmax_agreement(&cue)?
        );

        let test = ds.split_indices(SplitTag::Test);
        let (mut dist, mut dh) = (Vec::new(), Vec::new());
        for (k, &i) in test.iter().enumerate() {
            let e = ds.embedding(i);
            dist.push(norm_sq(&sub(&model.reconstruct_mean(e)?, e)));
            dh.push(
                entropy(&cue.probs()[k], LogBase::Natural)? - entropy(&base.probs()[k], LogBase::Natural)?,
            );
        }
        println!("  spearman(|e'-e|^2, dH) {:.4}", spearman(&dist, &dh)?);

        let alpha = model.latent_dim() / 10;
        let (mut hits, mut total) = (0, 0);
        for &i in &test {
            if !run.data.truth[i].is_ambiguous() {
                continue;
            }
            let report = ufi(model, &run.head, ds, i, alpha)?;
            total += 1;
            if report.tokens.iter().take(2).any(|t| t.token == CUE_TOKEN_TEXT) {
                hits += 1;
            }
        }
        println!("  cue token top-2 {hits}/{total} = {:.4}", hits as f64 / total as f64);

        let curve = ablate_dims(model, &run.head, ds, SplitTag::Test, &AblationConfig::default())?;
        let b = &curve.baseline;
        for p in &curve.points {
            println!(
                "  bin {}: dacc {:+.4} df1 {:+.4} dH {:+.4} dece {:+.4}",
                p.bin,
                p.accuracy - b.accuracy,
                p.macro_f1 - b.macro_f1,
                p.avg_entropy - b.avg_entropy,
                p.ece - b.ece
            );
        }
    }
    Ok(())
}
