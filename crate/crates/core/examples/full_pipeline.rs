//! The whole pipeline on a small figure corpus, through the same entry
//! points the command-line tool uses: preprocess → train → predict →
//! evaluate. Settings are scaled down so it finishes in a few minutes; the
//! acceptance benchmark uses 15 training and 5 test figures.
//!
//! ```text
//! cargo run --release --example full_pipeline [-- <work dir>]
//! ```

use std::path::PathBuf;

use patchseg::commands;
use patchseg::config::RunConfig;
use patchseg::synthetic::{figure_corpus, FigureParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let tmp = tempfile::tempdir()?;
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let (n_train, n_test) = (6, 2);
    for sub in ["train", "test", "landmarks"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    for (k, fig) in figure_corpus(n_train + n_test, 1, &FigureParams { spacing: 0.065, ..Default::default() }).iter().enumerate() {
        fig.save(&dir.join(if k < n_train { "train" } else { "test" }), &dir.join("landmarks"))?;
    }
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "seed = 1\n[pipeline]\nresolution = 16\n[descriptors]\neigenpairs = 60\nagd_samples = 16\n[train]\nepochs = 10\nper_label = 500\nlr = log:1e-2:1e-4\n",
    )?;
    cfg.paths.landmarks = Some(dir.join("landmarks"));
    cfg.paths.output = dir.join("out");

    cfg.paths.meshes = Some(dir.join("train"));
    let summary = commands::cmd_preprocess(&cfg)?;
    print!("{}", summary.to_text());
    let (_, report) = commands::cmd_train(&cfg)?;
    print!("{}", report.to_text());
    cfg.paths.meshes = Some(dir.join("test"));
    commands::cmd_predict(&cfg)?;
    let rep = commands::cmd_evaluate(&cfg)?;
    println!("\n{}", std::fs::read_to_string(cfg.paths.output.join("report.txt"))?);
    println!("held-out ACC {:.4}", rep.acc);
    Ok(())
}
