//! Writes a corpus of labeled capsule figures to disk in the layout the
//! command-line tool reads: `<dir>/train`, `<dir>/test` (OFF meshes with
//! `.labels` files) and `<dir>/landmarks` (flow sources and sinks).
//!
//! ```text
//! cargo run --release --example make_figures -- <dir> [train] [test] [seed] [spacing]
//! ```

use std::path::PathBuf;

use patchseg::synthetic::{figure_corpus, FigureParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map(String::as_str).unwrap_or("figures"));
    let n_train: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(15);
    let n_test: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let seed: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let spacing: f64 = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(0.05);
    let params = FigureParams { spacing, ..Default::default() };
    let landmarks = dir.join("landmarks");
    std::fs::create_dir_all(&landmarks)?;
    for (k, fig) in figure_corpus(n_train + n_test, seed, &params).into_iter().enumerate() {
        let split = dir.join(if k < n_train { "train" } else { "test" });
        std::fs::create_dir_all(&split)?;
        fig.save(&split, &landmarks)?;
        println!("{}\t{}\t{} vertices", split.display(), fig.name, fig.mesh.vertex_count());
    }
    Ok(())
}
