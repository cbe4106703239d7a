//! Vertex-to-face voting, area-weighted accuracy of a deliberately
//! corrupted segmentation, a report table, and a colored PLY export.
//!
//! ```text
//! cargo run --release --example evaluate [-- <out.ply>]
//! ```

use patchseg::evaluation::{accuracy, export_colored, report_text, truth_face_labels, vertex_to_face_labels, EvalMesh, ReportRow};
use patchseg::synthetic::{figure_corpus, FigureParams};
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let figs = figure_corpus(3, 9, &FigureParams { spacing: 0.065, ..Default::default() });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let seed = 0;
    let mut faces = Vec::new();
    for (k, f) in figs.iter().enumerate() {
        // flip 10% of the vertex labels
        let mut labels = f.mesh.labels().unwrap().to_vec();
        for l in labels.iter_mut() {
            if rng.gen_bool(0.1) {
                *l = rng.gen_range(0..8);
            }
        }
        let pred = vertex_to_face_labels(&f.mesh, &labels, seed, k as u64)?;
        let truth = truth_face_labels(&f.mesh, seed, k as u64)?;
        if k == 0 {
            if let Some(out) = std::env::args().nth(1) {
                export_colored(&f.mesh, &labels, std::path::Path::new(&out))?;
                println!("colored segmentation written to {out}");
            }
        }
        faces.push((pred, truth));
    }
    let evals: Vec<EvalMesh> = figs
        .iter()
        .zip(&faces)
        .map(|(f, (p, t))| EvalMesh { name: &f.name, areas: f.mesh.face_areas(), predicted: p, truth: t })
        .collect();
    let rep = accuracy(&evals)?;
    let row = ReportRow { method: "10% label noise".into(), features: 31, acc: rep.acc };
    print!("{}", report_text(&[(row, &rep)]));
    Ok(())
}
