//! Classifier: finite-difference checks on the reference architecture,
//! deterministic training, and model-file validation.

use patchseg::classifier::{
    load_model, save_model, train, Architecture, ClassifierConfig, ClassifierError, MemorySource, Network, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(n: usize, res: usize, ch: usize, seed: u64) -> MemorySource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grids = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let l = i % 8;
        let mut g: Vec<f32> = (0..ch * res * res).map(|_| rng.gen_range(0.0..1.0)).collect();
        for y in 0..res {
            for x in 0..res {
                g[y * res + x] = if y * 8 / res == l { 1.0 } else { 0.0 };
            }
        }
        grids.push(g);
        labels.push(l as u8);
    }
    MemorySource { channels: ch, resolution: res, grids, labels }
}

#[test]
fn reference_architecture_gradient_matches_finite_differences() {
    let net = Network::<f64>::init(&Architecture::reference(), Shape { c: 3, h: 8, w: 8 }, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..192).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), 2 * i + 1)).collect();
    let (_, g) = net.batch_gradient(&batch);
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    for _ in 0..40 {
        let t = rng.gen_range(0..sizes.len());
        let i = rng.gen_range(0..sizes[t]);
        let h = 1e-5;
        let eval = |d: f64| {
            let mut n = net.clone();
            n.params_mut()[t][i] += d;
            n.batch_loss(&batch)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let err = (fd - g[t][i]).abs() / fd.abs().max(g[t][i].abs()).max(1e-4);
        assert!(err < 1e-4, "tensor {t}[{i}]: fd {fd} vs analytic {}", g[t][i]);
    }
}

#[test]
fn training_is_deterministic_and_thread_independent() {
    let data = toy(64, 8, 2, 1);
    let cfg = ClassifierConfig { epochs: 2, per_label: 40, batch_size: 16, seed: 9, ..Default::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(&data, &cfg, "stats", |_, _| Ok(())).unwrap())
    };
    let (a, ra) = run(1);
    let (b, rb) = run(3);
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra.to_text(), rb.to_text());
    assert_eq!(ra.lr.first(), Some(&1e-3));
}

#[test]
fn checkpoints_follow_the_configured_period() {
    let data = toy(32, 8, 2, 2);
    let cfg = ClassifierConfig { epochs: 4, per_label: 8, batch_size: 8, checkpoint_every: 2, ..Default::default() };
    let mut seen = Vec::new();
    train(&data, &cfg, "", |epoch, _| {
        seen.push(epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![1, 3]);
}

#[test]
fn model_files_are_validated() {
    let data = toy(16, 8, 2, 3);
    let cfg = ClassifierConfig { epochs: 1, per_label: 4, batch_size: 8, ..Default::default() };
    let (model, _) = train(&data, &cfg, "s", |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pgmd");
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path, Some(&model.config_hash)).unwrap(), model);
    assert!(matches!(load_model(&path, Some("other")), Err(ClassifierError::ModelFile { .. })));
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_model(&path, None).is_err());
    std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
    assert!(load_model(&path, None).is_err());
    // wrong input shape is refused with both shapes in the message
    let err = model.predict(&vec![0.0; 3 * 64]).unwrap_err().to_string();
    assert!(err.contains('3') && err.contains('2'), "{err}");
}
