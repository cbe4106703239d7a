//! Spectral descriptors against a dense eigensolver, and descriptor
//! invariance under rigid motion.

use nalgebra::{DMatrix, SymmetricEigen};
use patchseg::descriptors::{cotangent_laplacian, eigenbasis, lumped_mass, wks, DescriptorConfig, DescriptorSet};
use patchseg::synthetic;

fn dense_spectrum(mesh: &patchseg::TriMesh) -> Vec<f64> {
    let l = cotangent_laplacian(mesh);
    let m = lumped_mass(mesh);
    let n = mesh.vertex_count();
    // M^{-1/2} L M^{-1/2} has the generalized eigenvalues of (L, M)
    let a = DMatrix::from_fn(n, n, |i, j| l.get(i, j) / (m[i] * m[j]).sqrt());
    let mut vals: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

#[test]
fn eigenvalues_match_dense_oracle() {
    for (name, mesh) in [
        ("jittered_sphere", synthetic::jittered_sphere(1.0, 2, 0.1, 4)),
        ("torus", synthetic::torus(1.0, 0.4, 18, 9)),
        ("capsule", synthetic::capsule(0.3, 0.8, 16, 4, 8)),
    ] {
        let k = 30;
        let basis = eigenbasis(&mesh, k, 3).unwrap();
        let dense = dense_spectrum(&mesh);
        for i in 0..k {
            let tol = 1e-6 * dense[k - 1];
            assert!((basis.eigenvalues[i] - dense[i]).abs() < tol, "{name} λ{i}: {} vs dense {}", basis.eigenvalues[i], dense[i]);
        }
    }
}

#[test]
fn eigenvectors_satisfy_generalized_problem() {
    let mesh = synthetic::torus(1.0, 0.35, 24, 10);
    let basis = eigenbasis(&mesh, 20, 1).unwrap();
    let l = cotangent_laplacian(&mesh);
    for (lambda, phi) in basis.eigenvalues.iter().zip(&basis.eigenfunctions) {
        let lphi = l.mul_vec(phi);
        let r: f64 = lphi.iter().zip(phi).zip(&basis.mass).map(|((a, p), m)| (a - lambda * m * p).powi(2)).sum::<f64>().sqrt();
        let mphi: f64 = phi.iter().zip(&basis.mass).map(|(p, m)| (m * p).powi(2)).sum::<f64>().sqrt();
        assert!(r < 1e-6 * lambda.max(1.0) * mphi, "λ={lambda}: residual {r:e}");
    }
}

#[test]
fn wks_is_positive_and_sign_invariant() {
    let mesh = synthetic::jittered_sphere(1.0, 2, 0.08, 2);
    let basis = eigenbasis(&mesh, 25, 5).unwrap();
    let w = wks(&basis, 10).unwrap();
    assert!(w.iter().all(|&x| x > 0.0 && x.is_finite()));
    let mut flipped = basis.clone();
    for phi in flipped.eigenfunctions.iter_mut().skip(1).step_by(2) {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
    assert_eq!(wks(&flipped, 10).unwrap(), w);
}

#[test]
fn descriptors_are_invariant_under_rigid_motion() {
    let mesh = synthetic::jittered_sphere(1.0, 2, 0.1, 7);
    let moved = mesh.map_vertices(synthetic::random_rigid_motion(3)).unwrap();
    let cfg = DescriptorConfig { eigenpairs: 40, agd_samples: 6, ..Default::default() };
    let a = DescriptorSet::compute(&mesh, &cfg).unwrap();
    let b = DescriptorSet::compute(&moved, &cfg).unwrap();
    let close = |x: &[f64], y: &[f64], tol: f64| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol * p.abs().max(1.0));
    assert!(close(&a.wks, &b.wks, 1e-6));
    assert!(close(&a.agd, &b.agd, 1e-9));
    let ca: Vec<f64> = a.curvatures.iter().flatten().copied().collect();
    let cb: Vec<f64> = b.curvatures.iter().flatten().copied().collect();
    assert!(close(&ca, &cb, 1e-8));
}
