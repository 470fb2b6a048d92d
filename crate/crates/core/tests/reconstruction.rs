mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdg::mesh::StencilKind;
use rdg::reconstruction::{
    determinant_lower_bound_1d, determinant_oracle, moment_matrix, moment_matrix_1d, reconstruction_error_study,
    wellposedness_check, OrderPair,
};
use rdg::{Error, TensorMesh};

fn dense_rows(m: &rdg::linalg::DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[test]
fn uniform_k2_determinants_are_24() {
    let mesh = TensorMesh::uniform(&[0.0], &[1.0], &[6], &[false]).unwrap();
    let pair = OrderPair::new(2, 1).unwrap();
    for e in mesh.elements() {
        let d = determinant(dense_rows(&moment_matrix(&mesh, &e, pair)));
        assert!((d.abs() - 24.0).abs() < 1e-10 * 24.0, "element {}: {d}", e.linear);
    }
}

#[test]
fn uniform_k5_center_determinant() {
    let mesh = TensorMesh::uniform(&[0.0], &[1.0], &[5], &[true]).unwrap();
    let pair = OrderPair::new(5, 1).unwrap();
    let e = mesh.element(2).unwrap();
    let d = determinant(dense_rows(&moment_matrix(&mesh, &e, pair))).abs();
    // 252 · 2⁴ · 2⁴ · 3⁴
    let expect = 252.0 * 16.0 * 16.0 * 81.0;
    assert!((d - expect).abs() / expect < 1e-10, "{d}");
}

#[test]
fn random_mesh_determinants_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let mesh = random_mesh(&mut rng, 1, 7, 2.0, false);
        for k in [2, 5] {
            let pair = OrderPair::new(k, 1).unwrap();
            for e in mesh.elements() {
                let d = determinant(dense_rows(&moment_matrix(&mesh, &e, pair))).abs();
                let o = closed_form_det_for(&mesh, 0, e.index[0], k);
                assert!((d - o).abs() / o < 1e-10, "trial {trial} k {k} element {}: {d} vs {o}", e.linear);
                let lib = determinant_oracle(&mesh, &e, pair).unwrap();
                assert!((lib - o).abs() / o < 1e-13);
            }
        }
    }
}

#[test]
fn two_dimensional_matrix_is_kronecker_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mesh = random_mesh(&mut rng, 2, 5, 2.0, false);
    for k in [2, 5] {
        let pair = OrderPair::new(k, 2).unwrap();
        let p1 = OrderPair::new(k, 1).unwrap();
        let p = (3 * (pair.m + 1)) as i32;
        for e in mesh.elements() {
            let m2 = moment_matrix(&mesh, &e, pair);
            let mx = moment_matrix_1d(&mesh, 0, e.index[0], p1);
            let my = moment_matrix_1d(&mesh, 1, e.index[1], p1);
            // det(A ⊗ B) with both factors of size p
            let dx = determinant(dense_rows(&mx)).abs();
            let dy = determinant(dense_rows(&my)).abs();
            let expect = dx.powi(p) * dy.powi(p);
            let d = determinant(dense_rows(&m2)).abs();
            assert!((d - expect).abs() / expect < 1e-9, "k {k} element {}: {d} vs {expect}", e.linear);
            let cf = closed_form_det_for(&mesh, 0, e.index[0], k).powi(p) * closed_form_det_for(&mesh, 1, e.index[1], k).powi(p);
            assert!((d - cf).abs() / cf < 1e-9);
        }
    }
}

#[test]
fn determinants_exceed_lower_bounds() {
    // a_min = 0.5 allows neighbour ratios in [0.5, 2]
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mesh = random_mesh(&mut rng, 1, 6, 2.0, false);
        for k in [2, 5] {
            for e in mesh.elements() {
                let st = mesh.stencil_1d(0, e.index[0]);
                let d = closed_form_det_for(&mesh, 0, e.index[0], k);
                let bound = determinant_lower_bound_1d(k, st.kind, 0.5).unwrap();
                assert!(d >= bound * (1.0 - 1e-12), "k {k} {:?}: {d} < {bound}", st.kind);
            }
        }
    }
    assert!(determinant_lower_bound_1d(5, StencilKind::Center, 0.5).unwrap() > 0.0);
}

#[test]
fn k_exactness_k2_on_random_stencils() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..300 {
        let mesh = random_mesh(&mut rng, 1 + trial % 2, 6, 2.0, false);
        worst = worst.max(exactness_error(&mut rng, &mesh, 2));
    }
    assert!(worst <= 1e-11, "{worst}");
}

#[test]
fn k_exactness_k5_within_conditioning() {
    // ratio-2 one-sided stencils in 2D reach condition numbers near 1e11, so
    // the attainable accuracy is tied to the conditioning of M_K
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..300 {
        let dim = 1 + trial % 2;
        let mesh = random_mesh(&mut rng, dim, 6, 2.0, false);
        let mut probe = rng.clone();
        let err = exactness_error(&mut rng, &mesh, 5);
        let owner = mesh.element(rand::Rng::gen_range(&mut probe, 0..mesh.num_elements())).unwrap();
        let cond = rdg::reconstruction::reconstruction_map(&mesh, &owner, OrderPair::new(5, dim).unwrap())
            .unwrap()
            .local
            .condition_estimate;
        let bound = (10.0 * f64::EPSILON * cond).max(1e-11);
        assert!(err <= bound, "trial {trial}: {err} > {bound}");
    }
    // uniform meshes stay well inside the bound
    let mesh = TensorMesh::uniform(&[0.0], &[1.0], &[7], &[false]).unwrap();
    for _ in 0..50 {
        assert!(exactness_error(&mut rng, &mesh, 5) < 1e-11);
    }
}

#[test]
fn reconstruction_error_rates() {
    let u = |x: [f64; 2]| x[0].sin();
    let g = |x: [f64; 2]| [x[0].cos(), 0.0];
    let two_pi = 2.0 * std::f64::consts::PI;
    for (k, cells) in [(2, [32, 64, 128]), (5, [16, 32, 64])] {
        let meshes: Vec<_> = cells
            .iter()
            .map(|&n| TensorMesh::uniform(&[0.0], &[two_pi], &[n], &[true]).unwrap())
            .collect();
        let rows = reconstruction_error_study(&u, &g, &meshes, k).unwrap();
        let last = rows.last().unwrap();
        assert!((last.l2_rate.unwrap() - (k + 1) as f64).abs() < 0.1, "k {k}: {last:?}");
        assert!((last.h1_rate.unwrap() - k as f64).abs() < 0.1, "k {k}: {last:?}");
    }
}

#[test]
fn wellposedness_check_reports_oracle() {
    let mesh = TensorMesh::uniform(&[0.0, 0.0], &[1.0, 1.0], &[4, 4], &[false, true]).unwrap();
    let pair = OrderPair::new(5, 2).unwrap();
    for e in mesh.elements() {
        let wp = wellposedness_check(&moment_matrix(&mesh, &e, pair), &mesh, &e, pair).unwrap();
        assert!(wp.relative_deviation.unwrap() < 1e-9, "{wp:?}");
    }
}

#[test]
fn too_few_cells_is_rejected() {
    let mesh = TensorMesh::uniform(&[0.0], &[1.0], &[2], &[false]);
    let err = match mesh {
        Err(e) => e,
        Ok(m) => rdg::RdgSpace::new(m, OrderPair::new(2, 1).unwrap()).err().unwrap(),
    };
    assert!(matches!(err, Error::TooFewElements { .. }), "{err:?}");
}
