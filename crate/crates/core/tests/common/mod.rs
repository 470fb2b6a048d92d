//! Helpers shared by the integration tests. Everything here is computed
//! without going through the library's own oracles.

#![allow(dead_code)]

use rand::Rng;
use rdg::mesh::StencilKind;
use rdg::polynomials::IndexSet;
use rdg::reconstruction::{reconstruction_map, OrderPair};
use rdg::TensorMesh;

/// Five-point Gauss-Legendre rule, exact to degree 9.
pub const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for j in 1..n {
        let p2 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p0) / (j + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= f * a[c][j];
            }
        }
    }
    det
}

/// `|det|` of the 1D moment matrix from the neighbour size ratios `p`, `q`.
/// Center: `p`, `q` are the left and right neighbours. One-sided: `q` is the
/// adjacent member, `p` the far one.
pub fn closed_form_det_1d(k: usize, center: bool, p: f64, q: f64) -> f64 {
    match (k, center) {
        (2, true) => 2.0 * (p + 1.0) * (q + 1.0) * (p + q + 1.0),
        (2, false) => 2.0 * (q + 1.0) * (p + q) * (p + q + 1.0),
        (5, true) => 252.0 * p * q * ((p + 1.0) * (q + 1.0) * (p + q + 1.0)).powi(4),
        (5, false) => 252.0 * p * q * ((q + 1.0) * (p + q) * (p + q + 1.0)).powi(4),
        _ => unreachable!(),
    }
}

/// Closed-form `|det|` for element `index` of direction `dir`.
pub fn closed_form_det_for(mesh: &TensorMesh, dir: usize, index: usize, k: usize) -> f64 {
    let st = mesh.stencil_1d(dir, index);
    let h0 = mesh.size(dir, index);
    let a: Vec<f64> = st.indices.iter().map(|&j| mesh.size(dir, j) / h0).collect();
    match st.kind {
        StencilKind::Center => closed_form_det_1d(k, true, a[0], a[2]),
        StencilKind::Backward => closed_form_det_1d(k, false, a[0], a[1]),
        StencilKind::Forward => closed_form_det_1d(k, false, a[2], a[1]),
    }
}

/// Breakpoints with cell sizes drawn from `[1, ratio]` (so adjacent ratios
/// stay within `[1/ratio, ratio]`), scaled to unit total length.
pub fn random_breakpoints(rng: &mut impl Rng, cells: usize, ratio: f64) -> Vec<f64> {
    let sizes: Vec<f64> = (0..cells).map(|_| rng.gen_range(1.0..=ratio)).collect();
    let total: f64 = sizes.iter().sum();
    let mut bp = vec![0.0];
    for s in sizes {
        bp.push(bp.last().unwrap() + s / total);
    }
    *bp.last_mut().unwrap() = 1.0;
    bp
}

pub fn random_mesh(rng: &mut impl Rng, dim: usize, cells: usize, ratio: f64, periodic: bool) -> TensorMesh {
    let bps = (0..dim).map(|_| random_breakpoints(rng, cells, ratio)).collect();
    TensorMesh::new(bps, vec![periodic; dim]).unwrap()
}

/// Reconstructs a random `Q^k` polynomial from its stencil moments on a
/// random element of `mesh` (non-periodic) and returns the largest
/// coefficient error relative to the largest coefficient.
pub fn exactness_error(rng: &mut impl Rng, mesh: &TensorMesh, k: usize) -> f64 {
    let dim = mesh.dim();
    let pair = OrderPair::new(k, dim).unwrap();
    let owner = mesh.element(rng.gen_range(0..mesh.num_elements())).unwrap();
    let table = reconstruction_map(mesh, &owner, pair).unwrap();
    let ak = IndexSet::new(k, dim);
    let am = IndexSet::new(pair.m, dim);
    let coeffs: Vec<f64> = (0..ak.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c0: Vec<f64> = (0..dim).map(|i| mesh.center(i, owner.index[i])).collect();
    let h0: Vec<f64> = (0..dim).map(|i| mesh.size(i, owner.index[i])).collect();
    let poly = |x: [f64; 2]| -> f64 {
        ak.iter()
            .zip(&coeffs)
            .map(|(a, c)| c * (0..dim).map(|i| legendre(a.0[i], 2.0 * (x[i] - c0[i]) / h0[i])).product::<f64>())
            .sum()
    };
    let mut moments = Vec::new();
    for &member in &table.stencil.members {
        let el = mesh.element(member).unwrap();
        for b in am.iter() {
            let mut sum = 0.0;
            let ny = if dim == 2 { 5 } else { 1 };
            for qy in 0..ny {
                for &(rx, wx) in &GAUSS5 {
                    let (ry, wy) = if dim == 2 { GAUSS5[qy] } else { (0.0, 1.0) };
                    let r = [rx, ry];
                    let mut x = [0.0; 2];
                    for i in 0..dim {
                        x[i] = mesh.center(i, el.index[i]) + 0.5 * mesh.size(i, el.index[i]) * r[i];
                    }
                    let lb: f64 = (0..dim).map(|i| legendre(b.0[i], r[i])).product();
                    sum += wx * wy * lb * poly(x);
                }
            }
            let scale: f64 = (0..dim).map(|i| (2 * b.0[i] + 1) as f64 / 2.0).product();
            moments.push(scale * sum);
        }
    }
    let rec = table.apply(&moments);
    let cmax = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    rec.iter().zip(&coeffs).fold(0.0f64, |m, (r, c)| m.max((r - c).abs())) / cmax
}
