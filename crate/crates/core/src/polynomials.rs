//! Legendre polynomials, Gauss-Legendre quadrature, scaled element bases and
//! Legendre moments.

use crate::error::{Error, Result};
use crate::mesh::{ElementId, Point, TensorMesh};

/// Legendre polynomial of degree `k` at `x`, by the three-term recurrence.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    debug_assert!(x.abs() <= 1.0 + 1e-12 || k == 0, "Legendre argument outside [-1, 1]: {x}");
    let (mut p0, mut p1) = (1.0, x);
    match k {
        0 => p0,
        1 => p1,
        _ => {
            for n in 1..k {
                let nf = n as f64;
                let p2 = ((2.0 * nf + 1.0) * x * p1 - nf * p0) / (nf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Values of `L̂^0..=L̂^k` at `x`.
pub fn legendre_eval_all(k: usize, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(k + 1);
    v.push(1.0);
    if k >= 1 {
        v.push(x);
    }
    for n in 1..k {
        let nf = n as f64;
        let p = ((2.0 * nf + 1.0) * x * v[n] - nf * v[n - 1]) / (nf + 1.0);
        v.push(p);
    }
    v
}

/// Values and first derivatives of `L̂^0..=L̂^k` at `x`.
///
/// Uses `L̂'_{n+1} = L̂'_{n-1} + (2n+1) L̂_n`, valid at the endpoints too.
pub fn legendre_eval_with_derivative(k: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let v = legendre_eval_all(k, x);
    let mut d = vec![0.0; k + 1];
    if k >= 1 {
        d[1] = 1.0;
    }
    for n in 1..k {
        d[n + 1] = d[n - 1] + (2 * n + 1) as f64 * v[n];
    }
    (v, d)
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_{-1}^{1} f`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `n`-point Gauss-Legendre rule, nodes ascending.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::NoConvergence(0));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = (n + 1) / 2;
    for i in 0..half {
        // Tricomi initial guess for the i-th largest root.
        let nf = n as f64;
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, d) = legendre_value_and_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        let (p, d) = legendre_value_and_derivative(n, x);
        // Newton can stall one ulp away from the root; accept round-off residuals.
        if !converged && p.abs() > 1e-13 {
            return Err(Error::NoConvergence(n));
        }
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre_value_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let pm1 = if n == 0 { 0.0 } else { p0 };
    let d = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p - pm1) / (x * x - 1.0)
    };
    (p, d)
}

/// Multi-index `α`; unused trailing entries are zero in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub [usize; 2]);

impl MultiIndex {
    pub fn trace(&self) -> usize {
        self.0[0] + self.0[1]
    }
}

/// All multi-indices with `0 ≤ α_i ≤ order`, sorted by trace with
/// lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    order: usize,
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl IndexSet {
    pub fn new(order: usize, dim: usize) -> Self {
        let mut indices: Vec<MultiIndex> = if dim == 1 {
            (0..=order).map(|a| MultiIndex([a, 0])).collect()
        } else {
            let mut v = Vec::with_capacity((order + 1).pow(2));
            for a in 0..=order {
                for b in 0..=order {
                    v.push(MultiIndex([a, b]));
                }
            }
            v
        };
        indices.sort_by_key(|a| (a.trace(), *a));
        Self {
            order,
            dim,
            indices,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize) -> MultiIndex {
        self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.indices.iter()
    }

    pub fn position(&self, alpha: MultiIndex) -> Option<usize> {
        self.indices.iter().position(|&a| a == alpha)
    }
}

/// `L_K^α(x) = Π_i L̂^{α_i}(2(x_i − x_K^i)/h_K^i)`.
pub fn scaled_basis_eval(mesh: &TensorMesh, element: &ElementId, alpha: MultiIndex, x: Point) -> f64 {
    let r = mesh.to_reference(element, x);
    (0..mesh.dim())
        .map(|i| legendre_eval(alpha.0[i], r[i]))
        .product()
}

/// Legendre moment `I_K^α f = (Π_i (2α_i+1)/h_K^i) ∫_K L_K^α f`, evaluated with
/// a tensor-product rule built from `quad`.
pub fn moment(
    mesh: &TensorMesh,
    element: &ElementId,
    alpha: MultiIndex,
    f: impl Fn(Point) -> f64,
    quad: &QuadratureRule,
) -> f64 {
    // In reference coordinates the Jacobian cancels against 1/h up to 2^-d.
    let dim = mesh.dim();
    let scale: f64 = (0..dim)
        .map(|i| (2 * alpha.0[i] + 1) as f64 / 2.0)
        .product();
    let mut sum = 0.0;
    if dim == 1 {
        for (&r, &w) in quad.nodes.iter().zip(&quad.weights) {
            let x = mesh.from_reference(element, [r, 0.0]);
            sum += w * legendre_eval(alpha.0[0], r) * f(x);
        }
    } else {
        for (&r2, &w2) in quad.nodes.iter().zip(&quad.weights) {
            let l2 = legendre_eval(alpha.0[1], r2);
            for (&r1, &w1) in quad.nodes.iter().zip(&quad.weights) {
                let x = mesh.from_reference(element, [r1, r2]);
                sum += w1 * w2 * legendre_eval(alpha.0[0], r1) * l2 * f(x);
            }
        }
    }
    scale * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn legendre_closed_forms() {
        assert!((legendre_eval(2, 0.5) + 0.125).abs() < 1e-15);
        for k in 0..12 {
            assert!((legendre_eval(k, 1.0) - 1.0).abs() < 1e-13);
        }
        // degree-5 closed form
        let x: f64 = 0.3;
        let closed = (63.0 * x.powi(5) - 70.0 * x.powi(3) + 15.0 * x) / 8.0;
        assert!((closed - 0.345386).abs() < 1e-6);
        assert!((legendre_eval(5, x) - closed).abs() < 1e-15);
        let all = legendre_eval_all(5, x);
        assert!((all[5] - closed).abs() < 1e-15);
    }

    #[test]
    fn legendre_derivatives_match_finite_differences() {
        let eps = 1e-6;
        for &x in &[-1.0, -0.7, 0.0, 0.31, 1.0] {
            let (_, d) = legendre_eval_with_derivative(6, x);
            for k in 0..=6 {
                let xp: f64 = if x + eps > 1.0 { x } else { x + eps };
                let xm: f64 = if x - eps < -1.0 { x } else { x - eps };
                let fd = (legendre_eval(k, xp) - legendre_eval(k, xm)) / (xp - xm);
                assert!((d[k] - fd).abs() < 1e-4 * (1.0 + d[k].abs()), "k={k} x={x}");
            }
        }
    }

    #[test]
    fn classical_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_rule(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + s).abs() < 1e-15 && (r2.nodes[1] - s).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15 && (r2.weights[1] - 1.0).abs() < 1e-15);
        let r4 = gauss_rule(4).unwrap();
        assert!((r4.integrate(|x| x.powi(6)) - 2.0 / 7.0).abs() < 1e-14);
        assert!(gauss_rule(0).is_err());
    }

    #[test]
    fn rules_are_symmetric_and_normalized() {
        for n in 1..=64 {
            let r = gauss_rule(n).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n}");
            for i in 0..n {
                assert!((r.nodes[i] + r.nodes[n - 1 - i]).abs() < 1e-15);
                assert!(r.weights[i] > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn exact_for_degree_2n_minus_1(n in 1usize..=10, coeffs in prop::collection::vec(-1.0f64..1.0, 20)) {
            let deg = 2 * n - 1;
            let c = &coeffs[..=deg];
            let r = gauss_rule(n).unwrap();
            let numeric = r.integrate(|x| c.iter().rev().fold(0.0, |acc, &a| acc * x + a));
            let exact: f64 = c.iter().enumerate()
                .map(|(p, &a)| if p % 2 == 0 { 2.0 * a / (p as f64 + 1.0) } else { 0.0 })
                .sum();
            let scale: f64 = c.iter().map(|a| a.abs()).sum::<f64>().max(1.0);
            prop_assert!((numeric - exact).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn trace_ordering() {
        let s = IndexSet::new(2, 1);
        assert_eq!(s.iter().map(|a| a.0[0]).collect::<Vec<_>>(), vec![0, 1, 2]);
        let s2 = IndexSet::new(2, 2);
        assert_eq!(s2.len(), 9);
        assert_eq!(s2.get(0), MultiIndex([0, 0]));
        assert_eq!(s2.get(8), MultiIndex([2, 2]));
        assert_eq!(s2.get(1), MultiIndex([0, 1]));
        assert_eq!(s2.get(2), MultiIndex([1, 0]));
        assert!(s2.iter().zip(s2.iter().skip(1)).all(|(a, b)| a.trace() <= b.trace()));
        assert_eq!(IndexSet::new(5, 2).len(), 36);
    }

    #[test]
    fn scaled_basis_values() {
        let m = TensorMesh::uniform(&[0.0], &[3.0], &[3], &[false]).unwrap();
        let e = m.element(0).unwrap();
        assert_eq!(scaled_basis_eval(&m, &e, MultiIndex([0, 0]), [0.3, 0.0]), 1.0);
        assert!((scaled_basis_eval(&m, &e, MultiIndex([1, 0]), [0.75, 0.0]) - 0.5).abs() < 1e-15);
        let m2 = TensorMesh::uniform(&[0.0, 0.0], &[3.0, 3.0], &[3, 3], &[false, false]).unwrap();
        let e2 = m2.element(4).unwrap();
        let c = m2.element_center(&e2);
        assert_eq!(scaled_basis_eval(&m2, &e2, MultiIndex([1, 1]), c), 0.0);
    }

    #[test]
    fn moments_and_orthonormality() {
        let m = TensorMesh::new(
            vec![vec![0.0, 0.7, 1.1, 2.0, 2.9], vec![-1.0, -0.2, 0.5, 1.0]],
            vec![false, false],
        )
        .unwrap();
        let q = gauss_rule(7).unwrap();
        let set = IndexSet::new(5, 2);
        let e = m.element(5).unwrap();
        assert!((moment(&m, &e, MultiIndex([0, 0]), |_| 1.0, &q) - 1.0).abs() < 1e-14);
        for a in set.iter() {
            for b in set.iter() {
                let v = moment(&m, &e, *b, |x| scaled_basis_eval(&m, &e, *a, x), &q);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "{a:?} {b:?} {v}");
            }
        }
    }

    #[test]
    fn neighbour_moment_of_quadratic() {
        // I^0 on K_{j-1} of L^2_{K_j} on a uniform mesh equals 6.
        let m = TensorMesh::uniform(&[0.0], &[3.0], &[3], &[false]).unwrap();
        let left = m.element(0).unwrap();
        let q = gauss_rule(4).unwrap();
        let v = moment(&m, &left, MultiIndex([0, 0]), |x| legendre_eval_all(2, 2.0 * (x[0] - 1.5))[2], &q);
        assert!((v - 6.0).abs() < 1e-13);
    }
}
