//! Composite Gauss–Legendre rules on intervals and boxes.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// A 1-D quadrature rule as explicit nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    /// `cells` equal cells on `[a, b]`, each with an `order`-point
    /// Gauss–Legendre rule.
    pub fn composite_gauss(a: f64, b: f64, cells: usize, order: usize) -> Self {
        let cells = cells.max(1);
        let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
        let pairs = gl.as_node_weight_pairs();
        let h = (b - a) / cells as f64;
        let mut nodes = Vec::with_capacity(cells * pairs.len());
        let mut weights = Vec::with_capacity(cells * pairs.len());
        for c in 0..cells {
            let lo = a + c as f64 * h;
            for &(x, w) in pairs {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Rule1d { nodes, weights }
    }

    /// Composite midpoint rule with `n` cells.
    pub fn midpoint(a: f64, b: f64, n: usize) -> Self {
        let n = n.max(1);
        let h = (b - a) / n as f64;
        Rule1d {
            nodes: (0..n).map(|i| a + (i as f64 + 0.5) * h).collect(),
            weights: vec![h; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Tensor-product integral over a box.
pub fn integrate_2d(rx: &Rule1d, ry: &Rule1d, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (&x, &wx) in rx.nodes.iter().zip(&rx.weights) {
        let mut row = 0.0;
        for (&y, &wy) in ry.nodes.iter().zip(&ry.weights) {
            row += wy * f(x, y);
        }
        total += wx * row;
    }
    total
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}
