//! One-dimensional meshes, Gauss–Legendre rules and nodal Lagrange tables.
//!
//! Phase space is the tensor product of a periodic x-mesh and one
//! non-periodic v-mesh per species. Every cell is mapped affinely onto the
//! reference interval [-1, 1], where the Gauss nodes double as the
//! interpolation nodes of the nodal basis.

use crate::error::{Error, Result};

/// Largest supported number of quadrature points.
pub const MAX_GAUSS_POINTS: usize = 16;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss–Legendre quadrature on the reference cell [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// Number of points `q`; exact for polynomials of degree `2q - 1`.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [-1, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Builds the `q`-point Gauss–Legendre rule by Newton iteration on `P_q`.
pub fn build_gauss_rule(q: usize) -> Result<GaussRule> {
    if q == 0 || q > MAX_GAUSS_POINTS {
        return Err(Error::Config(format!(
            "Gauss rule order must be in 1..={MAX_GAUSS_POINTS}, got {q}"
        )));
    }
    if q == 1 {
        return Ok(GaussRule {
            nodes: vec![0.0],
            weights: vec![2.0],
        });
    }
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let half = q.div_ceil(2);
    for i in 0..half {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[q - 1 - i] = x;
        nodes[i] = -x;
        weights[q - 1 - i] = w;
        weights[i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

/// Partition of an interval into cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval1DMesh {
    lo: f64,
    hi: f64,
    periodic: bool,
    edges: Vec<f64>,
    widths: Vec<f64>,
}

/// Uniform partition of `[lo, hi]` into `n_cells` cells.
pub fn build_mesh(lo: f64, hi: f64, n_cells: usize, periodic: bool) -> Result<Interval1DMesh> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!(
            "mesh bounds must be finite, got [{lo}, {hi}]"
        )));
    }
    if hi <= lo {
        return Err(Error::Config(format!(
            "mesh upper bound {hi} must exceed lower bound {lo}"
        )));
    }
    if n_cells == 0 {
        return Err(Error::Config("mesh needs at least one cell".into()));
    }
    let width = (hi - lo) / n_cells as f64;
    let edges: Vec<f64> = (0..=n_cells)
        .map(|i| if i == n_cells { hi } else { lo + i as f64 * width })
        .collect();
    let widths = vec![width; n_cells];
    Ok(Interval1DMesh {
        lo,
        hi,
        periodic,
        edges,
        widths,
    })
}

impl Interval1DMesh {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn n_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.widths[cell]
    }

    pub fn center(&self, cell: usize) -> f64 {
        0.5 * (self.edges[cell] + self.edges[cell + 1])
    }

    /// Physical coordinate of reference point `xi` in `cell`.
    pub fn map(&self, cell: usize, xi: f64) -> f64 {
        self.center(cell) + 0.5 * self.widths[cell] * xi
    }

    /// True when every cell has the same width (to rounding).
    pub fn is_uniform(&self) -> bool {
        let w0 = self.widths[0];
        self.widths
            .iter()
            .all(|&w| (w - w0).abs() <= 1e-12 * w0.abs())
    }

    /// Node coordinates in cell-major order for the given rule.
    pub fn node_coordinates(&self, rule: &GaussRule) -> Vec<f64> {
        (0..self.n_cells())
            .flat_map(|c| rule.nodes().iter().map(move |&xi| self.map(c, xi)))
            .collect()
    }

    /// Cell containing `x`; the last cell owns the upper boundary.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(self.lo..=self.hi).contains(&x) {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx.saturating_sub(1).min(self.n_cells() - 1))
    }
}

/// Lagrange basis on the Gauss nodes of a rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    rule: GaussRule,
    bary: Vec<f64>,
    diff: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

/// Builds differentiation and boundary-evaluation tables for the nodal basis.
pub fn lagrange_tables(rule: &GaussRule) -> LagrangeBasis {
    let q = rule.order();
    let x = rule.nodes();
    let bary: Vec<f64> = (0..q)
        .map(|j| {
            let prod: f64 = (0..q).filter(|&k| k != j).map(|k| x[j] - x[k]).product();
            1.0 / prod
        })
        .collect();
    let mut diff = vec![0.0; q * q];
    for i in 0..q {
        let mut diag = 0.0;
        for j in 0..q {
            if i != j {
                let d = bary[j] / bary[i] / (x[i] - x[j]);
                diff[i * q + j] = d;
                diag -= d;
            }
        }
        diff[i * q + i] = diag;
    }
    let basis = LagrangeBasis {
        rule: rule.clone(),
        bary,
        diff,
        left: Vec::new(),
        right: Vec::new(),
    };
    let left = basis.evaluate_all(-1.0);
    let right = basis.evaluate_all(1.0);
    LagrangeBasis {
        left,
        right,
        ..basis
    }
}

impl LagrangeBasis {
    pub fn n_nodes(&self) -> usize {
        self.rule.order()
    }

    pub fn degree(&self) -> usize {
        self.rule.order() - 1
    }

    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    pub fn weights(&self) -> &[f64] {
        self.rule.weights()
    }

    /// Row-major `D[i][j] = l_j'(x_i)` on the reference cell.
    pub fn diff_matrix(&self) -> &[f64] {
        &self.diff
    }

    /// Values of every basis polynomial at -1.
    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    /// Values of every basis polynomial at +1.
    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    /// Values `l_j(xi)` of all basis polynomials at one reference point.
    pub fn evaluate_all(&self, xi: f64) -> Vec<f64> {
        let x = self.rule.nodes();
        let q = x.len();
        if let Some(hit) = x.iter().position(|&n| n == xi) {
            let mut out = vec![0.0; q];
            out[hit] = 1.0;
            return out;
        }
        // Product form stays accurate right next to a node.
        (0..q)
            .map(|j| {
                let prod: f64 = (0..q).filter(|&k| k != j).map(|k| xi - x[k]).product();
                self.bary[j] * prod
            })
            .collect()
    }

    /// Interpolant of nodal `values` evaluated at `xi`.
    pub fn interpolate(&self, values: &[f64], xi: f64) -> f64 {
        self.evaluate_all(xi)
            .iter()
            .zip(values)
            .map(|(l, v)| l * v)
            .sum()
    }

    /// Derivative of the interpolant of `values` at every node (reference coordinate).
    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        let q = self.n_nodes();
        (0..q)
            .map(|i| (0..q).map(|j| self.diff[i * q + j] * values[j]).sum())
            .collect()
    }
}
