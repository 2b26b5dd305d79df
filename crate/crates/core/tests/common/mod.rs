//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the solver kernels: the dispersion relation uses
//! its own plasma dispersion function, the DG operators are assembled densely
//! from the weak form with a separate Lagrange implementation, and the
//! statistics are computed with plain two-pass formulas. `checks` holds the
//! comparisons of the library against these references.

#![allow(dead_code)]

pub mod checks;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Plasma dispersion function and linear dispersion relation.

/// `Z(z) = i sqrt(pi) w(z)`, valid in the whole complex plane.
pub fn plasma_z(z: C64) -> C64 {
    if z.norm() < 2.0 {
        z_series(z)
    } else if z.im < 0.0 {
        // w(z) = 2 exp(-z^2) - w(-z)
        C64::new(0.0, 2.0 * PI.sqrt()) * (-z * z).exp() - z_upper(-z)
    } else {
        z_upper(z)
    }
}

/// `Z` for `Im z >= 0`, `|z| >= 2`.
fn z_upper(z: C64) -> C64 {
    if z.norm() >= 8.0 {
        z_asymptotic(z)
    } else if z.im > z.re.abs() {
        // Along steep rays exp(-z^2) grows, so integrating the ODE would be unstable.
        z_continued_fraction(z)
    } else {
        z_ode(z)
    }
}

/// `-1 / (z - (1/2) / (z - 1 / (z - (3/2) / ...)))`, for `Im z > 0`.
fn z_continued_fraction(z: C64) -> C64 {
    let mut t = z;
    for n in (1..=400).rev() {
        t = z - (n as f64 / 2.0) / t;
    }
    -1.0 / t
}

/// `i sqrt(pi) e^{-z^2} - 2z sum (-2z^2)^n / (2n+1)!!`.
fn z_series(z: C64) -> C64 {
    let z2 = z * z;
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    for n in 1..400 {
        term *= -2.0 * z2 / (2 * n + 1) as f64;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    C64::new(0.0, PI.sqrt()) * (-z2).exp() - 2.0 * z * sum
}

/// Integrates `Z' = -2 (1 + z Z)` from `Z(0) = i sqrt(pi)` along the ray to `z`.
fn z_ode(z: C64) -> C64 {
    let n = (400.0 * z.norm_sqr()).ceil() as usize;
    let h = z / n as f64;
    let rhs = |s: C64, y: C64| -2.0 * (1.0 + s * y);
    let mut y = C64::new(0.0, PI.sqrt());
    for i in 0..n {
        let s = h * i as f64;
        let k1 = rhs(s, y);
        let k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1);
        let k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2);
        let k4 = rhs(s + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// `-sum (2n-1)!! / (2^n z^{2n+1})` for `Im z >= 0`, truncated at the smallest term.
/// The dropped `exp(-z^2)` term is below `e^-64` relative for `|z| >= 8` here.
fn z_asymptotic(z: C64) -> C64 {
    let z2 = z * z;
    let mut term = 1.0 / z;
    let mut sum = term;
    for n in 1..200 {
        let next = term * (2 * n - 1) as f64 / (2.0 * z2);
        if next.norm() >= term.norm() {
            break;
        }
        term = next;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    -sum
}

/// One Maxwellian species in the linear response.
#[derive(Debug, Clone, Copy)]
pub struct LinearSpecies {
    /// Squared plasma frequency relative to the electrons.
    pub omega_p2: f64,
    pub variance: f64,
    pub drift: f64,
}

/// Electrons and ions in the dimensionless units of the solver.
pub fn two_species(mass_ratio: f64, temp_ratio: f64, v_de: f64) -> Vec<LinearSpecies> {
    vec![
        LinearSpecies {
            omega_p2: 1.0,
            variance: 1.0,
            drift: v_de,
        },
        LinearSpecies {
            omega_p2: 1.0 / mass_ratio,
            variance: 1.0 / (temp_ratio * mass_ratio),
            drift: 0.0,
        },
    ]
}

/// Longitudinal dielectric function `1 + sum chi_s`.
pub fn dielectric(k: f64, omega: C64, species: &[LinearSpecies]) -> C64 {
    let mut eps = C64::new(1.0, 0.0);
    for s in species {
        let zeta = (omega - k * s.drift) / (2.0 * s.variance).sqrt() / k;
        eps += s.omega_p2 / (k * k * s.variance) * (1.0 + zeta * plasma_z(zeta));
    }
    eps
}

/// Complex secant iteration for a root of the dielectric function.
pub fn dispersion_root(k: f64, guess: C64, species: &[LinearSpecies]) -> C64 {
    let mut w0 = guess;
    let mut w1 = guess * (1.0 + 1e-4) + C64::new(0.0, 1e-5);
    let mut f0 = dielectric(k, w0, species);
    for _ in 0..200 {
        let f1 = dielectric(k, w1, species);
        if f1.norm() < 1e-13 / (k * k) {
            return w1;
        }
        let w2 = w1 - f1 * (w1 - w0) / (f1 - f0);
        w0 = w1;
        f0 = f1;
        w1 = w2;
        if (w1 - w0).norm() < 1e-13 * w1.norm().max(1e-3) {
            return w1;
        }
    }
    panic!("dispersion root did not converge near {guess}");
}

/// Ion-acoustic growth rate curve by continuation in `k`; returns `(k, omega)`.
pub fn ion_acoustic_branch(species: &[LinearSpecies], ks: &[f64]) -> Vec<(f64, C64)> {
    let mut out = Vec::with_capacity(ks.len());
    let cs = species[1].omega_p2.sqrt();
    let mut guess = ks[0] * cs * C64::new(1.3, -0.3);
    let mut prev_k = ks[0];
    for &k in ks {
        // Phase velocity varies slowly along the branch, so extrapolate omega / k.
        let w = dispersion_root(k, guess * (k / prev_k), species);
        out.push((k, w));
        guess = w;
        prev_k = k;
    }
    out
}

// ---------------------------------------------------------------------------
// Dense DG assembly.

/// Lagrange polynomial `l_i` through `nodes`, at `x`.
pub fn lagrange(nodes: &[f64], i: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| (x - xj) / (nodes[i] - xj))
        .product()
}

/// Derivative of `l_i` at `x` by the product rule.
pub fn lagrange_deriv(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut total = 0.0;
    for (k, &xk) in nodes.iter().enumerate() {
        if k == i {
            continue;
        }
        let mut term = 1.0 / (nodes[i] - xk);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != k {
                term *= (x - xj) / (nodes[i] - xj);
            }
        }
        total += term;
    }
    total
}

/// Gauss-Legendre rule by Golub-Welsch (eigenvalues of the Jacobi matrix).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        jm[(i, i - 1)] = b;
        jm[(i - 1, i)] = b;
    }
    let eig = jm.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Dense matrix `K` of the 1D upwind DG residual for `a dy f` on `n` equal
/// cells of width `h`: the semi-discrete system is `df/dt = -K f`.
///
/// Entries are built from the weak form
/// `w_i h/2 df_i/dt = int a f l_i' dy - [F l_i]` with exact integrals and
/// zero inflow on non-periodic lines.
pub fn dense_advection(nodes: &[f64], weights: &[f64], n: usize, h: f64, a: f64, periodic: bool) -> DMatrix<f64> {
    let q = nodes.len();
    let (gx, gw) = gauss_legendre(q + 3);
    let mut k = DMatrix::<f64>::zeros(n * q, n * q);
    // Volume term: -a int l_p l_i' dxi / (w_i)
    for c in 0..n {
        for i in 0..q {
            for p in 0..q {
                let integral: f64 = gx
                    .iter()
                    .zip(&gw)
                    .map(|(&x, &w)| w * lagrange(nodes, p, x) * lagrange_deriv(nodes, i, x))
                    .sum();
                k[(c * q + i, c * q + p)] -= a * integral * 2.0 / (weights[i] * h);
            }
        }
    }
    // Face terms: face f sits between cell f-1 and cell f.
    for face in 0..=n {
        let (left, right) = match (face, periodic) {
            (0, true) => (Some(n - 1), Some(0)),
            (0, false) => (None, Some(0)),
            (f, true) if f == n => continue,
            (f, false) if f == n => (Some(n - 1), None),
            (f, _) => (Some(f - 1), Some(f)),
        };
        // The flux is a times the upwind trace: a sum_p coeff_p f_p.
        let (src, at) = if a > 0.0 { (left, 1.0) } else { (right, -1.0) };
        let Some(src) = src else { continue };
        for p in 0..q {
            let flux = a * lagrange(nodes, p, at);
            if let Some(l) = left {
                for i in 0..q {
                    k[(l * q + i, src * q + p)] += flux * lagrange(nodes, i, 1.0) * 2.0 / (weights[i] * h);
                }
            }
            if let Some(r) = right {
                for i in 0..q {
                    k[(r * q + i, src * q + p)] -= flux * lagrange(nodes, i, -1.0) * 2.0 / (weights[i] * h);
                }
            }
        }
    }
    k
}

/// Flat index of the solver layout.
pub fn flat(nv: usize, q: usize, r: usize, j: usize, l: usize, m: usize) -> usize {
    ((r * nv + j) * q + l) * q + m
}

/// Dense phase-space operator of `v df/dx` for a field on uniform meshes.
pub fn dense_x_transport(nodes: &[f64], weights: &[f64], nx: usize, hx: f64, v_nodes: &[f64], nv: usize) -> DMatrix<f64> {
    let q = nodes.len();
    let size = nx * nv * q * q;
    let mut big = DMatrix::<f64>::zeros(size, size);
    for j in 0..nv {
        for m in 0..q {
            let a = v_nodes[j * q + m];
            let line = dense_advection(nodes, weights, nx, hx, a, true);
            for r in 0..nx {
                for l in 0..q {
                    for r2 in 0..nx {
                        for l2 in 0..q {
                            big[(flat(nv, q, r, j, l, m), flat(nv, q, r2, j, l2, m))] = line[(r * q + l, r2 * q + l2)];
                        }
                    }
                }
            }
        }
    }
    big
}

/// Dense phase-space operator of `mu E df/dv` with `E` collocated at x nodes.
pub fn dense_v_transport(nodes: &[f64], weights: &[f64], nx: usize, nv: usize, hv: f64, e: &[f64], mu: f64) -> DMatrix<f64> {
    let q = nodes.len();
    let size = nx * nv * q * q;
    let mut big = DMatrix::<f64>::zeros(size, size);
    for r in 0..nx {
        for l in 0..q {
            let line = dense_advection(nodes, weights, nv, hv, mu * e[r * q + l], false);
            for j in 0..nv {
                for m in 0..q {
                    for j2 in 0..nv {
                        for m2 in 0..q {
                            big[(flat(nv, q, r, j, l, m), flat(nv, q, r, j2, l, m2))] = line[(j * q + m, j2 * q + m2)];
                        }
                    }
                }
            }
        }
    }
    big
}

// ---------------------------------------------------------------------------
// Full-system Newton for the coupled field solve at one x node.

/// Unknowns `[g_e, g_i, E*]` of the midpoint system
/// `g - f + dt K(mu (E + E*)/2) (f + g)/2 = 0`, `E* - E + dt (J(f) + J(g))/2 = 0`
/// with `J = J_i - J_e`, solved by Newton with a central-difference Jacobian.
pub struct NodeProblem {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per species: (rows f, cells, width, mu, v nodes, v weights).
    pub species: Vec<(Vec<f64>, usize, f64, f64, Vec<f64>, Vec<f64>)>,
    pub e: f64,
    pub dt: f64,
}

impl NodeProblem {
    fn current(&self, rows: &[&[f64]]) -> f64 {
        rows.iter()
            .zip(&self.species)
            .enumerate()
            .map(|(si, (g, s))| {
                let js: f64 = g.iter().zip(s.4.iter().zip(&s.5)).map(|(f, (v, w))| f * v * w).sum();
                if si == 0 {
                    -js
                } else {
                    js
                }
            })
            .sum()
    }

    pub fn residual(&self, u: &DVector<f64>) -> DVector<f64> {
        let n_e = self.species[0].0.len();
        let n_i = self.species[1].0.len();
        let e_star = u[n_e + n_i];
        let e_bar = 0.5 * (self.e + e_star);
        let mut out = DVector::zeros(u.len());
        let mut offset = 0;
        let mut new_rows: Vec<Vec<f64>> = Vec::new();
        for (f, n, h, mu, _, _) in &self.species {
            let len = f.len();
            let g = u.rows(offset, len).into_owned();
            let f = DVector::from_column_slice(f);
            let k = dense_advection(&self.nodes, &self.weights, *n, *h, mu * e_bar, false);
            let r = &g - &f + self.dt * (&k * (&f + &g) * 0.5);
            out.rows_mut(offset, len).copy_from(&r);
            new_rows.push(g.iter().copied().collect());
            offset += len;
        }
        let old: Vec<&[f64]> = self.species.iter().map(|s| s.0.as_slice()).collect();
        let new: Vec<&[f64]> = new_rows.iter().map(Vec::as_slice).collect();
        out[offset] = e_star - self.e + 0.5 * self.dt * (self.current(&old) + self.current(&new));
        out
    }

    /// Returns `(g_e, g_i, E*)`.
    pub fn solve(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let n_e = self.species[0].0.len();
        let n_i = self.species[1].0.len();
        let size = n_e + n_i + 1;
        let mut u = DVector::zeros(size);
        u.rows_mut(0, n_e).copy_from_slice(&self.species[0].0);
        u.rows_mut(n_e, n_i).copy_from_slice(&self.species[1].0);
        u[size - 1] = self.e;
        for _ in 0..50 {
            let r = self.residual(&u);
            if r.amax() < 1e-14 {
                break;
            }
            let mut jac = DMatrix::zeros(size, size);
            for c in 0..size {
                let h = 1e-6 * u[c].abs().max(1e-3);
                let mut up = u.clone();
                let mut dn = u.clone();
                up[c] += h;
                dn[c] -= h;
                let col = (self.residual(&up) - self.residual(&dn)) / (2.0 * h);
                jac.set_column(c, &col);
            }
            let step = jac.lu().solve(&r).expect("nonsingular Jacobian");
            u -= step;
        }
        (
            u.rows(0, n_e).iter().copied().collect(),
            u.rows(n_e, n_i).iter().copied().collect(),
            u[size - 1],
        )
    }
}

// ---------------------------------------------------------------------------
// Statistics.

/// Two-pass mean, sample std, skewness and raw kurtosis.
pub fn reference_moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let (m2, m3, m4) = (c(2), c(3), c(4));
    (mean, (m2 * n / (n - 1.0)).sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2))
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Local maxima of a sampled series, refined by a parabola through the
/// three samples around each peak; returns `(t, value)`.
pub fn refined_peaks(t: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            if (h0 - h1).abs() > 1e-9 * h0 {
                out.push((t[i], y[i]));
                continue;
            }
            let denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
            if denom >= 0.0 {
                out.push((t[i], y[i]));
                continue;
            }
            let s = 0.5 * (y[i - 1] - y[i + 1]) / denom;
            out.push((t[i] + s * h0, y[i] - 0.25 * (y[i - 1] - y[i + 1]) * s));
        }
    }
    out
}
