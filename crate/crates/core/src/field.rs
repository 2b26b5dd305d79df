//! Phase-space and electric-field storage plus velocity moments.
//!
//! A [`NodalField`] stores `f(x_r^(l), v_j^(m))` for every x-cell `r`,
//! v-cell `j` and node pair `(l, m)`; the flat index is
//! `((r * n_v + j) * q + l) * q + m`. The same layout is used for snapshots.

use crate::error::{Error, Result};
use crate::quadmesh::{build_gauss_rule, lagrange_tables, Interval1DMesh, LagrangeBasis};

/// Particle species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Electron,
    Ion,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::Electron, Species::Ion];

    pub fn index(self) -> usize {
        match self {
            Species::Electron => 0,
            Species::Ion => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Species::Electron => "e",
            Species::Ion => "i",
        }
    }
}

/// Meshes and basis tables shared by every field of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub x: Interval1DMesh,
    /// Velocity meshes indexed by [`Species::index`].
    pub v: [Interval1DMesh; 2],
    pub basis: LagrangeBasis,
    x_nodes: Vec<f64>,
    x_weights: Vec<f64>,
    v_nodes: [Vec<f64>; 2],
    v_weights: [Vec<f64>; 2],
}

impl Discretization {
    pub fn new(x: Interval1DMesh, v_e: Interval1DMesh, v_i: Interval1DMesh, k: usize) -> Result<Self> {
        if !x.is_periodic() {
            return Err(Error::Config("the x-mesh must be periodic".into()));
        }
        if v_e.is_periodic() || v_i.is_periodic() {
            return Err(Error::Config("velocity meshes must be non-periodic".into()));
        }
        let rule = build_gauss_rule(k + 1)?;
        let x_nodes = x.node_coordinates(&rule);
        let x_weights = weights_for(&x, rule.weights());
        let v_nodes = [v_e.node_coordinates(&rule), v_i.node_coordinates(&rule)];
        let v_weights = [weights_for(&v_e, rule.weights()), weights_for(&v_i, rule.weights())];
        Ok(Discretization {
            x,
            v: [v_e, v_i],
            basis: lagrange_tables(&rule),
            x_nodes,
            x_weights,
            v_nodes,
            v_weights,
        })
    }

    /// Nodes per cell and direction, `k + 1`.
    pub fn q(&self) -> usize {
        self.basis.n_nodes()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn nx(&self) -> usize {
        self.x.n_cells()
    }

    pub fn nv(&self, s: Species) -> usize {
        self.v[s.index()].n_cells()
    }

    pub fn v_mesh(&self, s: Species) -> &Interval1DMesh {
        &self.v[s.index()]
    }

    /// Number of x nodes, `N_x (k + 1)`.
    pub fn n_xnodes(&self) -> usize {
        self.nx() * self.q()
    }

    /// Physical x coordinates of all x nodes.
    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    /// Physical v coordinates of all v nodes of a species.
    pub fn v_nodes(&self, s: Species) -> &[f64] {
        &self.v_nodes[s.index()]
    }

    /// Quadrature weights (including the Jacobian) of every x node.
    pub fn x_weights(&self) -> &[f64] {
        &self.x_weights
    }

    /// Quadrature weights (including the Jacobian) of every v node.
    pub fn v_weights(&self, s: Species) -> &[f64] {
        &self.v_weights[s.index()]
    }

    pub fn zero_field(&self, s: Species) -> NodalField {
        NodalField::zeros(s, self.nx(), self.nv(s), self.q())
    }

    pub fn zero_efield(&self) -> ElectricField {
        ElectricField::zeros(self.nx(), self.q())
    }

    /// Builds a field by sampling `f(x, v)` at every node.
    pub fn sample(&self, s: Species, f: impl Fn(f64, f64) -> f64) -> NodalField {
        let xs = self.x_nodes();
        let vs = self.v_nodes(s);
        let q = self.q();
        let nv = self.nv(s);
        let mut out = self.zero_field(s);
        for r in 0..self.nx() {
            for j in 0..nv {
                for l in 0..q {
                    for m in 0..q {
                        let idx = out.index(r, j, l, m);
                        out.values[idx] = f(xs[r * q + l], vs[j * q + m]);
                    }
                }
            }
        }
        out
    }

    /// Builds an electric field by sampling `e(x)` at every x node.
    pub fn sample_efield(&self, e: impl Fn(f64) -> f64) -> ElectricField {
        ElectricField {
            nx: self.nx(),
            q: self.q(),
            values: self.x_nodes.iter().map(|&x| e(x)).collect(),
        }
    }

    pub(crate) fn check_field(&self, f: &NodalField) -> Result<()> {
        if f.nx != self.nx() || f.nv != self.nv(f.species) || f.q != self.q() {
            return Err(Error::Shape(format!(
                "{} field has shape ({}, {}, {}) but the meshes give ({}, {}, {})",
                f.species.tag(),
                f.nx,
                f.nv,
                f.q,
                self.nx(),
                self.nv(f.species),
                self.q()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_efield(&self, e: &ElectricField) -> Result<()> {
        if e.nx != self.nx() || e.q != self.q() {
            return Err(Error::Shape(format!(
                "electric field has shape ({}, {}) but the x-mesh gives ({}, {})",
                e.nx,
                e.q,
                self.nx(),
                self.q()
            )));
        }
        Ok(())
    }
}

fn weights_for(mesh: &Interval1DMesh, ref_weights: &[f64]) -> Vec<f64> {
    mesh.widths()
        .iter()
        .flat_map(|&h| ref_weights.iter().map(move |&w| 0.5 * h * w))
        .collect()
}

/// Nodal values of one species' distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub species: Species,
    nx: usize,
    nv: usize,
    q: usize,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(species: Species, nx: usize, nv: usize, q: usize) -> Self {
        NodalField {
            species,
            nx,
            nv,
            q,
            values: vec![0.0; nx * nv * q * q],
        }
    }

    pub fn from_values(species: Species, nx: usize, nv: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * nv * q * q {
            return Err(Error::Shape(format!(
                "expected {} values for a ({nx}, {nv}, {q}) field, got {}",
                nx * nv * q * q,
                values.len()
            )));
        }
        Ok(NodalField {
            species,
            nx,
            nv,
            q,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn index(&self, r: usize, j: usize, l: usize, m: usize) -> usize {
        ((r * self.nv + j) * self.q + l) * self.q + m
    }

    /// Values of the `q x q` block of cell `(r, j)`, x-node major.
    #[inline]
    pub fn block(&self, r: usize, j: usize) -> &[f64] {
        let n = self.q * self.q;
        let start = (r * self.nv + j) * n;
        &self.values[start..start + n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|f|` over the first and last velocity cells.
    pub fn boundary_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..self.nx {
            for j in [0, self.nv - 1] {
                for v in self.block(r, j) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &NodalField) {
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }
}

/// Nodal values of the electric field at the x Gauss nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricField {
    nx: usize,
    q: usize,
    pub values: Vec<f64>,
}

impl ElectricField {
    pub fn zeros(nx: usize, q: usize) -> Self {
        ElectricField {
            nx,
            q,
            values: vec![0.0; nx * q],
        }
    }

    pub fn from_values(nx: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * q {
            return Err(Error::Shape(format!(
                "expected {} electric field values, got {}",
                nx * q,
                values.len()
            )));
        }
        Ok(ElectricField { nx, q, values })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Velocity moments at every x node.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub rho_e: Vec<f64>,
    pub rho_i: Vec<f64>,
    pub j_e: Vec<f64>,
    pub j_i: Vec<f64>,
    /// Total current `J_i - J_e`.
    pub j: Vec<f64>,
    /// Spatial average of `j`.
    pub j0: f64,
}

/// Density and current of one species at every x node.
pub fn species_moments(disc: &Discretization, f: &NodalField) -> Result<(Vec<f64>, Vec<f64>)> {
    disc.check_field(f)?;
    let q = disc.q();
    let vs = disc.v_nodes(f.species);
    let vw = disc.v_weights(f.species);
    let mut rho = vec![0.0; disc.n_xnodes()];
    let mut cur = vec![0.0; disc.n_xnodes()];
    for r in 0..f.nx {
        for j in 0..f.nv {
            let b = f.block(r, j);
            for l in 0..q {
                let row = &b[l * q..(l + 1) * q];
                let (mut s0, mut s1) = (0.0, 0.0);
                for m in 0..q {
                    let w = vw[j * q + m] * row[m];
                    s0 += w;
                    s1 += w * vs[j * q + m];
                }
                rho[r * q + l] += s0;
                cur[r * q + l] += s1;
            }
        }
    }
    Ok((rho, cur))
}

/// Current density `J_alpha = int f v dv` of one species at every x node.
pub fn species_current(disc: &Discretization, f: &NodalField) -> Result<Vec<f64>> {
    Ok(species_moments(disc, f)?.1)
}

/// Densities, currents and the mean current of both species.
pub fn compute_moments(disc: &Discretization, f_e: &NodalField, f_i: &NodalField) -> Result<Moments> {
    if f_e.nx != f_i.nx || f_e.q != f_i.q {
        return Err(Error::Shape("electron and ion fields live on different x-meshes".into()));
    }
    let (rho_e, j_e) = species_moments(disc, f_e)?;
    let (rho_i, j_i) = species_moments(disc, f_i)?;
    let j: Vec<f64> = j_i.iter().zip(&j_e).map(|(a, b)| a - b).collect();
    let j0 = x_average(disc, &j);
    Ok(Moments {
        rho_e,
        rho_i,
        j_e,
        j_i,
        j,
        j0,
    })
}

/// Integral over the x-domain of nodal values.
pub fn x_integral(disc: &Discretization, values: &[f64]) -> f64 {
    disc.x_weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `(1/L) int g dx` for nodal values `g`.
pub fn x_average(disc: &Discretization, values: &[f64]) -> f64 {
    x_integral(disc, values) / disc.x.length()
}

/// Spatial mean `E_0` of the electric field.
pub fn spatial_average(disc: &Discretization, e: &ElectricField) -> f64 {
    x_average(disc, &e.values)
}

/// `int int w(v) g(f) dv dx` over all nodes.
fn phase_integral(disc: &Discretization, f: &NodalField, kernel: impl Fn(f64, f64) -> f64) -> f64 {
    let q = disc.q();
    let xw = disc.x_weights();
    let vs = disc.v_nodes(f.species);
    let vw = disc.v_weights(f.species);
    let mut total = 0.0;
    for r in 0..f.nx {
        let mut col = 0.0;
        for j in 0..f.nv {
            let b = f.block(r, j);
            for l in 0..q {
                let mut s = 0.0;
                for m in 0..q {
                    s += vw[j * q + m] * kernel(b[l * q + m], vs[j * q + m]);
                }
                col += xw[r * q + l] * s;
            }
        }
        total += col;
    }
    total
}

/// Velocity-weighted integrals of one field, evaluated in a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseIntegrals {
    /// `int int f`.
    pub number: f64,
    /// `int int f v`.
    pub momentum: f64,
    /// `(1/2) int int f v^2`.
    pub kinetic: f64,
    /// `sqrt(int int f^2)`.
    pub l2: f64,
}

pub fn phase_integrals(disc: &Discretization, f: &NodalField) -> PhaseIntegrals {
    let q = disc.q();
    let xw = disc.x_weights();
    let vs = disc.v_nodes(f.species);
    let vw = disc.v_weights(f.species);
    let mut acc = [0.0; 4];
    for r in 0..f.nx {
        let mut col = [0.0; 4];
        for j in 0..f.nv {
            let b = f.block(r, j);
            for l in 0..q {
                let mut s = [0.0; 4];
                for m in 0..q {
                    let (w, v, g) = (vw[j * q + m], vs[j * q + m], b[l * q + m]);
                    let wg = w * g;
                    s[0] += wg;
                    s[1] += wg * v;
                    s[2] += wg * v * v;
                    s[3] += wg * g;
                }
                for k in 0..4 {
                    col[k] += xw[r * q + l] * s[k];
                }
            }
        }
        for k in 0..4 {
            acc[k] += col[k];
        }
    }
    PhaseIntegrals {
        number: acc[0],
        momentum: acc[1],
        kinetic: 0.5 * acc[2],
        l2: acc[3].sqrt(),
    }
}

/// Particle number `int int f dv dx`.
pub fn particle_number(disc: &Discretization, f: &NodalField) -> f64 {
    phase_integral(disc, f, |f, _| f)
}

/// `sqrt(int int f^2 dv dx)`.
pub fn l2_norm(disc: &Discretization, f: &NodalField) -> f64 {
    phase_integral(disc, f, |f, _| f * f).sqrt()
}

/// `(1/2) int int f v^2 dv dx` (without any mass factor).
pub fn kinetic_energy(disc: &Discretization, f: &NodalField) -> f64 {
    0.5 * phase_integral(disc, f, |f, v| f * v * v)
}

/// `int int f v dv dx` (without any mass factor).
pub fn momentum(disc: &Discretization, f: &NodalField) -> f64 {
    phase_integral(disc, f, |f, v| f * v)
}

/// `-int int f ln f` over nodes with `f > 0`, and the number of skipped nodes.
pub fn entropy(disc: &Discretization, f: &NodalField) -> (f64, usize) {
    let skipped = f.values.iter().filter(|&&v| v <= 0.0).count();
    let s = phase_integral(disc, f, |f, _| if f > 0.0 { -f * f.ln() } else { 0.0 });
    (s, skipped)
}

/// `(1/2) int E^2 dx`.
pub fn electric_energy(disc: &Discretization, e: &ElectricField) -> f64 {
    let sq: Vec<f64> = e.values.iter().map(|v| v * v).collect();
    0.5 * x_integral(disc, &sq)
}

/// `(1/L) int f(x, v) dx` at every v node of the species.
pub fn spatially_averaged_f(disc: &Discretization, f: &NodalField) -> Result<Vec<f64>> {
    disc.check_field(f)?;
    let q = disc.q();
    let xw = disc.x_weights();
    let mut out = vec![0.0; f.nv * q];
    for r in 0..f.nx {
        for j in 0..f.nv {
            let b = f.block(r, j);
            for l in 0..q {
                let w = xw[r * q + l];
                for m in 0..q {
                    out[j * q + m] += w * b[l * q + m];
                }
            }
        }
    }
    let len = disc.x.length();
    out.iter_mut().for_each(|v| *v /= len);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadmesh::build_mesh;
    use std::f64::consts::PI;

    fn disc(nx: usize, nv: usize, vc: f64, k: usize) -> Discretization {
        Discretization::new(
            build_mesh(0.0, 4.0 * PI, nx, true).unwrap(),
            build_mesh(-vc, vc, nv, false).unwrap(),
            build_mesh(-vc, vc, nv, false).unwrap(),
            k,
        )
        .unwrap()
    }

    fn maxwellian(v: f64) -> f64 {
        (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn zero_fields_have_zero_moments() {
        let d = disc(4, 6, 8.0, 2);
        let m = compute_moments(&d, &d.zero_field(Species::Electron), &d.zero_field(Species::Ion)).unwrap();
        assert!(m.rho_e.iter().chain(&m.j).all(|&v| v == 0.0));
        assert_eq!(m.j0, 0.0);
    }

    #[test]
    fn maxwellian_moments() {
        let d = disc(4, 200, 8.0, 2);
        let fe = d.sample(Species::Electron, |_, v| maxwellian(v));
        let (rho, cur) = species_moments(&d, &fe).unwrap();
        // Mass outside [-8, 8] is erfc(8/sqrt 2) ~ 1.2e-15.
        for (r, c) in rho.iter().zip(&cur) {
            assert!((r - 1.0).abs() < 1e-10);
            assert!(c.abs() < 1e-12);
        }
        assert!((kinetic_energy(&d, &fe) - 0.5 * 4.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn drifted_maxwellian_current() {
        let d = disc(2, 200, 10.3, 2);
        let fe = d.sample(Species::Electron, |_, v| maxwellian(v - 1.7));
        let (rho, cur) = species_moments(&d, &fe).unwrap();
        for (r, c) in rho.iter().zip(&cur) {
            assert!((c - 1.7 * r).abs() < 1e-8);
        }
    }

    #[test]
    fn average_of_sine_vanishes() {
        let d = disc(7, 2, 1.0, 2);
        let e = d.sample_efield(|x| (0.5 * x).sin());
        assert!(spatial_average(&d, &e).abs() < 1e-13);
        let c = d.sample_efield(|_| 2.5);
        assert!((spatial_average(&d, &c) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn even_field_has_no_momentum() {
        let d = disc(3, 10, 5.0, 2);
        let f = d.sample(Species::Ion, |x, v| (1.0 + 0.1 * x.cos()) * (-v * v).exp());
        assert!(momentum(&d, &f).abs() < 1e-13);
    }

    #[test]
    fn averaged_f_of_uniform_field() {
        let d = disc(5, 8, 4.0, 2);
        let f = d.sample(Species::Electron, |_, v| maxwellian(v));
        let avg = spatially_averaged_f(&d, &f).unwrap();
        let slice: Vec<f64> = d.v_nodes(Species::Electron).iter().map(|&v| maxwellian(v)).collect();
        for (a, b) in avg.iter().zip(&slice) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let d = disc(4, 6, 8.0, 2);
        let other = disc(5, 6, 8.0, 2);
        let err = compute_moments(&d, &other.zero_field(Species::Electron), &d.zero_field(Species::Ion));
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
