//! Upwind DG transport operators in x and v.
//!
//! On a cell of width `h` the nodal weak form of `a d/dy f` reads
//!
//! ```text
//! R_i = (2/h) [ -a sum_p S_ip f_p + F_R r_i - F_L l_i ]
//! ```
//!
//! with `S_ip = w_p D_pi / w_i`, `r_i = l_i(+1) / w_i`, `l_i = l_i(-1) / w_i`
//! and upwind fluxes `F`. For a fixed sign of `a` this collapses to
//! `R = (2a/h) (M f_self + c * t)`, where `t` is the outgoing trace of the
//! upwind neighbour; [`SweepTables`] holds `M`, `c` and the trace vector.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::{Discretization, ElectricField, NodalField};
use crate::quadmesh::LagrangeBasis;

/// Upwind numerical flux `{a f} + |a|/2 [f]` for speed `a` across an interface.
pub fn upwind_flux(speed: f64, left_value: f64, right_value: f64) -> f64 {
    if speed > 0.0 {
        speed * left_value
    } else if speed < 0.0 {
        speed * right_value
    } else {
        0.0
    }
}

/// Cell operator for one advection direction and one sign of the speed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTables {
    pub q: usize,
    /// Row-major `q x q` self-coupling matrix.
    pub m: Vec<f64>,
    /// Coupling to the upwind neighbour's trace.
    pub c: Vec<f64>,
    /// Trace vector evaluating the outgoing (downwind-face) value of a cell.
    pub trace: Vec<f64>,
}

/// The pair of sweep tables for positive and negative speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionOperator1D {
    pub pos: SweepTables,
    pub neg: SweepTables,
}

impl AdvectionOperator1D {
    pub fn new(basis: &LagrangeBasis) -> Self {
        let q = basis.n_nodes();
        let w = basis.weights();
        let d = basis.diff_matrix();
        let lv = basis.left_values();
        let rv = basis.right_values();
        let s: Vec<f64> = (0..q * q)
            .map(|ip| {
                let (i, p) = (ip / q, ip % q);
                w[p] * d[p * q + i] / w[i]
            })
            .collect();
        let r: Vec<f64> = (0..q).map(|i| rv[i] / w[i]).collect();
        let l: Vec<f64> = (0..q).map(|i| lv[i] / w[i]).collect();
        // a > 0: F_R = a f_self(+1), F_L = a f_left(+1).
        let pos = SweepTables {
            q,
            m: (0..q * q).map(|ip| -s[ip] + r[ip / q] * rv[ip % q]).collect(),
            c: l.iter().map(|v| -v).collect(),
            trace: rv.to_vec(),
        };
        // a < 0: F_R = a f_right(-1), F_L = a f_self(-1).
        let neg = SweepTables {
            q,
            m: (0..q * q).map(|ip| -s[ip] - l[ip / q] * lv[ip % q]).collect(),
            c: r.clone(),
            trace: lv.to_vec(),
        };
        AdvectionOperator1D { pos, neg }
    }

    pub fn for_speed(&self, a: f64) -> &SweepTables {
        if a >= 0.0 {
            &self.pos
        } else {
            &self.neg
        }
    }
}

/// Transport residuals of one species, accumulated as `out += scale * R`.
///
/// `R` is the x-residual of `v df/dx` when `x_transport` is set, plus the
/// v-residual of `mu E df/dv` when `efield` is given. The v-speed is collocated at each
/// x node and the exterior state at both velocity ends is zero.
pub fn accumulate_residual(
    disc: &Discretization,
    ops: &AdvectionOperator1D,
    f: &NodalField,
    x_transport: bool,
    efield: Option<(&ElectricField, f64)>,
    scale: f64,
    out: &mut NodalField,
) -> Result<()> {
    disc.check_field(f)?;
    disc.check_field(out)?;
    if let Some((e, _)) = efield {
        disc.check_efield(e)?;
    }
    let q = disc.q();
    let nx = disc.nx();
    let nv = f.nv();
    let qq = q * q;
    let col = nv * qq;
    let vs = disc.v_nodes(f.species);
    let hv = disc.v_mesh(f.species).widths();
    let hx = disc.x.widths();
    let fv = &f.values;
    let cols = ColumnData {
        nx,
        nv,
        vs,
        hv,
        hx,
        fv,
        x_transport,
        efield,
        scale,
    };
    out.values
        .par_chunks_mut(col)
        .enumerate()
        .for_each(|(r, out_col)| match q {
            // Constant node counts let the compiler unroll the small loops.
            1 => column_residual(1, ops, &cols, r, out_col),
            2 => column_residual(2, ops, &cols, r, out_col),
            3 => column_residual(3, ops, &cols, r, out_col),
            4 => column_residual(4, ops, &cols, r, out_col),
            _ => column_residual(q, ops, &cols, r, out_col),
        });
    Ok(())
}

struct ColumnData<'a> {
    nx: usize,
    nv: usize,
    vs: &'a [f64],
    hv: &'a [f64],
    hx: &'a [f64],
    fv: &'a [f64],
    x_transport: bool,
    efield: Option<(&'a ElectricField, f64)>,
    scale: f64,
}

#[inline(always)]
fn column_residual(q: usize, ops: &AdvectionOperator1D, d: &ColumnData, r: usize, out_col: &mut [f64]) {
    let ColumnData {
        nx,
        nv,
        vs,
        hv,
        hx,
        fv,
        x_transport,
        efield,
        scale,
    } = *d;
    let qq = q * q;
    let col = nv * qq;
    let left = if r == 0 { nx - 1 } else { r - 1 };
    let right = if r + 1 == nx { 0 } else { r + 1 };
    let here = &fv[r * col..(r + 1) * col];
    let fl = &fv[left * col..(left + 1) * col];
    let fr = &fv[right * col..(right + 1) * col];
    let cx = 2.0 * scale / hx[r];
    if x_transport {
        for j in 0..nv {
            let b = &here[j * qq..(j + 1) * qq];
            let ob = &mut out_col[j * qq..(j + 1) * qq];
            for m in 0..q {
                let a = vs[j * q + m];
                if a == 0.0 {
                    continue;
                }
                let (tab, nbr) = if a > 0.0 {
                    (&ops.pos, &fl[j * qq..(j + 1) * qq])
                } else {
                    (&ops.neg, &fr[j * qq..(j + 1) * qq])
                };
                let (tm, tc, tr) = (&tab.m[..qq], &tab.c[..q], &tab.trace[..q]);
                let mut t = 0.0;
                for p in 0..q {
                    t += tr[p] * nbr[p * q + m];
                }
                let k = cx * a;
                for l in 0..q {
                    let mut s = tc[l] * t;
                    for p in 0..q {
                        s += tm[l * q + p] * b[p * q + m];
                    }
                    ob[l * q + m] += k * s;
                }
            }
        }
    }
    if let Some((e, mu)) = efield {
        for l in 0..q {
            let a = mu * e.values[r * q + l];
            if a == 0.0 {
                continue;
            }
            let tab = ops.for_speed(a);
            let (tm, tc, tr) = (&tab.m[..qq], &tab.c[..q], &tab.trace[..q]);
            for j in 0..nv {
                let b = &here[j * qq + l * q..j * qq + (l + 1) * q];
                let upwind = if a > 0.0 {
                    j.checked_sub(1)
                } else if j + 1 < nv {
                    Some(j + 1)
                } else {
                    None
                };
                let t = upwind.map_or(0.0, |u| {
                    let nb = &here[u * qq + l * q..u * qq + (l + 1) * q];
                    tr.iter().zip(nb).map(|(a, b)| a * b).sum()
                });
                let k = 2.0 * scale * a / hv[j];
                let ob = &mut out_col[j * qq + l * q..j * qq + (l + 1) * q];
                for m in 0..q {
                    let mut s = tc[m] * t;
                    for p in 0..q {
                        s += tm[m * q + p] * b[p];
                    }
                    ob[m] += k * s;
                }
            }
        }
    }
}

/// Residual of `v df/dx` with periodic upwind fluxes.
pub fn transport_residual_x(disc: &Discretization, f: &NodalField) -> Result<NodalField> {
    let ops = AdvectionOperator1D::new(&disc.basis);
    let mut out = disc.zero_field(f.species);
    accumulate_residual(disc, &ops, f, true, None, 1.0, &mut out)?;
    Ok(out)
}

/// Residual of `mu E df/dv` with upwind fluxes and zero exterior state.
pub fn transport_residual_v(disc: &Discretization, f: &NodalField, e: &ElectricField, mu: f64) -> Result<NodalField> {
    let ops = AdvectionOperator1D::new(&disc.basis);
    let mut out = disc.zero_field(f.species);
    accumulate_residual(disc, &ops, f, false, Some((e, mu)), 1.0, &mut out)?;
    Ok(out)
}
