//! Comparisons of library kernels against the dense references.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlasov_ampere::field::{Discretization, ElectricField, NodalField, Species};
use vlasov_ampere::fluxops::{transport_residual_v, transport_residual_x};
use vlasov_ampere::implicit::{scheme_b_case1, SolverSettings};
use vlasov_ampere::quadmesh::{build_gauss_rule, build_mesh};
use vlasov_ampere::state::{JextMode, Model, State};

use super::{dense_v_transport, dense_x_transport, NodeProblem};

pub fn random_state(disc: &Discretization, rng: &mut ChaCha8Rng) -> State {
    let q = disc.q();
    let nx = disc.nx();
    let mut field = |s: Species| {
        let n = nx * disc.nv(s) * q * q;
        NodalField::from_values(s, nx, disc.nv(s), q, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let (fe, fi) = (field(Species::Electron), field(Species::Ion));
    let e = ElectricField::from_values(nx, q, (0..nx * q).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    State::new(disc, fe, fi, e).unwrap()
}

pub fn small_disc(nx: usize, nv: usize, k: usize) -> Discretization {
    Discretization::new(
        build_mesh(0.0, 3.0, nx, true).unwrap(),
        build_mesh(-2.0, 2.0, nv, false).unwrap(),
        build_mesh(-1.0, 1.0, nv, false).unwrap(),
        k,
    )
    .unwrap()
}

/// Largest deviation of the x and v transport residuals from the dense
/// assembly on a random state with `N_x = N_v = 3`.
pub fn transport_residual_error(k: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nv) = (3, 3);
    let disc = small_disc(nx, nv, k);
    let rule = build_gauss_rule(k + 1).unwrap();
    let st = random_state(&disc, &mut rng);
    let mut worst = 0.0f64;
    for s in Species::ALL {
        let f = st.field(s);
        let fvec = DVector::from_column_slice(&f.values);
        let kx = dense_x_transport(rule.nodes(), rule.weights(), nx, 1.0, disc.v_nodes(s), nv);
        let want = &kx * &fvec;
        let got = transport_residual_x(&disc, f).unwrap();
        for (a, b) in got.values.iter().zip(want.iter()) {
            worst = worst.max((a - b).abs());
        }
        let mu = if s == Species::Electron { -1.0 } else { 0.3 };
        let hv = disc.v_mesh(s).width(0);
        let kv = dense_v_transport(rule.nodes(), rule.weights(), nx, nv, hv, &st.e.values, mu);
        let want = &kv * &fvec;
        let got = transport_residual_v(&disc, f, &st.e, mu).unwrap();
        for (a, b) in got.values.iter().zip(want.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Largest deviation of the per-node field solve from a full Newton solve
/// of the coupled midpoint system, on a random positive state.
pub fn field_solve_error(k: usize, nv: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disc = small_disc(2, nv, k);
    let rule = build_gauss_rule(k + 1).unwrap();
    let q = k + 1;
    let mut st = random_state(&disc, &mut rng);
    for v in st.f_e.values.iter_mut().chain(st.f_i.values.iter_mut()) {
        *v = 0.5 + 0.5 * *v;
    }
    let model = Model {
        mu_i: 0.3,
        jext: JextMode::Zero,
    };
    let dt = 0.1;
    let out = scheme_b_case1(&disc, &st, dt, &model, SolverSettings::default()).unwrap();
    let mut worst = 0.0f64;
    for r in 0..2 {
        for l in 0..q {
            let row = |f: &NodalField| -> Vec<f64> {
                let mut v = Vec::new();
                for j in 0..f.nv() {
                    for m in 0..q {
                        v.push(f.values[f.index(r, j, l, m)]);
                    }
                }
                v
            };
            let species = Species::ALL
                .iter()
                .map(|&s| {
                    let mesh = disc.v_mesh(s);
                    (
                        row(st.field(s)),
                        mesh.n_cells(),
                        mesh.width(0),
                        model.mu(s),
                        disc.v_nodes(s).to_vec(),
                        disc.v_weights(s).to_vec(),
                    )
                })
                .collect();
            let problem = NodeProblem {
                nodes: rule.nodes().to_vec(),
                weights: rule.weights().to_vec(),
                species,
                e: st.e.values[r * q + l],
                dt,
            };
            let (ge, gi, e) = problem.solve();
            worst = worst.max((e - out.e.values[r * q + l]).abs());
            for (a, b) in ge.iter().zip(row(&out.f_e)).chain(gi.iter().zip(row(&out.f_i))) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}
