use proptest::prelude::*;
use std::f64::consts::PI;
use vlasov_ampere::config::{preset, RunConfig};
use vlasov_ampere::diagnostics::{log_fourier_mode, resistivity};
use vlasov_ampere::ensemble::{chi_square_gaussian_test, chi_square_sf, ensemble_stats, pchip_eval, standardize};
use vlasov_ampere::field::{l2_norm, particle_number, Discretization, NodalField, Species};
use vlasov_ampere::implicit::scheme_a;
use vlasov_ampere::quadmesh::build_mesh;
use vlasov_ampere::state::State;

fn disc(nx: usize, nv: usize, k: usize) -> Discretization {
    Discretization::new(
        build_mesh(0.0, 4.0 * PI, nx, true).unwrap(),
        build_mesh(-6.0, 6.0, nv, false).unwrap(),
        build_mesh(-2.0, 2.0, nv, false).unwrap(),
        k,
    )
    .unwrap()
}

fn field_from(d: &Discretization, s: Species, values: &[f64]) -> NodalField {
    let n = d.nx() * d.nv(s) * d.q() * d.q();
    NodalField::from_values(s, d.nx(), d.nv(s), d.q(), values.iter().cycle().take(n).copied().collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn particle_number_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        f in prop::collection::vec(-1.0f64..1.0, 50),
        g in prop::collection::vec(-1.0f64..1.0, 50),
    ) {
        let d = disc(3, 4, 2);
        let (ff, gg) = (field_from(&d, Species::Electron, &f), field_from(&d, Species::Electron, &g));
        let mut comb = ff.clone();
        for v in comb.values.iter_mut() {
            *v *= a;
        }
        comb.axpy(b, &gg);
        let lhs = particle_number(&d, &comb);
        let rhs = a * particle_number(&d, &ff) + b * particle_number(&d, &gg);
        prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn log_mode_ignores_phase(amp in 1e-6f64..10.0, phase in 0.0f64..(2.0 * PI), n in 1usize..4) {
        let d = disc(24, 2, 2);
        let k = 0.5 * n as f64;
        let e = d.sample_efield(|x| amp * (k * x + phase).sin());
        let got = log_fourier_mode(&d, &e, n, 0.5).unwrap();
        let want = (0.5 * amp).log10();
        prop_assert!((got - want).abs() < 1e-5, "{} vs {}", got, want);
    }

    #[test]
    fn resistivity_is_scale_invariant(j0 in 0.01f64..5.0, ratio in 0.5f64..1.5, dt in 1e-3f64..1.0, c in -100.0f64..100.0) {
        prop_assume!(c.abs() > 1e-3);
        let a = resistivity(j0, j0 * ratio, dt).unwrap();
        let b = resistivity(c * j0, c * j0 * ratio, dt).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn pchip_hits_knots_and_keeps_monotone_data_monotone(
        steps in prop::collection::vec((0.1f64..2.0, 0.0f64..3.0), 3..12),
    ) {
        let mut t = vec![0.0];
        let mut y = vec![0.0];
        for (dt, dy) in &steps {
            t.push(t.last().unwrap() + dt);
            y.push(y.last().unwrap() + dy);
        }
        let at_knots = pchip_eval(&t, &y, &t).unwrap();
        for (a, b) in at_knots.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let end = *t.last().unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| (end * i as f64 / 400.0).min(end)).collect();
        let vals = pchip_eval(&t, &y, &grid).unwrap();
        for w in vals.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn standardized_values_have_zero_mean_and_unit_spread(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..20),
    ) {
        let stats = ensemble_stats(&rows).unwrap();
        let z = standardize(&rows, &stats);
        for (i, s) in stats.iter().enumerate() {
            if s.degenerate {
                continue;
            }
            let col: Vec<f64> = z.iter().map(|r| r[i]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn chi_square_ignores_sample_order(z in prop::collection::vec(-4.0f64..4.0, 20..200), seed in any::<u64>()) {
        let a = chi_square_gaussian_test(&z, 10, 0.05).unwrap();
        let mut shuffled = z.clone();
        let len = shuffled.len();
        let mut s = seed;
        for i in (1..len).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = chi_square_gaussian_test(&shuffled, 10, 0.05).unwrap();
        prop_assert_eq!(a.observed, b.observed);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn chi_square_tail_decreases(x in 0.0f64..60.0, dx in 0.01f64..10.0, dof in 1usize..30) {
        let (p, q) = (chi_square_sf(x, dof), chi_square_sf(x + dx, dof));
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q <= p);
    }

    #[test]
    fn config_survives_a_json_round_trip(
        nx in 2usize..500,
        cfl in 0.01f64..10.0,
        t_end in 0.1f64..1000.0,
        seed in any::<u64>(),
        name in prop::sample::select(vec!["landau25", "landau1836", "s1"]),
    ) {
        let mut cfg = preset(name).unwrap();
        cfg.mesh.nx = nx;
        cfg.cfl = cfl;
        cfg.t_end = t_end;
        cfg.seed = seed;
        let back = RunConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn x_advection_conserves_mass_and_does_not_grow_l2(
        values in prop::collection::vec(0.0f64..1.0, 72),
        dt in 0.01f64..3.0,
    ) {
        let d = disc(4, 3, 2);
        let fe = field_from(&d, Species::Electron, &values);
        let fi = field_from(&d, Species::Ion, &values[5..]);
        let st = State::new(&d, fe, fi, d.zero_efield()).unwrap();
        let next = scheme_a(&d, &st, dt).unwrap();
        for s in Species::ALL {
            let (a, b) = (st.field(s), next.field(s));
            let (n0, n1) = (particle_number(&d, a), particle_number(&d, b));
            prop_assert!((n1 - n0).abs() < 1e-12 * n0.abs().max(1.0));
            prop_assert!(l2_norm(&d, b) <= l2_norm(&d, a) * (1.0 + 1e-13));
        }
    }
}
