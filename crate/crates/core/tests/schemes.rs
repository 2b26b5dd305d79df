use vlasov_ampere::config::{preset, InitialCondition, RunConfig, Scheme};
use vlasov_ampere::driver::{execute_run, run_loop, Simulation};
use vlasov_ampere::field::{electric_energy, l2_norm, Species};
use vlasov_ampere::Error;

fn landau(scheme: Scheme) -> RunConfig {
    let mut cfg = preset("landau25").unwrap();
    cfg.scheme = scheme;
    cfg.mesh.nx = 12;
    cfg.mesh.nv_e = 24;
    cfg.mesh.nv_i = 24;
    cfg.output.entropy_stride = 0;
    cfg
}

fn distance(a: &Simulation, b: &Simulation) -> f64 {
    let d = &a.disc;
    let mut diff = a.state.clone();
    for s in Species::ALL {
        diff.field_mut(s).axpy(-1.0, b.state.field(s));
    }
    for (x, y) in diff.e.values.iter_mut().zip(&b.state.e.values) {
        *x -= y;
    }
    (l2_norm(d, &diff.f_e).powi(2) + l2_norm(d, &diff.f_i).powi(2) + 2.0 * electric_energy(d, &diff.e)).sqrt()
}

#[test]
fn schemes_agree_as_the_step_shrinks() {
    let run_with = |scheme, dt: f64| {
        let mut sim = Simulation::new(&landau(scheme)).unwrap();
        for _ in 0..(0.5 / dt).round() as usize {
            sim.advance(dt).unwrap();
        }
        sim
    };
    let coarse = distance(&run_with(Scheme::Explicit, 0.01), &run_with(Scheme::Implicit, 0.01));
    let fine = distance(&run_with(Scheme::Explicit, 0.005), &run_with(Scheme::Implicit, 0.005));
    assert!(coarse < 1e-3, "{coarse}");
    let ratio = coarse / fine;
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
}

#[test]
fn implicit_conserves_energy_at_large_steps() {
    let mut cfg = landau(Scheme::Implicit);
    // Wide enough that nothing leaves through the velocity ends at this cell width.
    cfg.mesh.v_ce = 12.0;
    cfg.mesh.nv_e = 36;
    cfg.cfl = 10.0;
    cfg.t_end = 5.0;
    cfg.energy_tolerance = Some(1e-9);
    let mut sim = Simulation::new(&cfg).unwrap();
    let summary = run_loop(&mut sim, &[], |_, _| Ok(())).unwrap();
    assert!(summary.max_rel_te < 1e-10, "{}", summary.max_rel_te);
    assert!(summary.max_rel_n_e < 1e-12);
    assert!(summary.max_l2_increase <= 1e-12);
}

#[test]
fn mean_field_stays_zero_with_balancing_current() {
    let mut cfg = preset("s1").unwrap();
    cfg.physics.initial = InitialCondition::Cdiaw { e_tf: 1e-3, n_max: 3 };
    cfg.mesh.length = 30.0;
    cfg.mesh.nx = 16;
    cfg.mesh.nv_e = 32;
    cfg.mesh.nv_i = 32;
    cfg.scheme = Scheme::Implicit;
    cfg.cfl = 5.0;
    cfg.t_end = 10.0;
    let mut sim = Simulation::new(&cfg).unwrap();
    let summary = run_loop(&mut sim, &[], |_, r| {
        assert!(r.gs_iters > 0 || r.step == 0);
        Ok(())
    })
    .unwrap();
    assert!(summary.max_abs_e0 < 1e-12, "{}", summary.max_abs_e0);
    assert!(summary.max_rel_te < 1e-9, "{}", summary.max_rel_te);
}

#[test]
fn restart_reproduces_the_continuous_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = landau(Scheme::Implicit);
    cfg.t_end = 2.0;
    cfg.output.snapshot_times = vec![1.0];
    let full = execute_run(&cfg, &dir.path().join("full")).unwrap();
    let mid = full.records.iter().find(|r| r.t == 1.0).unwrap().step;
    let mut restart = cfg.clone();
    restart.output.snapshot_times.clear();
    restart.initial_snapshot = Some(dir.path().join("full").join(format!("snapshot_{mid:08}.vla1")));
    let resumed = execute_run(&restart, &dir.path().join("resumed")).unwrap();
    let (a, b) = (full.records.last().unwrap(), resumed.records.last().unwrap());
    assert_eq!(a.t, b.t);
    assert_eq!(a.te, b.te);
    assert_eq!(a.l2_e, b.l2_e);
}

#[test]
fn explicit_scheme_blows_up_beyond_its_stability_limit() {
    let mut cfg = landau(Scheme::Explicit);
    cfg.mesh.nx = 32;
    cfg.mesh.nv_e = 32;
    cfg.mesh.nv_i = 32;
    cfg.cfl = 10.0;
    cfg.t_end = 40.0;
    let mut sim = Simulation::new(&cfg).unwrap();
    let err = run_loop(&mut sim, &[], |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::BlowUp { step, .. } if step > 0));
}
