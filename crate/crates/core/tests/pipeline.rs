use std::f64::consts::PI;

use vortex_core::functional::gradient;
use vortex_core::singular::build_sigma;
use vortex_core::solvers::{comparison_diagnostic, minimize_constrained};
use vortex_core::subsolution::build_subsolution;
use vortex_core::system::certify;
use vortex_core::{Field, Grid, Problem, SolveOptions, VortexModel, VortexSet};

fn centred(model: VortexModel) -> Problem {
    let l = 2.0 * PI;
    let g = Grid::new(128, l).unwrap();
    let bg = build_sigma(&g, &VortexSet::single(l / 2.0, l / 2.0)).unwrap();
    Problem::new(model, bg, 40.0, 1e-3).unwrap()
}

#[test]
fn local_minimum_sits_above_the_subsolution_and_solves_the_system() {
    let p = centred(VortexModel::u1());
    let sub = build_subsolution(&p, 2.0 * PI / 8.0).unwrap();
    assert!(sub.verified);
    let opts = SolveOptions::default();
    let min = minimize_constrained(&p, &sub.u_sub, &opts).unwrap();
    assert!(min.converged, "{}", min.grad_norm);
    assert!(min.min_gap.unwrap() > 0.0);
    assert!(gradient(&p, &min.u).unwrap().l2_norm() <= opts.tolerance(&p));

    let cmp = comparison_diagnostic(&p, &min.u, &sub.u_sub, 10.0 * opts.tolerance(&p)).unwrap();
    assert!(cmp.passes(), "{}", cmp.inequality_residual);

    let pair = certify(&p, &min.u).unwrap();
    assert!(pair.residual_b_scaled.l2_norm() <= 1e-6 * p.scale());
    assert!(pair.flux_error(&p) <= 1e-6);
}

#[test]
fn fields_survive_a_file_round_trip() {
    let p = centred(VortexModel::cp1(0.0).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigma.vfd");
    p.background().sigma.save_vfd(&path).unwrap();
    let back = Field::load_vfd(&path).unwrap();
    assert_eq!(back.values(), p.background().sigma.values());
}
