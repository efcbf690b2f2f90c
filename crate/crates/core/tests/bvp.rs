mod common;

use common::{mixed_err, rel_err, SLOPES0, SLOPES1, TROESCH10};
use proptest::prelude::*;
use sibvp::bvp::{default_coarse_h, mesh_distance, refine};
use sibvp::{
    ms_build_system, ms_initial_mesh, ms_newton_sweep, ms_solve, simple_shoot, BvpError, MsMesh, MsPoint,
    ProblemDef, ShootingConfig, ZeroN,
};

fn shoot(lambda: f64, h: f64) -> f64 {
    let p = ProblemDef::troesch(lambda);
    simple_shoot(&p, &ShootingConfig::for_problem(&p, h)).unwrap().slope0
}

#[test]
fn simple_shooting_matches_published_slopes_at_coarse_step() {
    for &(lambda, s4, _) in &SLOPES0[..3] {
        let s = shoot(lambda, 1e-4);
        assert!(rel_err(s, s4) < 1e-9, "lambda {lambda}: {s:e} vs {s4:e}");
    }
}

#[test]
fn simple_shooting_residual_is_tiny() {
    let p = ProblemDef::troesch(5.0);
    let r = simple_shoot(&p, &ShootingConfig::for_problem(&p, 1e-3)).unwrap();
    assert!(r.residual.abs() < 1e-12, "{}", r.residual);
    assert_eq!(r.trace.last().x, 1.0);
}

#[test]
fn multiple_shooting_line_takes_one_sweep() {
    let p = ProblemDef::new(ZeroN, 0.0, 1.0, 0.0, 1.0);
    let pts = vec![MsPoint::new(0.2, 0.0, 0.0), MsPoint::new(0.9, 0.6, 0.4), MsPoint::new(0.5, 1.0, 1.0)];
    let sol = ms_solve(&p, 0.05, MsMesh::new(pts, 0.05).unwrap(), 1e-12, 5).unwrap();
    assert!(sol.sweeps <= 2, "{} sweeps", sol.sweeps);
    assert!(sol.mesh.points.iter().all(|q| (q.u - q.x).abs() < 1e-12 && (q.u_prime - 1.0).abs() < 1e-12));
}

fn troesch_ms(lambda: f64, h_bold: f64, coarse: f64) -> sibvp::MsSolution {
    let p = ProblemDef::troesch(lambda);
    let init = ms_initial_mesh(&p, h_bold, coarse).unwrap();
    ms_solve(&p, h_bold, init, 1e-12, 30).unwrap()
}

#[test]
fn multiple_shooting_reproduces_lambda_ten() {
    let sol = troesch_ms(10.0, 1e-4, 1e-3);
    assert!(sol.residual_norm < 1e-12, "{}", sol.residual_norm);
    let (_, up4, _) = SLOPES1.iter().find(|r| r.0 == 10.0).copied().unwrap();
    assert!(rel_err(sol.mesh.slope1(), up4) < 1e-8, "u'(1) = {}", sol.mesh.slope1());
    for &(x, u4, _) in &TROESCH10 {
        let u = sol.mesh.u_at(x).unwrap();
        assert!(rel_err(u, u4) < 1e-6, "u({x}) = {u:e} vs {u4:e}");
    }
}

#[test]
fn converged_mesh_is_a_fixed_point() {
    let p = ProblemDef::troesch(5.0);
    let sol = troesch_ms(5.0, 1e-3, 1e-2);
    let next = ms_newton_sweep(&p, &sol.mesh).unwrap();
    assert!(mesh_distance(&sol.mesh, &next) < 1e-12);
    assert_eq!(next.len(), sol.mesh.len());
}

#[test]
fn multiple_shooting_agrees_with_simple_shooting() {
    let ms = troesch_ms(2.0, 1e-3, 1e-2);
    let ss = shoot(2.0, 1e-3);
    assert!(rel_err(ms.mesh.slope0(), ss) < 1e-5, "{} vs {ss}", ms.mesh.slope0());
}

#[test]
fn mesh_validation_rejects_bad_input() {
    let pts = vec![MsPoint::new(0.5, 0.0, 0.0), MsPoint::new(0.5, 0.5, 1.0)];
    assert!(matches!(MsMesh::new(pts.clone(), 1.5), Err(BvpError::InvalidConfig(_))));
    assert!(matches!(MsMesh::new(pts[..1].to_vec(), 0.1), Err(BvpError::InvalidMesh(_))));
    let back = vec![MsPoint::new(0.5, 0.0, 0.5), MsPoint::new(0.5, 0.5, 0.2)];
    assert!(matches!(MsMesh::new(back, 0.1), Err(BvpError::InvalidMesh(_))));
}

#[test]
fn mesh_csv_has_one_row_per_point() {
    let sol = troesch_ms(2.0, 1e-2, 1e-1);
    let mut buf = Vec::new();
    sol.mesh.write_csv(&mut buf).unwrap();
    assert_eq!(csv::Reader::from_reader(buf.as_slice()).records().count(), sol.mesh.len());
}

/// Central-difference check of every banded Jacobian entry.
fn jacobian_mismatch(lambda: f64, h_bold: f64) -> f64 {
    let p = ProblemDef::troesch(lambda);
    let init = ms_initial_mesh(&p, h_bold, default_coarse_h(h_bold)).unwrap();
    // Move off the converged mesh so that residuals are not all zero.
    let mesh = ms_newton_sweep(&p, &MsMesh::new(init.points, h_bold).unwrap()).unwrap();
    let sys = ms_build_system(&p, &mesh).unwrap();
    let n = sys.len();
    let mut worst: f64 = 0.0;
    for col in 0..n {
        let delta = 1e-6 * sys.unknowns[col].abs().max(1e-3);
        let at = |d: f64| {
            let mut z = sys.unknowns.clone();
            z[col] += d;
            sys.residual_at(&p, &z).unwrap()
        };
        let (rp, rm) = (at(delta), at(-delta));
        for row in 0..n {
            let fd = (rp[row] - rm[row]) / (2.0 * delta);
            let an = sys.jacobian.get(row, col);
            if !sys.jacobian.in_band(row, col) {
                assert_eq!(fd, 0.0, "entry ({row}, {col}) outside the band");
                continue;
            }
            worst = worst.max(mixed_err(an, fd, 1.0));
        }
    }
    worst
}

#[test]
fn jacobian_matches_finite_differences() {
    let e = jacobian_mismatch(5.0, 0.02);
    assert!(e < 1e-6, "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jacobian_columns_match_on_random_problems(lambda in 0.5..10.0f64, h_bold in 0.01..0.1f64) {
        let e = jacobian_mismatch(lambda, h_bold);
        prop_assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn refine_bounds_every_interval_and_is_idempotent(
        steps in prop::collection::vec((0.01..0.3f64, 0.0..0.3f64, 0.1..3.0f64), 2..12),
        h_bold in 0.02..0.2f64,
    ) {
        let (mut x, mut u) = (0.0, 0.0);
        let mut pts = vec![MsPoint::new(0.5, 0.0, 0.0)];
        for (dx, du, up) in steps {
            x += dx;
            u += du;
            pts.push(MsPoint::new(up, u, x));
        }
        let r = refine(&pts, h_bold);
        let slack = 1.0 + 1e-9;
        prop_assert!(r.windows(2).all(|w| (w[1].x - w[0].x).abs().max((w[1].u - w[0].u).abs()) <= h_bold * slack));
        prop_assert_eq!(refine(&r, h_bold), r);
    }
}
