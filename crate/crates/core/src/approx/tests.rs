use nalgebra::{DMatrix, DVector};

use super::*;
use crate::geometry::{build_grid, DomainSpec};

fn lame() -> LameParams {
    LameParams {
        mu: 1.0,
        nu: 0.5,
        friction: 1.0,
    }
}

fn cutoff() -> CutoffSpec {
    CutoffSpec::from_outer(11.0, 4.0, 1.0)
}

fn params(grid: &Grid, eps: f64, fr: [f64; 2], force: [f64; 2]) -> ApproxParams {
    let n = grid.len();
    ApproxParams::new(
        eps,
        lame(),
        1.0,
        PressureLaw::default(),
        cutoff(),
        VectorField::constant(n, fr),
        VectorField::constant(n, force),
    )
    .unwrap()
}

fn swirl(grid: &Grid, amp: f64) -> VectorField {
    VectorField::from_fn(grid.len(), |k| {
        let [x, y] = grid.point(k);
        let s = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
        [amp * s * (y - 0.5), -amp * s * (x - 0.3)]
    })
}

/// Dense Newton with a central-difference Jacobian.
fn dense_newton(f: impl Fn(&[f64]) -> Vec<f64>, mut x: Vec<f64>) -> Vec<f64> {
    let m = x.len();
    for _ in 0..30 {
        let r = f(&x);
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for c in 0..m {
            let h = 1e-7 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let (rp, rm) = (f(&xp), f(&xm));
            for i in 0..m {
                jac[(i, c)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let dx = jac.lu().solve(&DVector::from_vec(r)).expect("nonsingular");
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi -= d;
        }
    }
    x
}

#[test]
fn density_map_is_constant_for_zero_velocity() {
    let g = build_grid(DomainSpec::unit_square(10)).unwrap();
    let p = params(&g, 0.1, [0.0, 0.0], [0.0, 0.0]);
    let init = ScalarField(g.nodal(|x, y| 1.0 + 0.3 * x * y));
    let s = apply_s(&g, &p, &VectorField::zeros(g.len()), &init, 1e-10).unwrap();
    assert!(s.rho.iter().all(|r| (r - 1.0).abs() < 1e-12));
}

#[test]
fn density_map_matches_dense_newton() {
    let g = build_grid(DomainSpec::unit_square(8)).unwrap();
    let p = params(&g, 0.1, [0.0, 0.0], [0.0, 0.0]);
    let v = swirl(&g, 0.4);
    let init = ScalarField::constant(g.len(), 1.0);
    let s = apply_s(&g, &p, &v, &init, 1e-12).unwrap();
    assert!((g.mean(&s.rho) - 1.0).abs() < 1e-12);
    let sys = CoupledSystem::new(&g, &p);
    let oracle = dense_newton(|r| sys.continuity(r, &v.x, &v.y), init.to_vec());
    let err = s.rho.iter().zip(&oracle).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-8, "{err:e}");
    assert!(s.rho.max() - s.rho.min() > 1e-3);
}

#[test]
fn momentum_rhs_examples() {
    let g = build_grid(DomainSpec::unit_square(9)).unwrap();
    let n = g.len();
    let p = params(&g, 0.1, [0.0, 0.0], [1.0, 0.0]);
    let rho = ScalarField::constant(n, 1.0);
    let zero = VectorField::zeros(n);
    assert_eq!(momentum_rhs(&g, &p, &rho, &swirl(&g, 1.0), 0.0).unwrap().max_abs(), 0.0);
    let f = momentum_rhs(&g, &p, &rho, &zero, 1.0).unwrap();
    assert!(f.x.iter().all(|v| (v - 1.0).abs() < 1e-14));
    assert!(f.y.iter().all(|v| v.abs() < 1e-14));
    let p0 = params(&g, 0.1, [0.0, 0.0], [0.0, 0.0]);
    assert!(momentum_rhs(&g, &p0, &rho, &zero, 1.0).unwrap().max_abs() < 1e-14);
}

#[test]
fn zero_forcing_returns_the_equilibrium() {
    for spec in [DomainSpec::unit_square(12), DomainSpec::annulus(0.5, 1.0, 9, 24)] {
        let g = build_grid(spec).unwrap();
        let mut p = params(&g, 0.05, [0.0, 0.0], [0.0, 0.0]);
        p.lame.friction = 0.0;
        let s = solve_approx_system(&g, &p, &FlowState::initial(&g, 1.0), &SolveOptions::default()).unwrap();
        assert!(s.converged && s.within_bounds);
        assert!(s.rho.iter().all(|r| (r - 1.0).abs() < 1e-10));
        assert!(vector_norm(&g, &s.v, NormKind::W12).unwrap() < 1e-9);
        let r = residuals(&g, &p, &s).unwrap();
        assert!(r.momentum < 1e-12 && r.continuity < 1e-12);
    }
}

#[test]
fn newton_and_picard_agree() {
    let g = build_grid(DomainSpec::unit_square(8)).unwrap();
    let p = params(&g, 0.1, [0.0, 0.0], [0.1, 0.0]);
    let init = FlowState::initial(&g, 1.0);
    let a = solve_approx_system(&g, &p, &init, &SolveOptions::default()).unwrap();
    let opts = SolveOptions {
        method: Method::Picard,
        homotopy_steps: 1,
        relax: 0.05,
        max_iterations: 5000,
        ..SolveOptions::default()
    };
    let b = solve_approx_system(&g, &p, &init, &opts).unwrap();
    let dv = a.v.x.zip_map(&b.v.x, |x, y| x - y).max_abs().max(a.v.y.zip_map(&b.v.y, |x, y| x - y).max_abs());
    let dr = a.rho.zip_map(&b.rho, |x, y| x - y).max_abs();
    assert!(dv < 1e-7 && dr < 1e-7, "{dv:e} {dr:e}");
    assert!(a.v.max_abs() > 1e-4);
    assert!((g.mean(&a.rho) - 1.0).abs() < 1e-12);
}

#[test]
fn mirror_symmetric_forcing_gives_mirror_symmetric_state() {
    let g = build_grid(DomainSpec::unit_square(12)).unwrap();
    let n = g.len();
    let fr = VectorField::from_fn(n, |k| {
        let [x, _] = g.point(k);
        [0.0, -2.0 - (std::f64::consts::PI * x).cos().powi(2)]
    });
    let p = ApproxParams::new(0.05, lame(), 1.0, PressureLaw::default(), cutoff(), fr, VectorField::zeros(n)).unwrap();
    let s = solve_approx_system(&g, &p, &FlowState::initial(&g, 1.0), &SolveOptions::default()).unwrap();
    let [na, nb] = g.dims();
    let mut worst: f64 = 0.0;
    for b in 0..nb {
        for a in 0..na {
            let (k, m) = (g.index(a, b), g.index(na - 1 - a, b));
            worst = worst
                .max((s.rho[k] - s.rho[m]).abs())
                .max((s.v.x[k] + s.v.x[m]).abs())
                .max((s.v.y[k] - s.v.y[m]).abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
    assert!(s.v.max_abs() > 1e-6);
}

#[test]
fn perturbing_density_raises_the_continuity_residual() {
    let g = build_grid(DomainSpec::unit_square(10)).unwrap();
    let p = params(&g, 0.1, [0.0, -1.0], [0.0, 0.0]);
    let mut s = solve_approx_system(&g, &p, &FlowState::initial(&g, 1.0), &SolveOptions::default()).unwrap();
    let before = residuals(&g, &p, &s).unwrap();
    assert!(before.continuity_relative() < 1e-6 && before.momentum_relative() < 1e-6);
    let k = g.index(4, 5);
    s.rho[k] += 0.1;
    let after = residuals(&g, &p, &s).unwrap();
    assert!(after.continuity > before.continuity + 1e-3);
}

#[test]
fn eps_must_be_positive() {
    let g = build_grid(DomainSpec::unit_square(8)).unwrap();
    let p = params(&g, 0.1, [0.0, 0.0], [0.0, 0.0]);
    assert!(matches!(p.with_eps(0.0), Err(SolverError::Config(_))));
    assert!(matches!(p.with_eps(-1.0), Err(SolverError::Config(_))));
}

