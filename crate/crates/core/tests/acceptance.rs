//! End-to-end acceptance run. Prints one verdict line per criterion.
//!
//! Failing criteria are reported, not asserted, unless `ACCEPTANCE_STRICT`
//! is set in the environment.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use slipflow::approx::{solve_approx_system, ApproxParams, CoupledSystem, FlowState, SolveOptions};
use slipflow::continuation::{hydrostatic_oracle, predicted_bounds, run_ladder, vacuum_window, LadderRun, LadderSpec};
use slipflow::diagnostics::{
    diagnose, flux_gradient_residual, vorticity_check, weak_residual, DiagnosticsOptions, FluxMode, WeakForm,
};
use slipflow::elliptic::{control_volume_laplacian, solve_dirichlet, solve_lame, solve_neumann, LameParams};
use slipflow::geometry::{build_grid, vector_norm, DomainSpec, Grid, NormKind, ScalarField, VectorField};
use slipflow::io::{cmd_ladder, cmd_solve, parse_config_str};
use slipflow::mms::{run_mms, MmsCase, MmsGeometry};
use slipflow::pressure::{CutoffSpec, PressureLaw};

const LAME: LameParams = LameParams {
    mu: 1.0,
    nu: 0.5,
    friction: 1.0,
};

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(id: usize, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            id,
            pass,
            detail: detail.into(),
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn orders(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Gravity problem on the unit square with the cutoff sized from the
/// hydrostatic profile: `m₂ = π⁻¹(4 max|π(ρ)|)`, `n₂` balanced.
fn gravity_params(grid: &Grid, law: PressureLaw, g: f64) -> ApproxParams {
    let oracle = hydrostatic_oracle(&law, g, 1.0, 1.0, 2001).unwrap();
    let g_inf = oracle.rho.iter().map(|r| law.value(*r).abs()).fold(0.0, f64::max);
    let m2 = law.pi_inverse(4.0 * g_inf).unwrap().max(2.5);
    let cutoff = CutoffSpec::balanced(&law, m2, 1.0).unwrap();
    let n = grid.len();
    ApproxParams::new(
        0.1,
        LAME,
        1.0,
        law,
        cutoff,
        VectorField::constant(n, [0.0, -g]),
        VectorField::zeros(n),
    )
    .unwrap()
}

/// Relative L2 distance between the row-averaged density and the oracle.
fn hydrostatic_mismatch(grid: &Grid, rho: &[f64], law: &PressureLaw, g: f64) -> f64 {
    let oracle = hydrostatic_oracle(law, g, 1.0, 1.0, 4001).unwrap();
    let [na, nb] = grid.dims();
    let trap = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let (mut num, mut den) = (0.0, 0.0);
    for b in 0..nb {
        let (mut avg, mut w) = (0.0, 0.0);
        for a in 0..na {
            avg += trap(a, na) * rho[grid.index(a, b)];
            w += trap(a, na);
        }
        let exact = oracle.at(grid.point(grid.index(0, b))[1]);
        num += trap(b, nb) * (avg / w - exact).powi(2);
        den += trap(b, nb) * exact * exact;
    }
    (num / den).sqrt()
}

fn criterion_1() -> Verdict {
    let mut worst_rho: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    let mut worst_vac: f64 = 0.0;
    let mut worst_ledger: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let grid = build_grid(DomainSpec::unit_square(64)).unwrap();
    for law in [PressureLaw::default(), PressureLaw::power(1.0, 2.0, 0.25), PressureLaw::singular(2.0, 1.4, 0.5, 0.1)] {
        let clock = Instant::now();
        let cutoff = CutoffSpec::balanced(&law, 3.0, 1.0).unwrap();
        let p = ApproxParams::zero_forcing(&grid, 0.01, LAME, 1.0, law, cutoff).unwrap();
        let s = solve_approx_system(&grid, &p, &FlowState::initial(&grid, 1.0), &SolveOptions::default()).unwrap();
        let d = diagnose(&grid, &p, &s, &DiagnosticsOptions::default()).unwrap();
        slowest = slowest.max(clock.elapsed().as_secs_f64());
        worst_rho = worst_rho.max(s.rho.iter().fold(0.0_f64, |m, r| m.max((r - 1.0).abs())));
        worst_v = worst_v.max(vector_norm(&grid, &s.v, NormKind::W12).unwrap());
        let (lo, hi) = vacuum_window(&law, d.g_inf).unwrap();
        worst_vac = worst_vac.max(slipflow::continuation::vacuum_measure(&grid, &s.rho, lo, hi).unwrap());
        let e = &d.energy;
        let mut ledger = vec![
            e.shear,
            e.bulk,
            e.friction,
            e.density_diffusion,
            e.relaxation,
            e.work,
            e.imbalance,
            d.rho_div_v,
            d.omega_bc_residual,
            d.flux_gradient.absolute,
            d.weak_regularized.momentum_abs,
            d.weak_regularized.continuity_abs,
            d.weak_approximate.momentum_abs,
            d.weak_approximate.continuity_abs,
            d.bogovskii.div_residual,
        ];
        if let Some(w) = &d.weak_limit {
            ledger.extend([w.momentum_abs, w.continuity_abs]);
        }
        worst_ledger = worst_ledger.max(ledger.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    let pass = worst_rho <= 1e-10 && worst_v <= 1e-9 && worst_vac == 0.0 && worst_ledger <= 1e-9 && slowest < 5.0;
    Verdict::new(
        1,
        pass,
        format!(
            "3 laws at 64x64: max|rho-h| {worst_rho:.1e}, |v|W12 {worst_v:.1e}, vacuum {worst_vac}, largest absolute ledger entry {worst_ledger:.1e}, slowest solve+diagnose {slowest:.2} s"
        ),
    )
}

fn dense_solve(a: DMatrix<f64>, b: Vec<f64>) -> Vec<f64> {
    a.lu().solve(&DVector::from_vec(b)).expect("nonsingular oracle").iter().copied().collect()
}

fn small_grid() -> Grid {
    Grid::build(DomainSpec::rectangle(1.3, 1.0, 6, 6)).unwrap()
}

fn neumann_oracle_gap() -> f64 {
    let g = small_grid();
    let n = g.len();
    let f: Vec<f64> = g.nodal(|x, y| (2.0 * x).sin() + x * y * y);
    let lap = control_volume_laplacian(&g).to_dense();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = -lap[i][j];
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = g.weights()[i];
    }
    let mut b = f.clone();
    b.push(0.7 * g.area());
    let exact = dense_solve(a, b);
    let got = solve_neumann(&g, &ScalarField(f), 0.7).unwrap();
    max_diff(&got, &exact[..n])
}

fn dirichlet_oracle_gap() -> f64 {
    let g = small_grid();
    let n = g.len();
    let f = g.nodal(|x, y| 1.0 + x - y * y);
    let bc = g.nodal(|x, y| (x + 2.0 * y).cos());
    let lap = g.ops().lap.to_dense();
    let mut a = DMatrix::zeros(n, n);
    let mut b = f.clone();
    for &k in g.interior() {
        for j in 0..n {
            a[(k, j)] = -lap[k][j];
        }
    }
    for node in g.boundary() {
        a[(node.index, node.index)] = 1.0;
        b[node.index] = bc[node.index];
    }
    let exact = dense_solve(a, b);
    let got = solve_dirichlet(&g, &ScalarField(f), &ScalarField(bc)).unwrap();
    max_diff(&got, &exact)
}

/// Lamé rows written out from the operator definition: interior
/// `−μΔw − (μ+ν)∇div w`, walls `w·n = 0` and `2μ n·D(w)·τ + f w·τ = t`,
/// corners `w = 0`.
fn lame_oracle_gap() -> f64 {
    let g = small_grid();
    let n = g.len();
    let p = LAME;
    let ops = g.ops();
    let (dx, dy, dxx, dyy, dxy, lap) = (
        ops.dx.to_dense(),
        ops.dy.to_dense(),
        ops.dxx.to_dense(),
        ops.dyy.to_dense(),
        ops.dxy.to_dense(),
        ops.lap.to_dense(),
    );
    let lam = p.mu + p.nu;
    let rhs = VectorField::from_fn(n, |k| {
        let [x, y] = g.point(k);
        [x * y - 0.2, (3.0 * x).sin() * y]
    });
    let tangential = ScalarField(g.nodal(|x, y| 0.3 * x - y));
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = vec![0.0; 2 * n];
    for &k in g.interior() {
        for j in 0..n {
            a[(k, j)] = -p.mu * lap[k][j] - lam * dxx[k][j];
            a[(k, n + j)] = -lam * dxy[k][j];
            a[(n + k, j)] = -lam * dxy[k][j];
            a[(n + k, n + j)] = -p.mu * lap[k][j] - lam * dyy[k][j];
        }
        b[k] = rhs.x[k];
        b[n + k] = rhs.y[k];
    }
    for node in g.boundary() {
        let k = node.index;
        if node.is_corner() {
            a[(k, k)] = 1.0;
            a[(n + k, n + k)] = 1.0;
            continue;
        }
        let [n1, n2] = node.normal;
        let [t1, t2] = node.tangent;
        a[(k, k)] = n1;
        a[(k, n + k)] = n2;
        for j in 0..n {
            a[(n + k, j)] += p.mu * (2.0 * n1 * t1 * dx[k][j] + (n1 * t2 + n2 * t1) * dy[k][j]);
            a[(n + k, n + j)] += p.mu * ((n1 * t2 + n2 * t1) * dx[k][j] + 2.0 * n2 * t2 * dy[k][j]);
        }
        a[(n + k, k)] += p.friction * t1;
        a[(n + k, n + k)] += p.friction * t2;
        b[n + k] = tangential[k];
    }
    let exact = dense_solve(a, b);
    let got = solve_lame(&g, p, &rhs, Some(&tangential)).unwrap();
    max_diff(&got.x, &exact[..n]).max(max_diff(&got.y, &exact[n..]))
}

fn criterion_2() -> Verdict {
    let grids = [32, 64, 128];
    let mut parts = Vec::new();
    let mut pass = true;
    for (geo, need) in [(MmsGeometry::Rectangle, 1.9), (MmsGeometry::Annulus, 1.7)] {
        for case in [MmsCase::Neumann, MmsCase::Dirichlet, MmsCase::Lame] {
            let study = run_mms(case, geo, &grids).unwrap();
            let order = study.min_order_l2();
            pass &= order >= need;
            parts.push(format!("{case:?}/{geo:?} {order:.2} (max-norm {:.2})", study.min_order_linf()));
        }
    }
    let gaps = [neumann_oracle_gap(), dirichlet_oracle_gap(), lame_oracle_gap()];
    pass &= gaps.iter().all(|g| *g <= 1e-10);
    Verdict::new(
        2,
        pass,
        format!(
            "L2 orders {}; 6x6 dense gaps {:.1e} {:.1e} {:.1e}",
            parts.join(", "),
            gaps[0],
            gaps[1],
            gaps[2]
        ),
    )
}

fn criterion_3() -> Verdict {
    let grid = build_grid(DomainSpec::unit_square(32)).unwrap();
    let n = grid.len();
    let law = PressureLaw::default();
    let cutoff = CutoffSpec::balanced(&law, 3.0, 1.0).unwrap();
    let forcings = [
        ("gravity", VectorField::constant(n, [0.0, -5.0]), VectorField::zeros(n)),
        ("push", VectorField::zeros(n), VectorField::constant(n, [0.5, 0.2])),
        (
            "swirl",
            VectorField::zeros(n),
            VectorField::from_fn(n, |k| {
                let [x, y] = grid.point(k);
                [-3.0 * (y - 0.5), 3.0 * (x - 0.5)]
            }),
        ),
    ];
    let spec = LadderSpec {
        eps: vec![0.1, 0.01, 0.001],
        ..LadderSpec::default()
    };
    let mut worst_bound: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut solved = 0;
    let mut failures = Vec::new();
    for (name, fr, force) in forcings {
        let p = ApproxParams::new(0.1, LAME, 1.0, law, cutoff, fr, force).unwrap();
        match run_ladder(&grid, &p, &spec) {
            Ok(run) => {
                if run.report.partial {
                    failures.push(name);
                }
                for s in &run.states {
                    let (lo, hi) = cutoff.support();
                    let excess = (lo - s.rho.min()).max(s.rho.max() - hi).max(0.0);
                    worst_bound = worst_bound.max(excess / cutoff.m2);
                    worst_mean = worst_mean.max((grid.mean(&s.rho) - 1.0).abs());
                    solved += 1;
                }
            }
            Err(_) => failures.push(name),
        }
    }
    let pass = solved == 9 && worst_bound <= 1e-6 && worst_mean <= 1e-8;
    Verdict::new(
        3,
        pass,
        format!(
            "{solved}/9 converged{}; worst bound excess {worst_bound:.1e} m2, worst |mean-h| {worst_mean:.1e}",
            if failures.is_empty() { String::new() } else { format!(" (failed: {failures:?})") }
        ),
    )
}

fn criterion_4() -> Verdict {
    let grid = build_grid(DomainSpec::unit_square(8)).unwrap();
    let n = grid.len();
    let law = PressureLaw::default();
    let p = ApproxParams::new(
        0.1,
        LAME,
        1.0,
        law,
        CutoffSpec::balanced(&law, 3.0, 1.0).unwrap(),
        VectorField::zeros(n),
        VectorField::constant(n, [0.1, 0.0]),
    )
    .unwrap();
    let s = solve_approx_system(&grid, &p, &FlowState::initial(&grid, 1.0), &SolveOptions::default()).unwrap();
    let sys = CoupledSystem::new(&grid, &p);
    let mut x = sys.pack(&FlowState::initial(&grid, 1.0).rho, &VectorField::zeros(n), 0.0);
    let m = x.len();
    for _ in 0..40 {
        let r = sys.residual(&x, 1.0);
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for c in 0..m {
            let h = 1e-7 * (1.0 + x[c].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            let (rp, rm) = (sys.residual(&xp, 1.0), sys.residual(&xm, 1.0));
            for i in 0..m {
                jac[(i, c)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let dx = dense_solve(jac, r);
        x.iter_mut().zip(dx).for_each(|(xi, d)| *xi -= d);
    }
    let gap_rho = max_diff(&s.rho, &x[..n]);
    let gap_v = max_diff(&s.v.x, &x[n..2 * n]).max(max_diff(&s.v.y, &x[2 * n..3 * n]));
    Verdict::new(
        4,
        gap_rho <= 1e-6 && gap_v <= 1e-6,
        format!("8x8, F = (0.1, 0), eps = 0.1: max gap rho {gap_rho:.1e}, v {gap_v:.1e} (|v|max {:.1e})", s.v.max_abs()),
    )
}

struct GravityLadders {
    g: f64,
    law: PressureLaw,
    grids: Vec<Grid>,
    params: Vec<ApproxParams>,
    runs: Vec<LadderRun>,
}

fn gravity_ladders(g: f64, sizes: &[usize]) -> GravityLadders {
    let law = PressureLaw::default();
    let mut out = GravityLadders {
        g,
        law,
        grids: Vec::new(),
        params: Vec::new(),
        runs: Vec::new(),
    };
    for &n in sizes {
        let grid = build_grid(DomainSpec::unit_square(n)).unwrap();
        let p = gravity_params(&grid, law, g);
        let run = run_ladder(&grid, &p, &LadderSpec::default()).unwrap();
        out.grids.push(grid);
        out.params.push(p);
        out.runs.push(run);
    }
    out
}

impl GravityLadders {
    fn finest(&self) -> (&Grid, &ApproxParams, &LadderRun) {
        let k = self.grids.len() - 1;
        (&self.grids[k], &self.params[k], &self.runs[k])
    }
}

fn criterion_5(lad: &GravityLadders) -> Verdict {
    let (grid, p, run) = lad.finest();
    let complete = !run.report.partial;
    let oracle = hydrostatic_oracle(&lad.law, lad.g, 1.0, 1.0, 4001).unwrap();
    let admissible = oracle.min_density() >= 1.2 / p.cutoff.n1;
    let errs: Vec<f64> = lad
        .grids
        .iter()
        .zip(&lad.runs)
        .map(|(gr, r)| hydrostatic_mismatch(gr, &r.states.last().unwrap().rho, &lad.law, lad.g))
        .collect();
    let err = *errs.last().unwrap();
    Verdict::new(
        5,
        complete && admissible && err <= 0.02,
        format!(
            "g = {}, eps = {:e}, {}x{}: rel L2 {err:.2e} (coarser grids {:?}); oracle min rho {:.3} vs 1.2/n1 = {:.4}",
            lad.g,
            run.report.rungs.last().unwrap().eps,
            grid.dims()[0],
            grid.dims()[1],
            errs[..errs.len() - 1].iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            oracle.min_density(),
            1.2 / p.cutoff.n1
        ),
    )
}

fn criterion_6(lad: &GravityLadders) -> Verdict {
    let (_, p, run) = lad.finest();
    let fractions: Vec<f64> = run.report.rungs.iter().map(|r| r.vacuum_fraction).collect();
    let monotone = fractions.windows(2).all(|w| w[1] <= w[0]);
    let last = run.report.rungs.last().unwrap();
    let (lo, _) = predicted_bounds(&p.law, last.g_inf).unwrap();
    let floor_ok = last.rho_min >= 0.5 * lo;
    let pass = !run.report.partial && monotone && *fractions.last().unwrap() <= 0.01 && floor_ok;
    Verdict::new(
        6,
        pass,
        format!(
            "vacuum fractions {:?}; min rho {:.4} vs 0.5 pi^-1(-|G|inf) = {:.4}",
            fractions,
            last.rho_min,
            0.5 * lo
        ),
    )
}

fn criterion_7() -> Verdict {
    let g = 50.0;
    let power = PressureLaw::power(1.0, 2.0, 0.25);
    let contact = hydrostatic_oracle(&power, g, 1.0, 1.0, 2001).unwrap().vacuum_contact;
    let law = PressureLaw::default();
    let grid = build_grid(DomainSpec::unit_square(64)).unwrap();
    let p = gravity_params(&grid, law, g);
    let (ok, detail) = match run_ladder(&grid, &p, &LadderSpec::default()) {
        Ok(run) => {
            let last = run.report.rungs.last().unwrap();
            let ok = !run.report.partial && last.rho_min > 0.0 && last.vacuum_fraction <= 0.05;
            (
                ok,
                format!(
                    "singular law at eps = {:e}: min rho {:.4}, vacuum fraction {}{}",
                    last.eps,
                    last.rho_min,
                    last.vacuum_fraction,
                    if run.report.partial { " (ladder partial)" } else { "" }
                ),
            )
        }
        Err(e) => (false, format!("singular-law ladder failed: {e}")),
    };
    Verdict::new(
        7,
        contact.is_some() && ok,
        format!(
            "g = {g}: power-law oracle vacuum contact at y = {}; {detail}",
            contact.map_or("none".into(), |y| format!("{y:.3}"))
        ),
    )
}

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = (min_of(v), max_of(v));
    if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / lo.abs().max(f64::MIN_POSITIVE)
    }
}

fn criterion_8(lad: &GravityLadders) -> Verdict {
    let (_, _, run) = lad.finest();
    let col = |name: &str| -> Vec<f64> { run.report.series(name).unwrap().into_iter().map(|(_, v)| v).collect() };
    let (v, pp, pm, ge) = (col("v_w12"), col("p_plus_l2"), col("p_minus_l2"), col("sqrt_eps_grad_rho"));
    let ratio = max_of(&ge) / min_of(&ge);
    let pass = run.report.rungs.len() == 5 && spread(&v) < 0.2 && spread(&pp) < 0.2 && spread(&pm) < 0.2 && ratio < 3.0;
    Verdict::new(
        8,
        pass,
        format!(
            "relative spread |v|W12 {:.2} ({:.3}..{:.3}), P+ {:.3}, P- {:.3}; sqrt(eps)|grad rho| max/min {:.1} ({:.3}..{:.3})",
            spread(&v),
            max_of(&v),
            min_of(&v),
            spread(&pp),
            spread(&pm),
            ratio,
            max_of(&ge),
            min_of(&ge)
        ),
    )
}

/// Decrease under refinement; values already at round-off count as converged.
fn refines(values: &[f64], need: f64) -> bool {
    values.iter().all(|v| *v <= 1e-12) || min_of(&orders(values)) >= need
}

fn fmt_seq(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ")
}

fn criterion_9(lad: &GravityLadders) -> Verdict {
    let mut fg = Vec::new();
    let mut bc = Vec::new();
    for ((grid, p), run) in lad.grids.iter().zip(&lad.params).zip(&lad.runs) {
        let s = &run.states[0];
        let pk = p.with_eps(run.report.rungs[0].eps).unwrap();
        fg.push(flux_gradient_residual(grid, &pk, s).unwrap().relative);
        bc.push(vorticity_check(grid, &pk, s).unwrap().bc_residual);
    }
    let law = PressureLaw::default();
    let cutoff = CutoffSpec::balanced(&law, 2.6, 1.0).unwrap();
    let (mut afg, mut abc) = (Vec::new(), Vec::new());
    for n in [16, 32, 64] {
        let grid = build_grid(DomainSpec::annulus(0.5, 1.0, n, 4 * n)).unwrap();
        let force = VectorField::from_fn(grid.len(), |k| {
            let [x, y] = grid.point(k);
            [-5.0 * y, 5.0 * x]
        });
        let p = ApproxParams::new(0.1, LAME, 1.0, law, cutoff, VectorField::constant(grid.len(), [0.0, -5.0]), force).unwrap();
        let s = solve_approx_system(&grid, &p, &FlowState::initial(&grid, 1.0), &SolveOptions::default()).unwrap();
        afg.push(flux_gradient_residual(&grid, &p, &s).unwrap().relative);
        abc.push(vorticity_check(&grid, &p, &s).unwrap().bc_residual);
    }
    let pass = refines(&fg, 0.9) && refines(&bc, 0.9) && refines(&afg, 0.9) && refines(&abc, 0.9);
    Verdict::new(
        9,
        pass,
        format!(
            "eps = 0.1; rectangle 32/64/128: flux-gradient {} (orders {}), wall vorticity {}; annulus 16/32/64: flux-gradient {} (orders {}), wall vorticity {} (orders {})",
            fmt_seq(&fg),
            fmt_seq(&orders(&fg)),
            fmt_seq(&bc),
            fmt_seq(&afg),
            fmt_seq(&orders(&afg)),
            fmt_seq(&abc),
            fmt_seq(&orders(&abc))
        ),
    )
}

fn criterion_10(lad: &GravityLadders) -> Verdict {
    let (grid, p, run) = lad.finest();
    let s = run.states.last().unwrap();
    let pk = p.with_eps(run.report.rungs.last().unwrap().eps).unwrap();
    let form = |f| weak_residual(grid, &pk, s, 32, 7, f).unwrap();
    let reg = form(WeakForm::Limit(FluxMode::Regularized));
    let lim = form(WeakForm::Limit(FluxMode::Limit));
    let apx = form(WeakForm::Approximate);
    let pass = reg.momentum <= 1e-4 && reg.continuity <= 1e-4;
    Verdict::new(
        10,
        pass,
        format!(
            "32 functions, eps = {:e}: limit form with P momentum {:.1e} continuity {:.1e}; with pi {:.1e} {:.1e}; regularized system {:.1e} {:.1e}",
            pk.eps, reg.momentum, reg.continuity, lim.momentum, lim.continuity, apx.momentum, apx.continuity
        ),
    )
}

fn criterion_11(lad: &GravityLadders) -> Verdict {
    let (_, _, run) = lad.finest();
    let changes: Vec<f64> = run.report.rungs.iter().filter_map(|r| r.g_change_l2).collect();
    let tail = &changes[changes.len().saturating_sub(3)..];
    let monotone = tail.len() == 3 && tail.windows(2).all(|w| w[1] <= w[0]);
    let last = run.report.rungs.last().unwrap();
    let pass = monotone && last.rho_div_v_normalized.abs() <= 1e-4;
    Verdict::new(
        11,
        pass,
        format!(
            "|G_k - G_k-1| over the final rungs {}; normalized int rho div v {:.2e} (raw {:.2e})",
            fmt_seq(tail),
            last.rho_div_v_normalized,
            last.rho_div_v
        ),
    )
}

fn criterion_12() -> Verdict {
    let ladder = r#"
seed = 11
[domain]
shape = "rectangle"
width = 1.5
height = 1.0
resolution = [24, 16]
[law]
kind = "singular"
[flow]
h = 1.0
[flow.fr]
preset = "gravity"
g = 8.0
[ladder]
eps = [0.1, 0.03, 0.01]
"#;
    let solve = r#"
[domain]
shape = "annulus"
r_in = 0.5
r_out = 1.0
resolution = [10, 40]
[law]
kind = "singular"
[flow]
h = 1.0
friction = 0.0
[flow.force]
preset = "constant"
value = [0.5, -1.0]
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut compared = 0;
    for (name, text, files) in [
        ("ladder", ladder, vec!["report.json", "fields.txt", "ladder.txt", "fields_rung1.txt", "series/v_w12.txt"]),
        ("solve", solve, vec!["report.json", "fields.txt"]),
    ] {
        let cfg = parse_config_str(text).unwrap();
        let outs = [dir.path().join(format!("{name}_a")), dir.path().join(format!("{name}_b"))];
        for out in &outs {
            let r = if name == "ladder" {
                cmd_ladder(&cfg, Path::new("."), out)
            } else {
                cmd_solve(&cfg, Path::new("."), out)
            };
            identical &= r.map(|r| r.exit_code() == 0).unwrap_or(false);
        }
        for f in files {
            let a = std::fs::read(outs[0].join(f)).unwrap_or_default();
            let b = std::fs::read(outs[1].join(f)).unwrap_or(vec![1]);
            identical &= a == b;
            compared += 1;
        }
    }
    Verdict::new(
        12,
        identical,
        format!("{compared} output files from a ladder and an annulus solve compared byte for byte"),
    )
}

#[test]
fn acceptance() {
    let clock = Instant::now();
    let first = criterion_1();
    let (gravity, mut verdicts) = std::thread::scope(|scope| {
        let ladders = scope.spawn(|| gravity_ladders(20.0, &[32, 64, 128]));
        let contrast = scope.spawn(criterion_7);
        let mut v = vec![first, criterion_2(), criterion_3(), criterion_4(), criterion_12()];
        v.push(contrast.join().unwrap());
        (ladders.join().unwrap(), v)
    });
    verdicts.extend([
        criterion_5(&gravity),
        criterion_6(&gravity),
        criterion_8(&gravity),
        criterion_9(&gravity),
        criterion_10(&gravity),
        criterion_11(&gravity),
    ]);
    verdicts.sort_by_key(|v| v.id);
    let (_, _, run) = gravity.finest();
    println!("gravity ladder, 128x128:\n{}", run.report.to_table());
    for v in &verdicts {
        println!("criterion {:>2}: {}: {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!("{} of {} criteria pass ({:.0} s)", verdicts.len() - failed.len(), verdicts.len(), clock.elapsed().as_secs_f64());
    assert_eq!(verdicts.len(), 12);
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        assert!(failed.is_empty(), "failing criteria: {failed:?}");
    }
}
