//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line (visible with `cargo test -- --nocapture`).

use helab::bundle::{
    HermitianState, degree_from_k, make_background, mean_curvature_k, twist_flat,
};
use helab::calculus::{
    FramePoint, pointwise_identity_check, simpson_psi, sum_rule_check, trace_identity_check,
};
use helab::config::parse_config;
use helab::matrix::{C64, SmallMat};
use helab::scenario::{build_problem, delta_oracle};
use helab::solver::{
    SolverConfig, check_lemma21, check_lemma22, check_prop31, continuity_sweep, donaldson_flow,
    solve_at_eps,
};
use helab::stability::{
    DestabilizerVerdict, FinalVerdict, induced_bundle, invariant_section_kernel,
    semistable_verdict,
};
use helab::torus::{WeightSpec, derivative, integrate, make_grid, p_operator, solve_p, Dir};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const I: C64 = C64::new(0.0, 1.0);

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

fn rand_mat(rng: &mut ChaCha8Rng, n: usize) -> SmallMat {
    SmallMat::from_fn(n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

#[test]
fn criterion_1_identity_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Removable singularity of the integrated kernel.
    let t: f64 = 1e-9;
    let series = 1.0 + t / 2.0 + t * t / 6.0;
    let psi_dev =
        (simpson_psi(0.5, 0.5) - 1.0).abs() + (simpson_psi(0.0, 1e-9) - series).abs();

    // Sum rule over 10^3 random spectra.
    let mut sum_dev: f64 = 0.0;
    for _ in 0..1000 {
        let r = rng.gen_range(2..=5);
        let mut mus: Vec<f64> = (0..r).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        mus.sort_by(f64::total_cmp);
        if mus.windows(2).any(|w| w[1] - w[0] < 1e-3) {
            continue;
        }
        let beta = rng.gen_range(0..r);
        let gamma = loop {
            let g = rng.gen_range(0..r);
            if g != beta {
                break g;
            }
        };
        let lhs = sum_rule_check(&mus, beta, gamma).unwrap();
        let rhs = 1.0 / (mus[beta] - mus[gamma]).abs();
        sum_dev = sum_dev.max((lhs - rhs).abs() / rhs);
    }

    // Pointwise eigenframe identity over 10^4 synthetic frames.
    let mut frame_dev: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=4);
        let fp = FramePoint {
            lambdas: (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
            dlambda: (0..n)
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect(),
            theta: rand_mat(&mut rng, n),
            phi: rand_mat(&mut rng, n),
        };
        let (lhs, rhs) = pointwise_identity_check(&fp);
        frame_dev = frame_dev.max((lhs - rhs).abs());
    }

    // Trace identity over 10^3 random (s, ds).
    let mut trace_dev: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=4);
        let s = rand_mat(&mut rng, n).herm_part();
        let ds = rand_mat(&mut rng, n).herm_part();
        trace_dev = trace_dev.max(trace_identity_check(&s, &ds).unwrap().residual);
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "1 identity suite",
        psi_dev <= 1e-13 && sum_dev <= 1e-12 && frame_dev <= 1e-12 && trace_dev <= 1e-10
            && elapsed < 10.0,
        &format!(
            "psi {psi_dev:.2e}, sum rule {sum_dev:.2e}, frames {frame_dev:.2e}, \
             trace {trace_dev:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_2_geometry_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (g, m) = make_grid(32, C64::new(0.3, 1.2), &WeightSpec::CosX { amp: 0.25 }).unwrap();

    // Degree quantization across 20 random metric states per flux pattern.
    let mut deg_dev: f64 = 0.0;
    for flux in [vec![0i64], vec![1], vec![1, -1], vec![2, 0]] {
        let rank = flux.len();
        let expect: i64 = flux.iter().sum();
        let b = make_background(&g, rank, &flux).unwrap();
        for _ in 0..20 {
            let s: Vec<SmallMat> = (0..g.nsites())
                .map(|_| rand_mat(&mut rng, rank).herm_part().scale_re(0.3))
                .collect();
            let st = HermitianState::from_s(s).unwrap();
            let k = mean_curvature_k(&b, &st, &g, &m, None).unwrap();
            deg_dev = deg_dev.max((degree_from_k(&k, &g, &m) - expect as f64).abs());
        }
    }

    // Summation by parts: integral of a spectral derivative vanishes, and
    // the operator P integrates to zero against omega.
    let field: Vec<C64> = (0..g.nsites())
        .map(|s| {
            let (x, y) = g.xy(s);
            C64::new(
                (2.0 * std::f64::consts::PI * x).sin() + 0.3 * (4.0 * std::f64::consts::PI * y).cos(),
                (2.0 * std::f64::consts::PI * (x + y)).cos(),
            )
        })
        .collect();
    let d = derivative(&field, Dir::PartialBar, &g);
    let sbp = {
        let mut acc = C64::new(0.0, 0.0);
        for v in &d {
            acc += *v;
        }
        (acc * C64::new(g.cell_area, 0.0)).norm()
    };
    let p = p_operator(&field, &g, &m);
    let p_mean = integrate(&p, &g, &m).norm();

    // Poisson inversion: P(solve_p(rhs)) = rhs for zero-mean rhs.
    let mean = integrate(&field, &g, &m);
    let rhs: Vec<C64> = field.iter().map(|v| v - mean / C64::new(m.volume, 0.0)).collect();
    let sol = solve_p(&rhs, &g, &m).unwrap();
    let back = p_operator(&sol, &g, &m);
    let inv_dev = back
        .iter()
        .zip(rhs.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "2 geometry suite",
        deg_dev <= 1e-8 && sbp <= 1e-12 && p_mean <= 1e-12 && inv_dev <= 1e-12 && elapsed < 10.0,
        &format!(
            "degree {deg_dev:.2e}, parts {sbp:.2e}, P mean {p_mean:.2e}, \
             inversion {inv_dev:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_3_solver_suite() {
    let start = Instant::now();
    let mut all_ok = true;
    let mut detail = String::new();

    // Every converged solve in the scenario library: residual, trace and
    // determinant invariants, max-principle bound. Full sweeps at N = 32,
    // 10 steps; each sweep must finish inside 5 minutes.
    let mut worst_sweep = 0.0f64;
    for id in ["E1", "E2", "E3", "E4"] {
        let c = parse_config(&format!("scenario = \"{id}\"")).unwrap();
        let p = build_problem(&c).unwrap();
        let cfg = SolverConfig {
            eps_schedule: c.eps_schedule(),
            ..SolverConfig::default()
        };
        let t0 = Instant::now();
        let (rep, states) = continuity_sweep(&p, &cfg).unwrap();
        worst_sweep = worst_sweep.max(t0.elapsed().as_secs_f64());
        for (row, st) in rep.rows.iter().zip(states.iter()) {
            let r = helab::solver::SolveResult {
                state: st.clone(),
                residual: 0.0,
                iterations: 0,
                m: row.m,
                l2_log_f: row.l2_s,
            };
            let l21 = check_lemma21(&p, &r, row.eps).unwrap();
            let l22 = check_lemma22(&p, &r, row.eps);
            let ok = l21.max_abs_tr_s <= 1e-8
                && l21.max_det_err <= 1e-8
                && l22.eps_m <= p.max_phi_h0 + 1e-6;
            if !ok {
                all_ok = false;
                detail.push_str(&format!("{id} eps {:.3e} invariants broken; ", row.eps));
            }
        }
    }

    // Integral identity residual decreasing under refinement 16 -> 32 -> 64
    // on a nonconstant-solution variant (cosine weight over the nilpotent
    // Higgs scenario).
    let mut resids = Vec::new();
    for n in [16usize, 32, 64] {
        let c = parse_config(&format!(
            "scenario = \"E2\"\nn = {n}\n[weight]\nkind = \"cosx\"\namplitude = 0.3"
        ))
        .unwrap();
        let p = build_problem(&c).unwrap();
        let init = HermitianState::identity(2, p.grid.nsites());
        let r = solve_at_eps(&p, 0.5, &init, &SolverConfig::default()).unwrap();
        resids.push(check_prop31(&p, &r, 0.5).unwrap().residual.abs());
    }
    let refining = resids[1] <= resids[0] / 2.0 && resids[2] <= resids[1] / 2.0;
    if !refining {
        all_ok = false;
    }
    detail.push_str(&format!(
        "prop31 residuals {:.2e} {:.2e} {:.2e}",
        resids[0], resids[1], resids[2]
    ));

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "3 solver suite",
        all_ok && worst_sweep < 300.0,
        &format!("{detail}, slowest sweep {worst_sweep:.1}s, total {elapsed:.1}s"),
    );
}

#[test]
fn criterion_4_equivalence_behavior() {
    // E2: eps m decays by >= 10x over the schedule, verdict semistable.
    let c = parse_config("scenario = \"E2\"").unwrap();
    let p = build_problem(&c).unwrap();
    let cfg = SolverConfig {
        eps_schedule: c.eps_schedule(),
        ..SolverConfig::default()
    };
    let (rep, states) = continuity_sweep(&p, &cfg).unwrap();
    let first = rep.rows.first().unwrap().eps_m;
    let last = rep.rows.last().unwrap().eps_m;
    let decay = first / last;
    let tail = &states[states.len() - 3..];
    let v2 = semistable_verdict(&p, &rep, tail, None).unwrap();
    let e2_ok = decay >= 10.0 && v2.verdict == FinalVerdict::Semistable;

    // E3: max|Phi| >= the Chern-Weil floor at every eps, verdict unstable,
    // destabilizer with slope 1 and nu < 0.
    let c = parse_config("scenario = \"E3\"").unwrap();
    let p = build_problem(&c).unwrap();
    let oracle = delta_oracle(&c, &p.metric).unwrap();
    let cfg = SolverConfig {
        eps_schedule: c.eps_schedule(),
        ..SolverConfig::default()
    };
    let (rep, states) = continuity_sweep(&p, &cfg).unwrap();
    let floor_ok = rep.rows.iter().all(|r| r.max_phi >= oracle * (1.0 - 1e-9));
    let tail = &states[states.len() - 3..];
    let v3 = semistable_verdict(&p, &rep, tail, Some(oracle)).unwrap();
    let dest = v3.destabilizer.as_ref().expect("destabilizer report");
    let block = &dest.blocks[0];
    let e3_ok = floor_ok
        && v3.verdict == FinalVerdict::Unstable
        && matches!(dest.verdict, DestabilizerVerdict::Destabilized { .. })
        && (block.slope - 1.0).abs() < 1e-6
        && dest.nu_degree_form < 0.0
        && dest.reconstruction_residual <= 1e-8
        && block.residuals.idempotent <= 1e-6
        && block.residuals.hermitian <= 1e-6
        && block.residuals.holomorphy <= 1e-6
        && block.residuals.invariance <= 1e-6;

    report(
        "4 equivalence behavior",
        e2_ok && e3_ok,
        &format!(
            "E2 decay {decay:.1}x verdict {:?}; E3 floor {oracle:.3e} verdict {:?} \
             slope {:.6} nu {:.3e}",
            v2.verdict, v3.verdict, block.slope, dest.nu_degree_form
        ),
    );
}

#[test]
fn criterion_5_vanishing_theorem() {
    let (g, _m) = make_grid(16, I, &WeightSpec::Uniform).unwrap();

    // Negative line bundle: empty kernel.
    let neg = make_background(&g, 1, &[-1]).unwrap();
    let k_neg = invariant_section_kernel(&neg, &g).unwrap();

    // Degree -2 induced bundle of the split scenario, at a generic flat
    // twist of the determinant line: empty kernel.
    let e3 = make_background(&g, 2, &[1, -1]).unwrap();
    let induced = twist_flat(&induced_bundle(&e3, &g, 1, 1).unwrap(), &g, 2.3, 0.7);
    let k_ind = invariant_section_kernel(&induced, &g).unwrap();

    // Degree-0 control: the canonical inclusion survives as a section.
    let mut e2 = make_background(&g, 2, &[0, 0]).unwrap();
    e2.phi_field = vec![SmallMat::unit(2, 0, 1); g.nsites()];
    let control = induced_bundle(&e2, &g, 1, 0).unwrap();
    let k_ctl = invariant_section_kernel(&control, &g).unwrap();

    let pass = k_neg.dimension == 0
        && k_ind.dimension == 0
        && k_ctl.dimension >= 1
        && !k_ctl.ambiguous
        && k_ctl.gap_factor >= 1e3;
    report(
        "5 vanishing theorem",
        pass,
        &format!(
            "flux -1 dim {} (sigma_min {:.2e}), induced dim {} (sigma_min {:.2e}), \
             control dim {} gap {:.1e}",
            k_neg.dimension,
            k_neg.smallest_singular,
            k_ind.dimension,
            k_ind.smallest_singular,
            k_ctl.dimension,
            k_ctl.gap_factor
        ),
    );
}

#[test]
fn criterion_6_cross_solver_agreement() {
    let c = parse_config("scenario = \"E2\"\nn = 16").unwrap();
    let p = build_problem(&c).unwrap();
    let cfg = SolverConfig::default();
    let init = HermitianState::identity(2, p.grid.nsites());
    let newton = solve_at_eps(&p, 0.5, &init, &cfg).unwrap();
    let flow = donaldson_flow(&p, 0.5, &cfg, 100_000).unwrap();
    let dev = newton
        .state
        .s_field
        .iter()
        .zip(flow.state.s_field.iter())
        .map(|(a, b)| a.sub(b).max_abs())
        .fold(0.0, f64::max);
    report(
        "6 cross-solver agreement",
        dev <= 1e-6,
        &format!("Newton-flow deviation {dev:.2e} at eps 0.5"),
    );
}

#[test]
fn criterion_7_determinism() {
    let text = "scenario = \"E2\"\nn = 16\neps_steps = 4\neps_end = 0.05\nseed = 9";
    let run = |threads: usize| {
        let mut c = parse_config(text).unwrap();
        c.threads = threads;
        let p = build_problem(&c).unwrap();
        let cfg = SolverConfig {
            eps_schedule: c.eps_schedule(),
            ..SolverConfig::default()
        };
        let (rep, _) = continuity_sweep(&p, &cfg).unwrap();
        helab::report::sweep_csv(&rep)
    };
    let a = run(1);
    let b = run(1);
    let c = run(8);
    report(
        "7 determinism",
        a.as_bytes() == b.as_bytes() && a.as_bytes() == c.as_bytes(),
        &format!("{} CSV bytes identical across reruns and thread counts", a.len()),
    );
}
