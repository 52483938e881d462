//! Continuity-method solver for the perturbed equation
//!
//!   L_eps(f) = K_H - lambda Id + eps log f = 0,   H = H_0 f,  f = exp(s),
//!
//! solved per eps by a damped Jacobian-free Newton iteration on s and swept
//! along a decreasing eps schedule with warm starts. Also carries the
//! conformal normalization of the background (tr Phi(H_0) = 0 pointwise) and
//! the runtime checks: the traced scalar equation (det f = 1), the maximum
//! principle bound eps max|s| <= max|Phi(H_0)|, and the integral identity
//! coupling Phi(H_0), the Psi-pairing of D''s, and eps ||s||^2.

use crate::bundle::{
    EndField, HermitianState, HiggsBundle, adjoint_phi, d_double_prime, dbar_e,
    degree_from_k, l2_end_norm, l2_form_norm_sq, max_site_norm, mean_curvature_k, partial_e0,
    validate_higgs,
};
use crate::calculus::{psi_quadratic, simpson_psi};
use crate::error::{HelabError, Result};
use crate::matrix::{C64, SmallMat, eig_herm};
use crate::torus::{ConformalMetric, ScalarField, TorusGrid, fft2, ifft2, integrate, p_operator, solve_p};

/// A fully prepared problem: bundle + geometry + the conformal curvature
/// correction that makes tr Phi(H_0) = 0 pointwise.
#[derive(Clone, Debug)]
pub struct Problem {
    pub bundle: HiggsBundle,
    pub grid: TorusGrid,
    pub metric: ConformalMetric,
    /// Scalar curvature shift added as shift * Id to K; equals
    /// -tr(Phi_raw)/rank, realized by a conformal change of H_0.
    pub shift: Vec<f64>,
    /// Conformal potential: P(conformal_potential) = shift.
    pub conformal_potential: Vec<f64>,
    pub lambda: f64,
    /// max_X |Phi(H_0)| (Frobenius, H_0 frame) after normalization.
    pub max_phi_h0: f64,
}

/// Conformal normalization of the background metric: solve
/// P(v) = -tr(K_raw - lambda Id)/rank, which is solvable because the right
/// side integrates to zero by the degree identity.
pub fn normalize_background(
    bundle: &HiggsBundle,
    grid: &TorusGrid,
    metric: &ConformalMetric,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let id = HermitianState::identity(bundle.rank, grid.nsites());
    let k_raw = mean_curvature_k(bundle, &id, grid, metric, None)?;
    let lambda = bundle.einstein_constant(metric);
    let r = bundle.rank as f64;
    let rhs: ScalarField = k_raw
        .iter()
        .map(|k| C64::new(-(k.trace().re - r * lambda) / r, 0.0))
        .collect();
    let v = solve_p(&rhs, grid, metric).map_err(|e| {
        HelabError::Solvability(format!(
            "conformal normalization failed; degree/volume data inconsistent: {e}"
        ))
    })?;
    Ok((
        v.iter().map(|z| z.re).collect(),
        rhs.iter().map(|z| z.re).collect(),
    ))
}

impl Problem {
    pub fn new(bundle: HiggsBundle, grid: TorusGrid, metric: ConformalMetric) -> Result<Self> {
        validate_higgs(&bundle, &grid)?;
        let (conformal_potential, shift) = normalize_background(&bundle, &grid, &metric)?;
        let lambda = bundle.einstein_constant(&metric);
        let mut p = Problem {
            bundle,
            grid,
            metric,
            shift,
            conformal_potential,
            lambda,
            max_phi_h0: 0.0,
        };
        let id = HermitianState::identity(p.bundle.rank, p.grid.nsites());
        let phi0 = p.phi_field_of(&id)?;
        // Normalization check: the trace part must now vanish pointwise.
        let max_tr = phi0
            .iter()
            .map(|m| m.trace().norm())
            .fold(0.0, f64::max);
        if max_tr > 1e-8 {
            return Err(HelabError::Solvability(format!(
                "background not normalized: max |tr Phi(H_0)| = {max_tr:.3e}"
            )));
        }
        p.max_phi_h0 = max_site_norm(&phi0);
        Ok(p)
    }

    /// Phi(H, phi) = K_H - lambda Id at a given state.
    pub fn phi_field_of(&self, state: &HermitianState) -> Result<EndField> {
        let k = mean_curvature_k(&self.bundle, state, &self.grid, &self.metric, Some(&self.shift))?;
        Ok(k
            .iter()
            .map(|m| m.sub(&SmallMat::identity(self.bundle.rank).scale_re(self.lambda)))
            .collect())
    }

    /// max_X |Phi(H, phi)|_H.
    pub fn max_phi_h(&self, state: &HermitianState) -> Result<f64> {
        let phi = self.phi_field_of(state)?;
        Ok((0..self.grid.nsites())
            .map(|s| state.h_norm_at(s, &phi[s]))
            .fold(0.0, f64::max))
    }
}

/// L_eps(f) = Phi(H) + eps s, conjugated to the Hermitian gauge
/// f^{1/2} L f^{-1/2} and Hermitian-projected. Zero iff L_eps(f) = 0.
pub fn residual_l_eps(problem: &Problem, state: &HermitianState, eps: f64) -> Result<EndField> {
    let phi = problem.phi_field_of(state)?;
    Ok((0..problem.grid.nsites())
        .map(|s| {
            let l = phi[s].add(&state.s_field[s].scale_re(eps));
            state.f_half[s]
                .mul(&l)
                .mul(&state.f_inv_half[s])
                .herm_part()
        })
        .collect())
}

/// Independent assembly of L_eps (before the Hermitian-gauge conjugation)
/// following the rewritten form: Phi(H_0) + sqrt(-1) Lambda dbar_E(f^{-1}
/// partial_{H_0,E} f) + sqrt(-1) Lambda [phi, phi^{*H} - phi^{*H_0}] + eps s.
pub fn residual_l_eps_via_h0(
    problem: &Problem,
    state: &HermitianState,
    eps: f64,
) -> Result<EndField> {
    let b = &problem.bundle;
    let g = &problem.grid;
    let id = HermitianState::identity(b.rank, g.nsites());
    let phi0 = problem.phi_field_of(&id)?;
    let dpf = partial_e0(&state.f_field, b, g);
    let gfield: EndField = (0..g.nsites())
        .map(|s| state.f_inv[s].mul(&dpf[s]))
        .collect();
    let dbg = dbar_e(&gfield, b, g);
    let psi_h = adjoint_phi(b, state);
    let psi_0 = adjoint_phi(b, &id);
    // Same constraint-compatible trace pin as the curvature assembly.
    let tr_s: ScalarField = state.s_field.iter().map(SmallMat::trace).collect();
    let p_tr = p_operator(&tr_s, g, &problem.metric);
    let rk = b.rank as f64;
    Ok((0..g.nsites())
        .map(|s| {
            let w = problem.metric.weight[s];
            let raw = dbg[s].scale_re(-2.0 / w);
            let corr = (p_tr[s].re - raw.trace().re) / rk;
            let metric_term = raw.add(&SmallMat::identity(b.rank).scale_re(corr));
            let higgs_term = b.phi_field[s]
                .commutator(&psi_h[s].sub(&psi_0[s]))
                .scale_re(2.0 / w);
            phi0[s]
                .add(&metric_term)
                .add(&higgs_term)
                .add(&state.s_field[s].scale_re(eps))
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub eps_schedule: Vec<f64>,
    /// None: 1e-9 (1 + max|Phi(H_0)|).
    pub tol_residual: Option<f64>,
    pub max_newton_iters: usize,
    pub max_cg_iters: usize,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_schedule: geometric_schedule(1.0, 1e-3, 10),
            tol_residual: None,
            max_newton_iters: 60,
            max_cg_iters: 80,
            armijo: 1e-4,
            min_step: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.eps_schedule;
        if s.is_empty() || s[0] > 1.0 || s.iter().any(|&e| e <= 0.0) {
            return Err(HelabError::Config(
                "eps schedule must be positive with first entry <= 1".into(),
            ));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HelabError::Config(
                "eps schedule must be strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    pub fn tol_for(&self, problem: &Problem) -> f64 {
        self.tol_residual
            .unwrap_or(1e-9 * (1.0 + problem.max_phi_h0))
    }
}

/// Geometric schedule from `start` down to `end` in `steps` values.
pub fn geometric_schedule(start: f64, end: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 2 && start > end && end > 0.0);
    let ratio = (end / start).powf(1.0 / (steps - 1) as f64);
    (0..steps).map(|k| start * ratio.powi(k as i32)).collect()
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub state: HermitianState,
    pub residual: f64,
    pub iterations: usize,
    /// max_X |s| (Frobenius).
    pub m: f64,
    pub l2_log_f: f64,
}

/// Spectral preconditioner: inverse of the centered-difference flat
/// Laplacian symbol plus eps plus a mean Higgs curvature scale, applied
/// entrywise through the FFT.
struct SpectralPrecond {
    inv_symbol: Vec<f64>,
    n: usize,
}

impl SpectralPrecond {
    fn build(problem: &Problem, eps: f64) -> Self {
        let n = problem.grid.n;
        let tau = problem.grid.tau;
        let w_mean = problem.metric.volume / (problem.grid.nsites() as f64 * problem.grid.cell_area);
        let nsites = problem.grid.nsites();
        let r = problem.bundle.rank as f64;
        let c_phi: f64 = problem
            .bundle
            .phi_field
            .iter()
            .zip(problem.metric.weight.iter())
            .map(|(p, w)| 4.0 * p.norm() * p.norm() / (w * r))
            .sum::<f64>()
            / nsites as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut inv_symbol = vec![0.0; nsites];
        for j in 0..n {
            for i in 0..n {
                let xt = n as f64 * (two_pi * i as f64 / n as f64).sin();
                let yt = n as f64 * (two_pi * j as f64 / n as f64).sin();
                let denom = tau.conj() - tau;
                let sp = (tau.conj() * C64::new(0.0, xt) - C64::new(0.0, yt)) / denom;
                let spb = (C64::new(0.0, yt) - tau * C64::new(0.0, xt)) / denom;
                let p_c = (-2.0 * (spb * sp).re / w_mean).max(0.0);
                inv_symbol[i + n * j] = 1.0 / (p_c + eps + c_phi);
            }
        }
        SpectralPrecond { inv_symbol, n }
    }

    fn apply(&self, field: &EndField) -> EndField {
        let rank = field[0].n;
        let mut out = vec![SmallMat::zeros(rank); field.len()];
        let mut scalar = vec![C64::new(0.0, 0.0); field.len()];
        for p in 0..rank {
            for q in 0..rank {
                for (s, m) in field.iter().enumerate() {
                    scalar[s] = m[(p, q)];
                }
                let mut c = fft2(&scalar, self.n);
                for (cv, inv) in c.iter_mut().zip(self.inv_symbol.iter()) {
                    *cv *= *inv;
                }
                let back = ifft2(&c, self.n);
                for (s, v) in back.iter().enumerate() {
                    out[s][(p, q)] = *v;
                }
            }
        }
        out
    }
}

fn ef_dot(a: &EndField, b: &EndField, grid: &TorusGrid, metric: &ConformalMetric) -> f64 {
    let mut acc = 0.0;
    for ((x, y), w) in a.iter().zip(b.iter()).zip(metric.weight.iter()) {
        acc += x.hs_dot(y).re * w * grid.cell_area;
    }
    acc
}

fn ef_axpy(y: &mut EndField, alpha: f64, x: &EndField) {
    for (ys, xs) in y.iter_mut().zip(x.iter()) {
        *ys = ys.add(&xs.scale_re(alpha));
    }
}

fn state_plus(s: &EndField, alpha: f64, d: &EndField) -> Result<HermitianState> {
    let mut n = s.clone();
    ef_axpy(&mut n, alpha, d);
    for m in n.iter_mut() {
        *m = m.herm_part();
    }
    HermitianState::from_s(n)
}

/// Damped Newton solve of L_eps(f) = 0 at fixed eps.
pub fn solve_at_eps(
    problem: &Problem,
    eps: f64,
    init: &HermitianState,
    config: &SolverConfig,
) -> Result<SolveResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(HelabError::Config(format!("eps = {eps} out of (0, 1]")));
    }
    let tol = config.tol_for(problem);
    let precond = SpectralPrecond::build(problem, eps);
    let grid = &problem.grid;
    let metric = &problem.metric;
    let mut state = init.clone();
    let mut history = Vec::new();

    for iter in 0..=config.max_newton_iters {
        let r = residual_l_eps(problem, &state, eps)?;
        let rmax = max_site_norm(&r);
        history.push(rmax);
        if rmax <= tol {
            let m = max_site_norm(&state.s_field);
            let l2 = l2_end_norm(&state.s_field, grid, metric);
            return Ok(SolveResult {
                state,
                residual: rmax,
                iterations: iter,
                m,
                l2_log_f: l2,
            });
        }
        if iter == config.max_newton_iters {
            break;
        }

        // Jacobian-free directional derivative via central differences.
        let s_norm = l2_end_norm(&state.s_field, grid, metric);
        let rank = problem.bundle.rank;
        let apply_j = |v: &EndField| -> Result<EndField> {
            let v_norm = l2_end_norm(v, grid, metric).max(1e-300);
            let h = 1e-5 * (1.0 + s_norm) / v_norm;
            let rp = residual_l_eps(problem, &state_plus(&state.s_field, h, v)?, eps)?;
            let rm = residual_l_eps(problem, &state_plus(&state.s_field, -h, v)?, eps)?;
            let mut jv: EndField = rp
                .iter()
                .zip(rm.iter())
                .map(|(a, b)| a.sub(b).scale_re(0.5 / h))
                .collect();
            // The trace of the residual is exactly affine in s (the curvature
            // assembly pins it to P(tr s)), so the differenced trace is pure
            // h-amplified roundoff. Replace it with the exact linear action.
            let tr_v: ScalarField = v.iter().map(SmallMat::trace).collect();
            let p_tr = p_operator(&tr_v, grid, metric);
            let rk = rank as f64;
            for (s, m) in jv.iter_mut().enumerate() {
                let exact = p_tr[s].re + eps * tr_v[s].re;
                let corr = (exact - m.trace().re) / rk;
                *m = m.add(&SmallMat::identity(rank).scale_re(corr));
            }
            Ok(jv)
        };

        // Normalized problems (rank >= 2) have exactly traceless solutions
        // and the Jacobian maps traceless to traceless; keeping every CG
        // vector on that subspace stops finite-difference roundoff in the
        // trace block (amplified by the stiff scalar symbol) from polluting
        // the Krylov space.
        let detrace = |f: &mut EndField| {
            if rank >= 2 {
                let rk = rank as f64;
                for m in f.iter_mut() {
                    let c = m.trace() / rk;
                    *m = m.sub(&SmallMat::identity(rank).scale(c));
                }
            }
        };

        // Preconditioned CG on J delta = -r.
        let verbose = std::env::var("HELAB_TRACE").is_ok();
        let mut cg_count = 0usize;
        let mut curvature_lost = false;
        let mut delta = vec![SmallMat::zeros(rank); grid.nsites()];
        let mut resid: EndField = r.iter().map(|m| m.scale_re(-1.0)).collect();
        detrace(&mut resid);
        let mut z = precond.apply(&resid);
        let mut p = z.clone();
        let mut rz = ef_dot(&resid, &z, grid, metric);
        let r0 = ef_dot(&resid, &resid, grid, metric).sqrt();
        // Inexact-Newton forcing: a loose linear solve suffices while the
        // outer residual is large; the Jacobian is only approximately
        // symmetric there and CG cannot do better anyway.
        let eta = rmax.sqrt().clamp(1e-4, 0.1);
        let cg_tol = (eta * r0).max(1e-13);
        for _ in 0..config.max_cg_iters {
            if ef_dot(&resid, &resid, grid, metric).sqrt() <= cg_tol {
                break;
            }
            cg_count += 1;
            let mut jp = apply_j(&p)?;
            detrace(&mut jp);
            let pjp = ef_dot(&p, &jp, grid, metric);
            if pjp <= 0.0 {
                curvature_lost = true;
                break; // directional curvature lost; use current delta
            }
            let alpha = rz / pjp;
            ef_axpy(&mut delta, alpha, &p);
            ef_axpy(&mut resid, -alpha, &jp);
            z = precond.apply(&resid);
            let rz_new = ef_dot(&resid, &z, grid, metric);
            let beta = rz_new / rz;
            rz = rz_new;
            for (ps, zs) in p.iter_mut().zip(z.iter()) {
                *ps = zs.add(&ps.scale_re(beta));
            }
        }

        // Normalized problems (rank >= 2) have exactly traceless solutions;
        // projecting the direction keeps the iterates on that subspace so the
        // stiff scalar trace block never activates inside CG.
        if rank >= 2 {
            let rk = rank as f64;
            for m in delta.iter_mut() {
                let c = m.trace().re / rk;
                *m = m.sub(&SmallMat::identity(rank).scale_re(c));
            }
        }

        if verbose {
            let cg_final = ef_dot(&resid, &resid, grid, metric).sqrt();
            let tr_of = |f: &EndField| {
                f.iter().map(|m| m.trace().norm()).fold(0.0, f64::max)
            };
            eprintln!(
                "newton iter {iter}: |r|_max {rmax:.3e}, cg iters {cg_count}, \
                 cg resid {cg_final:.3e} (tol {cg_tol:.3e}), pjp break {curvature_lost}, \
                 tr(resid) {:.2e}, tr(delta) {:.2e}, tr(s) {:.2e}",
                tr_of(&resid),
                tr_of(&delta),
                tr_of(&state.s_field)
            );
        }

        // Backtracking on ||L_eps||_{L^2}^2.
        let f0 = ef_dot(&r, &r, grid, metric);
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= config.min_step {
            // A trial step that drives exp(s) out of representable range is
            // rejected like any other failed step.
            let trial_resid = state_plus(&state.s_field, alpha, &delta)
                .and_then(|trial| Ok((residual_l_eps(problem, &trial, eps)?, trial)));
            if let Ok((rt, trial)) = trial_resid {
                let ft = ef_dot(&rt, &rt, grid, metric);
                if ft.is_finite() && ft <= (1.0 - config.armijo * alpha) * f0 {
                    state = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(HelabError::NoConvergence {
                eps,
                residual: rmax,
                iters: iter,
                history,
            });
        }
    }
    Err(HelabError::NoConvergence {
        eps,
        residual: *history.last().unwrap(),
        iters: config.max_newton_iters,
        history,
    })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eps: f64,
    pub m: f64,
    pub eps_m: f64,
    pub max_phi: f64,
    pub l2_s: f64,
    pub l2_dpp_u: f64,
    pub det_f_err: f64,
    pub lemma21_ok: bool,
    pub lemma22_ok: bool,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub max_phi_h0: f64,
    /// Set when the schedule was cut short because the metric degenerated
    /// beyond representable range; holds the first eps that failed.
    pub truncated_at: Option<f64>,
}

/// Solve along the schedule with warm starts. Early non-convergence aborts
/// the sweep with the failing eps in the error. Once at least three rows
/// exist, a failure whose residual history shows no blow-up of the data —
/// i.e. the metric itself degenerated past the exp-representable range —
/// truncates the schedule instead, leaving the realized rows for the
/// classifier. No partial rows are ever recorded as converged.
pub fn continuity_sweep(
    problem: &Problem,
    config: &SolverConfig,
) -> Result<(SweepReport, Vec<HermitianState>)> {
    config.validate()?;
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut states = Vec::new();
    let mut truncated_at = None;
    let mut current = HermitianState::identity(problem.bundle.rank, problem.grid.nsites());
    for &eps in &config.eps_schedule {
        let result = match solve_at_eps(problem, eps, &current, config) {
            Ok(r) => r,
            Err(err) => {
                let degenerating = rows.len() >= 3
                    && rows.last().map_or(false, |r| r.m * eps > 1.0)
                    && matches!(
                        err,
                        HelabError::NoConvergence { .. } | HelabError::State(_)
                    );
                if degenerating {
                    truncated_at = Some(eps);
                    break;
                }
                return Err(err);
            }
        };
        rows.push(make_row(problem, &result, eps)?);
        current = result.state.clone();
        states.push(result.state);
    }
    Ok((
        SweepReport {
            rows,
            max_phi_h0: problem.max_phi_h0,
            truncated_at,
        },
        states,
    ))
}

fn make_row(problem: &Problem, result: &SolveResult, eps: f64) -> Result<SweepRow> {
    let max_phi = problem.max_phi_h(&result.state)?;
    let l2_s = result.l2_log_f;
    let l2_dpp_u = if l2_s > 0.0 {
        let u: EndField = result
            .state
            .s_field
            .iter()
            .map(|m| m.scale_re(1.0 / l2_s))
            .collect();
        let (db, hg) = d_double_prime(&u, &problem.bundle, &problem.grid);
        l2_form_norm_sq(&[&db, &hg], &problem.grid, &problem.metric).sqrt()
    } else {
        0.0
    };
    let det_f_err = result
        .state
        .f_field
        .iter()
        .map(|f| (f.det() - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let l21 = check_lemma21(problem, result, eps)?;
    let l22 = check_lemma22(problem, result, eps);
    Ok(SweepRow {
        eps,
        m: result.m,
        eps_m: eps * result.m,
        max_phi,
        l2_s,
        l2_dpp_u,
        det_f_err,
        lemma21_ok: l21.pass,
        lemma22_ok: l22.bound_ii_ok,
    })
}

#[derive(Clone, Debug)]
pub struct TraceReport {
    pub max_abs_tr_s: f64,
    pub max_det_err: f64,
    /// max |P(tr s) + eps tr s| — the traced scalar equation.
    pub scalar_eq_residual: f64,
    pub pass: bool,
}

/// Traced-equation invariants: tr s = 0 and det f = 1 for every converged
/// solve on a normalized background, plus the scalar identity
/// P(tr s) + eps tr s = tr L_eps.
pub fn check_lemma21(problem: &Problem, result: &SolveResult, eps: f64) -> Result<TraceReport> {
    let tol = 1e-8;
    let tr: ScalarField = result.state.s_field.iter().map(SmallMat::trace).collect();
    let max_abs_tr_s = tr.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_det_err = result
        .state
        .f_field
        .iter()
        .map(|f| (f.det() - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let ptr = p_operator(&tr, &problem.grid, &problem.metric);
    let scalar_eq_residual = ptr
        .iter()
        .zip(tr.iter())
        .map(|(p, t)| (p + t * eps).norm())
        .fold(0.0, f64::max);
    Ok(TraceReport {
        max_abs_tr_s,
        max_det_err,
        scalar_eq_residual,
        pass: max_abs_tr_s <= tol && max_det_err <= tol,
    })
}

#[derive(Clone, Debug)]
pub struct MaxPrincipleReport {
    /// eps m <= max|Phi(H_0)| + slack.
    pub bound_ii_ok: bool,
    pub eps_m: f64,
    pub max_phi_h0: f64,
    /// Largest positive violation of the pointwise inequality
    /// P(|s|^2)/2 + eps|s|^2 <= |Phi(H_0)||s|; shrinks under refinement.
    pub pointwise_violation: f64,
    /// m / (||s||_{L^2} + max|Phi(H_0)|): tracked, never asserted.
    pub moser_ratio: f64,
}

pub fn check_lemma22(problem: &Problem, result: &SolveResult, eps: f64) -> MaxPrincipleReport {
    let slack = 1e-7 * (1.0 + problem.max_phi_h0);
    let eps_m = eps * result.m;
    let id = HermitianState::identity(problem.bundle.rank, problem.grid.nsites());
    let phi0 = problem.phi_field_of(&id).expect("state is coherent");
    let s_abs: Vec<f64> = result.state.s_field.iter().map(SmallMat::norm).collect();
    let s_sq: ScalarField = s_abs.iter().map(|a| C64::new(a * a, 0.0)).collect();
    let p_ssq = p_operator(&s_sq, &problem.grid, &problem.metric);
    let mut violation: f64 = 0.0;
    for s in 0..problem.grid.nsites() {
        let lhs = 0.5 * p_ssq[s].re + eps * s_abs[s] * s_abs[s];
        let rhs = phi0[s].norm() * s_abs[s];
        violation = violation.max(lhs - rhs);
    }
    let denom = result.l2_log_f + problem.max_phi_h0;
    MaxPrincipleReport {
        bound_ii_ok: eps_m <= problem.max_phi_h0 + slack,
        eps_m,
        max_phi_h0: problem.max_phi_h0,
        pointwise_violation: violation,
        moser_ratio: if denom > 0.0 { result.m / denom } else { 0.0 },
    }
}

#[derive(Clone, Debug)]
pub struct IntegralIdentityReport {
    /// integral tr(Phi(H_0) s) against omega.
    pub phi_s_term: f64,
    /// integral of the Psi(s)-pairing of D''s; always >= 0.
    pub psi_term: f64,
    /// eps ||s||^2.
    pub eps_term: f64,
    /// phi_s + psi + eps terms; O(h^2) for converged solves.
    pub residual: f64,
}

pub fn check_prop31(problem: &Problem, result: &SolveResult, eps: f64) -> Result<IntegralIdentityReport> {
    let g = &problem.grid;
    let id = HermitianState::identity(problem.bundle.rank, g.nsites());
    let phi0 = problem.phi_field_of(&id)?;
    let s = &result.state.s_field;
    let tr_field: ScalarField = (0..g.nsites()).map(|i| phi0[i].mul(&s[i]).trace()).collect();
    let phi_s_term = integrate(&tr_field, g, &problem.metric).re;
    let (db, hg) = d_double_prime(s, &problem.bundle, g);
    let mut psi_term = 0.0;
    for i in 0..g.nsites() {
        let eig = eig_herm(&s[i]);
        let site = psi_quadratic(&eig, &db[i], simpson_psi) + psi_quadratic(&eig, &hg[i], simpson_psi);
        psi_term += 2.0 * site * g.cell_area; // 2/w form factor times w dA
    }
    let eps_term = eps * result.l2_log_f * result.l2_log_f;
    Ok(IntegralIdentityReport {
        phi_s_term,
        psi_term,
        eps_term,
        residual: phi_s_term + psi_term + eps_term,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    /// eps m(eps) decays below decision_threshold times its initial value:
    /// the metrics approach a Hermitian-Einstein structure (semistability).
    ApproxHermitianEinstein,
    /// max|Phi| stagnates above a positive floor (at least the Chern-Weil
    /// oracle when one is supplied): a destabilizing obstruction persists.
    Obstructed { floor: f64 },
    Inconclusive,
}

pub const DECISION_THRESHOLD: f64 = 0.1;
pub const STAGNATION_REL: f64 = 0.05;

/// Classification of a completed sweep. Only converged rows reach this point
/// (the sweep aborts otherwise).
pub fn classify_sweep(report: &SweepReport, delta_oracle: Option<f64>) -> Result<Verdict> {
    let rows = &report.rows;
    if rows.len() < 3 {
        return Err(HelabError::AnalysisRefused(
            "need at least three converged rows to classify".into(),
        ));
    }
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    if first.eps_m == 0.0 && last.eps_m == 0.0 {
        return Ok(Verdict::ApproxHermitianEinstein);
    }
    let decayed = last.eps_m <= DECISION_THRESHOLD * first.eps_m;
    let tail = &rows[rows.len() - 3..];
    let stagnant = tail
        .iter()
        .all(|r| (r.max_phi - last.max_phi).abs() <= STAGNATION_REL * last.max_phi.abs().max(1e-300));
    if decayed && !stagnant {
        return Ok(Verdict::ApproxHermitianEinstein);
    }
    if stagnant && !decayed {
        if let Some(delta) = delta_oracle {
            if last.max_phi >= delta * (1.0 - 1e-6) {
                return Ok(Verdict::Obstructed { floor: last.max_phi });
            }
            return Ok(Verdict::Inconclusive);
        }
        return Ok(Verdict::Obstructed { floor: last.max_phi });
    }
    Ok(Verdict::Inconclusive)
}

/// Independent cross-check: preconditioned gradient descent on s (a
/// discretized Donaldson-type flow) run to the same residual tolerance, then
/// compared against the Newton solution.
pub fn donaldson_flow(
    problem: &Problem,
    eps: f64,
    config: &SolverConfig,
    horizon: usize,
) -> Result<SolveResult> {
    let tol = config.tol_for(problem);
    let precond = SpectralPrecond::build(problem, eps);
    let grid = &problem.grid;
    let metric = &problem.metric;
    let mut state = HermitianState::identity(problem.bundle.rank, grid.nsites());
    let mut dt = 0.5;
    let mut r = residual_l_eps(problem, &state, eps)?;
    let mut fnow = ef_dot(&r, &r, grid, metric);
    let mut history = vec![max_site_norm(&r)];
    for iter in 0..horizon {
        let rmax = max_site_norm(&r);
        if rmax <= tol {
            let m = max_site_norm(&state.s_field);
            let l2 = l2_end_norm(&state.s_field, grid, metric);
            return Ok(SolveResult {
                state,
                residual: rmax,
                iterations: iter,
                m,
                l2_log_f: l2,
            });
        }
        let dir = precond.apply(&r);
        let trial = state_plus(&state.s_field, -dt, &dir)?;
        let rt = residual_l_eps(problem, &trial, eps)?;
        let ft = ef_dot(&rt, &rt, grid, metric);
        if ft < fnow {
            state = trial;
            r = rt;
            fnow = ft;
            dt = (dt * 1.1).min(0.9);
        } else {
            dt *= 0.5;
            if dt < 1e-8 {
                return Err(HelabError::NoConvergence {
                    eps,
                    residual: rmax,
                    iters: iter,
                    history,
                });
            }
        }
        history.push(max_site_norm(&r));
    }
    Err(HelabError::NoConvergence {
        eps,
        residual: *history.last().unwrap(),
        iters: horizon,
        history,
    })
}

/// Degree of the bundle read through the solved state, for diagnostics.
pub fn degree_of_state(problem: &Problem, state: &HermitianState) -> Result<f64> {
    let k = mean_curvature_k(&problem.bundle, state, &problem.grid, &problem.metric, Some(&problem.shift))?;
    Ok(degree_from_k(&k, &problem.grid, &problem.metric))
}
