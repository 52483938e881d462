//! Orchestration: execute a configured scenario end to end and persist the
//! artifacts, plus the self-contained verification suite.

use crate::bundle::{HermitianState, degree_from_k, make_background, mean_curvature_k};
use crate::calculus::{
    FramePoint, pointwise_identity_check, simpson_psi, sum_rule_check, trace_identity_check,
};
use crate::config::ScenarioConfig;
use crate::error::{HelabError, Result};
use crate::matrix::{C64, SmallMat};
use crate::report::{json_report, sweep_csv, write_checkpoint};
use crate::scenario::{build_problem, delta_oracle};
use crate::solver::{SolverConfig, continuity_sweep};
use crate::stability::{FinalVerdict, semistable_verdict};
use crate::torus::{WeightSpec, make_grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub config_hash: String,
    pub verdict: FinalVerdict,
}

/// Full pipeline: normalize, sweep, classify, destabilizer analysis when the
/// sweep is obstructed, and artifact emission. Every artifact records the
/// config hash.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).map_err(HelabError::Io)?;
    let hash = config.config_hash();
    let mut log = String::new();
    log.push_str(&format!(
        "scenario {} config {}\n",
        config.scenario, hash
    ));

    let problem = build_problem(config)?;
    log.push_str(&format!(
        "N {} rank {} degree {} lambda {:.6e} max|Phi(H_0)| {:.6e}\n",
        config.n,
        problem.bundle.rank,
        problem.bundle.degree(),
        problem.lambda,
        problem.max_phi_h0
    ));

    let solver_config = SolverConfig {
        eps_schedule: config.eps_schedule(),
        tol_residual: config.tol_residual,
        ..SolverConfig::default()
    };
    let (sweep, states) = continuity_sweep(&problem, &solver_config)?;
    for row in &sweep.rows {
        log.push_str(&format!(
            "eps {:.6e} m {:.6e} eps_m {:.6e} max_phi {:.6e}\n",
            row.eps, row.m, row.eps_m, row.max_phi
        ));
    }

    let oracle = delta_oracle(config, &problem.metric);
    let tail_start = states.len().saturating_sub(3);
    let verdict = semistable_verdict(&problem, &sweep, &states[tail_start..], oracle)?;
    log.push_str(&format!("verdict {:?}\n", verdict.verdict));

    let csv_path = out_dir.join("sweep.csv");
    let json_path = out_dir.join("report.json");
    let checkpoint_path = out_dir.join("checkpoint.bin");
    let log_path = out_dir.join("run.log");

    let mut csv = format!("# config {hash}\n");
    csv.push_str(&sweep_csv(&sweep));
    write(&csv_path, csv.as_bytes())?;

    let report = json_report(&config.scenario, &hash, &sweep, &verdict);
    write(
        &json_path,
        serde_json::to_string_pretty(&report).unwrap().as_bytes(),
    )?;

    let final_state = states.last().expect("sweep produced rows");
    write(
        &checkpoint_path,
        &write_checkpoint(&problem.bundle, final_state, config.n, config.tau),
    )?;
    write(&log_path, log.as_bytes())?;

    Ok(RunArtifacts {
        csv_path,
        json_path,
        checkpoint_path,
        log_path,
        config_hash: hash,
        verdict: verdict.verdict,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(HelabError::Io)
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Fixed-seed verification suite over the identity and property checks of
/// all modules. `inject_bug` flips the sign of the assembled curvature
/// before the degree check, as a canary that the checks can actually fail.
pub fn verify_suite(seed: u64, inject_bug: bool) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let push = |out: &mut Vec<CheckResult>, name: &str, pass: bool, detail: String| {
        out.push(CheckResult {
            name: name.into(),
            pass,
            detail,
        });
    };

    // Degree quantization across random metric states (the canary host).
    {
        let (g, m) = make_grid(16, C64::new(0.0, 1.0), &WeightSpec::CosX { amp: 0.2 }).unwrap();
        let b = make_background(&g, 2, &[1, 0]).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let s: Vec<SmallMat> = (0..g.nsites())
                .map(|_| {
                    SmallMat::from_fn(2, |_, _| {
                        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    })
                    .herm_part()
                    .scale_re(0.4)
                })
                .collect();
            let st = HermitianState::from_s(s).unwrap();
            let k = mean_curvature_k(&b, &st, &g, &m, None).unwrap();
            let mut deg = degree_from_k(&k, &g, &m);
            if inject_bug {
                deg = -deg;
            }
            worst = worst.max((deg - 1.0).abs());
        }
        push(
            &mut out,
            "degree_quantization",
            worst <= 1e-8,
            format!("worst deviation {worst:.3e}"),
        );
    }

    // Trace identity over random (s, ds).
    {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let s = SmallMat::from_fn(3, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
            .herm_part();
            let ds = SmallMat::from_fn(3, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
            .herm_part();
            let rep = trace_identity_check(&s, &ds).unwrap();
            worst = worst.max(rep.residual);
        }
        push(
            &mut out,
            "trace_identity",
            worst <= 1e-10,
            format!("worst residual {worst:.3e}"),
        );
    }

    // Pointwise eigenframe identity over random synthetic frames.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let lambdas = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
            let rand_mat = |rng: &mut ChaCha8Rng| {
                SmallMat::from_fn(2, |_, _| {
                    C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
            };
            let fp = FramePoint {
                lambdas: lambdas.to_vec(),
                dlambda: (0..2)
                    .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
                theta: rand_mat(&mut rng),
                phi: rand_mat(&mut rng),
            };
            let (lhs, rhs) = pointwise_identity_check(&fp);
            worst = worst.max((lhs - rhs).abs());
        }
        push(
            &mut out,
            "pointwise_identity",
            worst <= 1e-12,
            format!("worst deviation {worst:.3e}"),
        );
    }

    // Step-function sum rule over random spectra.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mut mus: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            mus.sort_by(f64::total_cmp);
            mus.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            if mus.len() < 2 {
                continue;
            }
            let lhs = sum_rule_check(&mus, 0, mus.len() - 1).unwrap();
            let rhs = 1.0 / (mus[mus.len() - 1] - mus[0]).abs();
            worst = worst.max((lhs - rhs).abs() / rhs);
        }
        push(
            &mut out,
            "sum_rule",
            worst <= 1e-12,
            format!("worst relative deviation {worst:.3e}"),
        );
    }

    // Removable singularity of the integrated Psi kernel: exact value 1 on
    // the diagonal, series-accurate just off it.
    {
        let t: f64 = -1e-9;
        let series = 1.0 + t / 2.0 + t * t / 6.0;
        let dev =
            (simpson_psi(0.3, 0.3) - 1.0).abs() + (simpson_psi(1e-9, 0.0) - series).abs();
        push(
            &mut out,
            "psi_removable_singularity",
            dev <= 1e-13,
            format!("deviation {dev:.3e}"),
        );
    }

    // Solver invariants on the nilpotent scenario at one eps.
    {
        let (g, m) = make_grid(16, C64::new(0.0, 1.0), &WeightSpec::Uniform).unwrap();
        let mut b = make_background(&g, 2, &[0, 0]).unwrap();
        b.phi_field = vec![SmallMat::unit(2, 0, 1); g.nsites()];
        let p = crate::solver::Problem::new(b, g, m).unwrap();
        let init = HermitianState::identity(2, p.grid.nsites());
        match crate::solver::solve_at_eps(&p, 0.5, &init, &SolverConfig::default()) {
            Ok(r) => {
                let l21 = crate::solver::check_lemma21(&p, &r, 0.5).unwrap();
                let l22 = crate::solver::check_lemma22(&p, &r, 0.5);
                push(
                    &mut out,
                    "lemma_invariants",
                    l21.pass && l22.bound_ii_ok,
                    format!(
                        "tr s {:.3e}, det f {:.3e}, eps m {:.3e} vs {:.3e}",
                        l21.max_abs_tr_s, l21.max_det_err, l22.eps_m, l22.max_phi_h0
                    ),
                );
            }
            Err(e) => push(&mut out, "lemma_invariants", false, format!("{e}")),
        }
    }

    out
}
