//! The scenario library and the assembly of a solvable problem from a
//! resolved configuration.
//!
//! Fixed scenarios:
//!   E1  rank 1, flux 0            - trivially Hermitian-Einstein at s = 0.
//!   E2  rank 2, flux (0,0), constant nilpotent Higgs field - semistable but
//!       not polystable; the metrics degenerate while eps m(eps) decays.
//!   E3  rank 2, flux (1,-1)       - unstable; the flux-1 line destabilizes
//!       and max|Phi| is pinned at its Chern-Weil floor.
//!   E4  rank 2, flux (1,0) with a small smoothed random dbar-perturbation -
//!       coprime rank and degree; expected bounded-metric semistable run.
//!
//! Randomness: one master seed expands to per-field streams of a counter
//! based generator (stream k = field k), so runs are reproducible and fields
//! are independently seeded.

use crate::bundle::{EndField, HiggsBundle, covariant_smooth, make_background, max_site_norm, validate_higgs};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::matrix::{C64, SmallMat};
use crate::solver::Problem;
use crate::stability::obstruction_oracle;
use crate::torus::{ConformalMetric, TorusGrid, make_grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-field random stream derived from the master seed.
fn field_rng(master: u64, field: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(field);
    rng
}

pub const A_FIELD_STREAM: u64 = 1;

/// Build the bundle, grid, and metric of a configuration and normalize the
/// background; the configuration aborts here if its Higgs data is invalid.
pub fn build_problem(config: &ScenarioConfig) -> Result<Problem> {
    let (grid, metric) = make_grid(config.n, config.tau, &config.weight)?;
    let mut bundle = make_background(&grid, config.rank, &config.flux)?;
    if let Some(phi) = &config.phi_constant {
        let m = SmallMat::from_fn(config.rank, |i, j| phi[i][j]);
        bundle.phi_field = vec![m; grid.nsites()];
    }
    if let Some(p) = &config.a_perturbation {
        bundle.a_field = perturbation_field(
            &bundle,
            &grid,
            config.seed,
            p.amplitude,
            p.smoothness,
        );
    }
    validate_higgs(&bundle, &grid)?;
    Problem::new(bundle, grid, metric)
}

/// Seeded covariantly smooth (0,1)-perturbation at a prescribed amplitude.
fn perturbation_field(
    bundle: &HiggsBundle,
    grid: &TorusGrid,
    master_seed: u64,
    amplitude: f64,
    smoothness: usize,
) -> EndField {
    let mut rng = field_rng(master_seed, A_FIELD_STREAM);
    let mut field: EndField = (0..grid.nsites())
        .map(|_| {
            SmallMat::from_fn(bundle.rank, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
        })
        .collect();
    covariant_smooth(&mut field, bundle, grid, smoothness);
    let peak = max_site_norm(&field);
    if peak > 0.0 {
        for m in field.iter_mut() {
            *m = m.scale_re(amplitude / peak);
        }
    }
    field
}

/// Chern-Weil obstruction floor, available when the background splits into
/// genuine line subbundles (no dbar-perturbation, no Higgs field): the best
/// block slope bounds max|Phi| from below whenever it exceeds the slope of
/// the bundle.
pub fn delta_oracle(config: &ScenarioConfig, metric: &ConformalMetric) -> Option<f64> {
    if config.a_perturbation.is_some() || config.phi_constant.is_some() {
        return None;
    }
    let mu_e = config.flux.iter().sum::<i64>() as f64 / config.rank as f64;
    let mu_f = config.flux.iter().copied().max()? as f64;
    if mu_f > mu_e + 1e-12 {
        Some(obstruction_oracle(mu_f, mu_e, 1, metric.volume))
    } else {
        None
    }
}
