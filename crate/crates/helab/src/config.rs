//! Run configuration: a small TOML schema with strict validation, defaults,
//! and a canonical form whose SHA-256 digest identifies the run in every
//! artifact.

use crate::error::{HelabError, Result};
use crate::matrix::C64;
use crate::torus::WeightSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// "uniform" or "cosx".
    pub kind: String,
    #[serde(default)]
    pub amplitude: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub amplitude: f64,
    /// Covariant smoothing sweeps applied to the seeded noise.
    pub smoothness: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Scenario id E1..E4; explicit fields override the scenario's.
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub tau_re: Option<f64>,
    pub tau_im: Option<f64>,
    pub weight: Option<WeightConfig>,
    pub rank: Option<usize>,
    pub flux: Option<Vec<i64>>,
    pub a_perturbation: Option<PerturbationConfig>,
    /// Constant Higgs matrix, row-major [re, im] pairs.
    pub phi_constant: Option<Vec<Vec<[f64; 2]>>>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub eps_steps: Option<usize>,
    pub tol_residual: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Fully resolved configuration with all defaults applied.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub n: usize,
    pub tau: C64,
    pub weight: WeightSpec,
    pub rank: usize,
    pub flux: Vec<i64>,
    pub a_perturbation: Option<PerturbationConfig>,
    pub phi_constant: Option<Vec<Vec<C64>>>,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_steps: usize,
    pub tol_residual: Option<f64>,
    pub seed: u64,
    pub threads: usize,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| HelabError::Config(format!("config parse error: {e}")))?;
    resolve(raw)
}

fn scenario_defaults(id: &str) -> Result<(usize, Vec<i64>, Option<Vec<Vec<C64>>>, Option<PerturbationConfig>)> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match id {
        "E1" => Ok((1, vec![0], None, None)),
        "E2" => Ok((
            2,
            vec![0, 0],
            Some(vec![vec![zero, one], vec![zero, zero]]),
            None,
        )),
        "E3" => Ok((2, vec![1, -1], None, None)),
        "E4" => Ok((
            2,
            vec![1, 0],
            None,
            Some(PerturbationConfig {
                amplitude: 0.05,
                smoothness: 200,
            }),
        )),
        other => Err(HelabError::Config(format!(
            "unknown scenario id {other:?} (expected E1..E4)"
        ))),
    }
}

pub fn resolve(raw: RawConfig) -> Result<ScenarioConfig> {
    let scenario = raw.scenario.clone().unwrap_or_else(|| "custom".into());
    let (mut rank, mut flux, mut phi, mut perturbation) = if scenario == "custom" {
        (
            raw.rank.ok_or_else(|| {
                HelabError::Config("custom run needs an explicit rank".into())
            })?,
            Vec::new(),
            None,
            None,
        )
    } else {
        scenario_defaults(&scenario)?
    };
    if let Some(r) = raw.rank {
        rank = r;
    }
    if let Some(f) = raw.flux.clone() {
        flux = f;
    }
    if flux.is_empty() {
        flux = vec![0; rank];
    }
    if let Some(p) = raw.phi_constant.clone() {
        phi = Some(
            p.iter()
                .map(|row| row.iter().map(|[re, im]| C64::new(*re, *im)).collect())
                .collect(),
        );
    }
    if let Some(a) = raw.a_perturbation.clone() {
        perturbation = Some(a);
    }
    if rank == 0 || rank > 8 {
        return Err(HelabError::Config(format!("rank {rank} out of 1..=8")));
    }
    if flux.len() > rank {
        return Err(HelabError::Config(format!(
            "flux vector has {} entries for rank {rank}",
            flux.len()
        )));
    }
    if let Some(p) = &phi {
        if p.len() != rank || p.iter().any(|row| row.len() != rank) {
            return Err(HelabError::Config(format!(
                "phi matrix must be {rank} x {rank}"
            )));
        }
    }
    let n = raw.n.unwrap_or(32);
    let tau = C64::new(raw.tau_re.unwrap_or(0.0), raw.tau_im.unwrap_or(1.0));
    let weight = match &raw.weight {
        None => WeightSpec::Uniform,
        Some(w) => match w.kind.as_str() {
            "uniform" => WeightSpec::Uniform,
            "cosx" => WeightSpec::CosX { amp: w.amplitude },
            other => {
                return Err(HelabError::Config(format!(
                    "unknown weight kind {other:?} (expected uniform or cosx)"
                )));
            }
        },
    };
    let eps_start = raw.eps_start.unwrap_or(1.0);
    let eps_end = raw.eps_end.unwrap_or(1e-3);
    let eps_steps = raw.eps_steps.unwrap_or(10);
    if !(eps_end > 0.0 && eps_start > eps_end && eps_start <= 1.0 && eps_steps >= 2) {
        return Err(HelabError::Config(format!(
            "bad eps schedule: start {eps_start}, end {eps_end}, steps {eps_steps}"
        )));
    }
    Ok(ScenarioConfig {
        scenario,
        n,
        tau,
        weight,
        rank,
        flux,
        a_perturbation: perturbation,
        phi_constant: phi,
        eps_start,
        eps_end,
        eps_steps,
        tol_residual: raw.tol_residual,
        seed: raw.seed.unwrap_or(0),
        threads: raw.threads.unwrap_or(1),
    })
}

impl ScenarioConfig {
    /// Canonical TOML form: every resolved field spelled out, fixed order.
    pub fn canonical_toml(&self) -> String {
        let raw = RawConfig {
            scenario: Some(self.scenario.clone()),
            n: Some(self.n),
            tau_re: Some(self.tau.re),
            tau_im: Some(self.tau.im),
            weight: Some(match &self.weight {
                WeightSpec::Uniform => WeightConfig {
                    kind: "uniform".into(),
                    amplitude: 0.0,
                },
                WeightSpec::CosX { amp } => WeightConfig {
                    kind: "cosx".into(),
                    amplitude: *amp,
                },
                WeightSpec::Custom(_) => WeightConfig {
                    kind: "custom".into(),
                    amplitude: 0.0,
                },
            }),
            rank: Some(self.rank),
            flux: Some(self.flux.clone()),
            a_perturbation: self.a_perturbation.clone(),
            phi_constant: self.phi_constant.as_ref().map(|p| {
                p.iter()
                    .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                    .collect()
            }),
            eps_start: Some(self.eps_start),
            eps_end: Some(self.eps_end),
            eps_steps: Some(self.eps_steps),
            tol_residual: self.tol_residual,
            seed: Some(self.seed),
            threads: Some(self.threads),
        };
        toml::to_string(&raw).expect("canonical config serializes")
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn eps_schedule(&self) -> Vec<f64> {
        crate::solver::geometric_schedule(self.eps_start, self.eps_end, self.eps_steps)
    }
}
