//! Artifact formats: the sweep CSV, the versioned JSON report, and the
//! binary checkpoint with bit-exact round-tripping.

use crate::bundle::{EndField, HermitianState, HiggsBundle};
use crate::error::{HelabError, Result};
use crate::matrix::{C64, SmallMat};
use crate::solver::{SweepReport, Verdict};
use crate::stability::{DestabilizerVerdict, VerdictReport};
use serde_json::{Value, json};

pub const CSV_HEADER: &str = "eps,m,eps_m,max_phi,l2_s,l2_Dpp_u,det_f_err,lemma22_ok";

/// Plot-ready sweep table; one row per eps, shortest-round-trip float
/// formatting so identical runs emit identical bytes.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.eps, r.m, r.eps_m, r.max_phi, r.l2_s, r.l2_dpp_u, r.det_f_err,
            if r.lemma22_ok { 1 } else { 0 }
        ));
    }
    out
}

pub fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::ApproxHermitianEinstein => "approx_hermitian_einstein",
        Verdict::Obstructed { .. } => "obstructed",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Versioned JSON report ("v1").
pub fn json_report(
    scenario: &str,
    config_hash: &str,
    sweep: &SweepReport,
    verdict: &VerdictReport,
) -> Value {
    let rows: Vec<Value> = sweep
        .rows
        .iter()
        .map(|r| {
            json!({
                "eps": r.eps,
                "m": r.m,
                "eps_m": r.eps_m,
                "max_phi": r.max_phi,
                "l2_s": r.l2_s,
                "l2_dpp_u": r.l2_dpp_u,
                "det_f_err": r.det_f_err,
                "lemma21_ok": r.lemma21_ok,
                "lemma22_ok": r.lemma22_ok,
            })
        })
        .collect();
    let destabilizer = verdict.destabilizer.as_ref().map(|d| {
        json!({
            "plateaus": d.plateaus,
            "blocks": d.blocks.iter().map(|b| json!({
                "rank": b.rank,
                "degree": b.degree,
                "slope": b.slope,
                "idempotent_residual": b.residuals.idempotent,
                "holomorphy_residual": b.residuals.holomorphy,
                "invariance_residual": b.residuals.invariance,
            })).collect::<Vec<_>>(),
            "constancy_residual": d.constancy_residual,
            "reconstruction_residual": d.reconstruction_residual,
            "nu_degree_form": d.nu_degree_form,
            "nu_slope_form": d.nu_slope_form,
            "bundle_slope": d.bundle_slope,
            "destabilized": matches!(d.verdict, DestabilizerVerdict::Destabilized { .. }),
        })
    });
    json!({
        "schema_version": "v1",
        "scenario": scenario,
        "config_hash": config_hash,
        "max_phi_h0": sweep.max_phi_h0,
        "rows": rows,
        "sweep_verdict": verdict_name(&verdict.sweep_verdict),
        "verdict": format!("{:?}", verdict.verdict).to_lowercase(),
        "destabilizer": destabilizer,
        "notes": verdict.notes,
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HELABCKP";
const CHECKPOINT_VERSION: u32 = 1;

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_field(buf: &mut Vec<u8>, field: &EndField) {
    for m in field {
        for i in 0..m.n {
            for j in 0..m.n {
                let z = m[(i, j)];
                push_f64(buf, z.re);
                push_f64(buf, z.im);
            }
        }
    }
}

/// Binary checkpoint: magic, version, N, tau, rank, flux, then the complex
/// entries of links, a, phi, and s, site-major row-major little-endian.
pub fn write_checkpoint(
    bundle: &HiggsBundle,
    state: &HermitianState,
    n: usize,
    tau: C64,
) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    push_u64(&mut buf, n as u64);
    push_f64(&mut buf, tau.re);
    push_f64(&mut buf, tau.im);
    push_u64(&mut buf, bundle.rank as u64);
    push_u64(&mut buf, bundle.flux.len() as u64);
    for &f in &bundle.flux {
        push_u64(&mut buf, f as u64);
    }
    push_field(&mut buf, &bundle.links_x);
    push_field(&mut buf, &bundle.links_y);
    push_field(&mut buf, &bundle.a_field);
    push_field(&mut buf, &bundle.phi_field);
    push_field(&mut buf, &state.s_field);
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(HelabError::Format("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn field(&mut self, nsites: usize, rank: usize) -> Result<EndField> {
        let mut out = Vec::with_capacity(nsites);
        for _ in 0..nsites {
            let mut m = SmallMat::zeros(rank);
            for i in 0..rank {
                for j in 0..rank {
                    let re = self.f64()?;
                    let im = self.f64()?;
                    m[(i, j)] = C64::new(re, im);
                }
            }
            out.push(m);
        }
        Ok(out)
    }
}

pub struct Checkpoint {
    pub n: usize,
    pub tau: C64,
    pub bundle: HiggsBundle,
    pub s_field: EndField,
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(HelabError::Format("bad checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(HelabError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let n = r.u64()? as usize;
    let tau = C64::new(r.f64()?, r.f64()?);
    let rank = r.u64()? as usize;
    if rank == 0 || rank > 8 || n == 0 || n > 4096 {
        return Err(HelabError::Format(format!(
            "implausible checkpoint header: N {n}, rank {rank}"
        )));
    }
    let nflux = r.u64()? as usize;
    if nflux > rank {
        return Err(HelabError::Format("flux vector longer than rank".into()));
    }
    let mut flux = Vec::with_capacity(nflux);
    for _ in 0..nflux {
        flux.push(r.u64()? as i64);
    }
    let nsites = n * n;
    let links_x = r.field(nsites, rank)?;
    let links_y = r.field(nsites, rank)?;
    let a_field = r.field(nsites, rank)?;
    let phi_field = r.field(nsites, rank)?;
    let s_field = r.field(nsites, rank)?;
    if r.pos != bytes.len() {
        return Err(HelabError::Format("trailing bytes in checkpoint".into()));
    }
    Ok(Checkpoint {
        n,
        tau,
        bundle: HiggsBundle {
            rank,
            flux,
            links_x,
            links_y,
            a_field,
            phi_field,
        },
        s_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::make_background;
    use crate::solver::{SolverConfig, continuity_sweep, geometric_schedule};
    use crate::stability::semistable_verdict;
    use crate::torus::{WeightSpec, make_grid};

    fn small_sweep() -> (crate::solver::Problem, SweepReport, Vec<HermitianState>) {
        let (g, m) = make_grid(16, C64::new(0.0, 1.0), &WeightSpec::Uniform).unwrap();
        let mut b = make_background(&g, 2, &[0, 0]).unwrap();
        b.phi_field = vec![SmallMat::unit(2, 0, 1); g.nsites()];
        let p = crate::solver::Problem::new(b, g, m).unwrap();
        let cfg = SolverConfig {
            eps_schedule: geometric_schedule(1.0, 1e-3, 5),
            ..SolverConfig::default()
        };
        let (rep, states) = continuity_sweep(&p, &cfg).unwrap();
        (p, rep, states)
    }

    #[test]
    fn csv_layout_and_determinism() {
        let (_, rep, _) = small_sweep();
        let a = sweep_csv(&rep);
        let mut lines = a.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(a.lines().count(), 1 + rep.rows.len());
        let (_, rep2, _) = small_sweep();
        assert_eq!(a.as_bytes(), sweep_csv(&rep2).as_bytes());
    }

    #[test]
    fn json_schema_fields() {
        let (p, rep, states) = small_sweep();
        let v = semistable_verdict(&p, &rep, &states, None).unwrap();
        let j = json_report("E2", "deadbeef", &rep, &v);
        assert_eq!(j["schema_version"], "v1");
        assert_eq!(j["scenario"], "E2");
        assert_eq!(j["config_hash"], "deadbeef");
        assert_eq!(j["rows"].as_array().unwrap().len(), rep.rows.len());
        assert_eq!(j["verdict"], "semistable");
        let text = serde_json::to_string(&j).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (p, _, states) = small_sweep();
        let bytes = write_checkpoint(&p.bundle, states.last().unwrap(), p.grid.n, p.grid.tau);
        let ck = read_checkpoint(&bytes).unwrap();
        assert_eq!(ck.n, p.grid.n);
        assert_eq!(ck.bundle.flux, p.bundle.flux);
        for (a, b) in ck.s_field.iter().zip(states.last().unwrap().s_field.iter()) {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(a[(i, j)].re.to_bits(), b[(i, j)].re.to_bits());
                    assert_eq!(a[(i, j)].im.to_bits(), b[(i, j)].im.to_bits());
                }
            }
        }
        let again = write_checkpoint(&ck.bundle, &HermitianState::from_s(ck.s_field).unwrap(), ck.n, ck.tau);
        assert_eq!(bytes, again);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let (p, _, states) = small_sweep();
        let mut bytes = write_checkpoint(&p.bundle, states.last().unwrap(), p.grid.n, p.grid.tau);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(read_checkpoint(&bytes).is_err());
        let mut short = write_checkpoint(&p.bundle, states.last().unwrap(), p.grid.n, p.grid.tau);
        short.push(0);
        assert!(read_checkpoint(&short).is_err());
    }
}
