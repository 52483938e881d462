//! Hermitian functional calculus on small fibers.
//!
//! Carries the scalar maps g(eta), the two-variable maps Psi(eta)(A), the
//! smoothed step functions P_alpha and their difference quotients dP_alpha,
//! spectral projections, and the algebraic identities the destabilizer
//! construction rests on.

use crate::error::{HelabError, Result};
use crate::matrix::{dexp_block_oracle, eig_herm, C64, HermEigen, SmallMat};

/// Eigen-decomposition with Hermitian-input validation.
pub fn herm_eigen(eta: &SmallMat) -> Result<HermEigen> {
    if !eta.is_hermitian(1e-10) {
        return Err(HelabError::Domain(format!(
            "matrix is not Hermitian: deviation {:.3e}",
            eta.herm_deviation()
        )));
    }
    Ok(eig_herm(eta))
}

/// g applied to eta in its eigenframe.
pub fn apply_fn(eta: &SmallMat, g: impl Fn(f64) -> f64) -> Result<SmallMat> {
    Ok(herm_eigen(eta)?.apply(g))
}

/// Matrix logarithm of a positive-definite Hermitian matrix.
pub fn log_herm(f: &SmallMat) -> Result<SmallMat> {
    let e = herm_eigen(f)?;
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(HelabError::Domain(format!(
            "log of a non-positive-definite matrix (min eigenvalue {:.3e})",
            e.eigenvalues[0]
        )));
    }
    Ok(e.apply(f64::ln))
}

/// Psi(eta)(A): entry (a, b) of A in eta's eigenframe is multiplied by
/// Psi(lambda_a, lambda_b), then transformed back. Linear in A; Psi == 1 is
/// the identity.
pub fn apply_bifn(eta: &SmallMat, a: &SmallMat, psi: impl Fn(f64, f64) -> f64) -> Result<SmallMat> {
    let e = herm_eigen(eta)?;
    let u = &e.eigenvectors;
    let tilde = u.dagger().mul(a).mul(u);
    let n = a.n;
    let mut scaled = SmallMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] = tilde[(i, j)] * psi(e.eigenvalues[i], e.eigenvalues[j]);
        }
    }
    Ok(u.mul(&scaled).mul(&u.dagger()))
}

/// The quadratic pairing sum_{a,b} Psi(lambda_b, lambda_a) |A~_{ab}|^2 in the
/// eigenframe of a precomputed decomposition. This is the index order under
/// which the pairing reproduces Tr sqrt(-1) Lambda { f^{-1} D' f wedge D'' s }.
pub fn psi_quadratic(eig: &HermEigen, a: &SmallMat, psi: impl Fn(f64, f64) -> f64) -> f64 {
    let u = &eig.eigenvectors;
    let tilde = u.dagger().mul(a).mul(u);
    let n = a.n;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += psi(eig.eigenvalues[j], eig.eigenvalues[i]) * tilde[(i, j)].norm_sqr();
        }
    }
    acc
}

/// Psi(x, y) = (e^{y-x} - 1) / (y - x), with value 1 on the diagonal.
/// Strictly positive; evaluated through expm1 so the removable singularity
/// costs no accuracy.
pub fn simpson_psi(x: f64, y: f64) -> f64 {
    let t = y - x;
    if t == 0.0 {
        1.0
    } else {
        t.exp_m1() / t
    }
}

/// Saturation cap for l Psi(lx, ly); beyond exp(700) the closed form
/// overflows f64.
pub const SCALED_PSI_CAP: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledPsi {
    pub value: f64,
    pub saturated: bool,
}

/// l Psi(lx, ly): equals l on the diagonal, (e^{l(y-x)} - 1)/(y - x)
/// otherwise; nondecreasing in l and converging to (x-y)^{-1} for x > y.
pub fn scaled_psi(l: f64, x: f64, y: f64) -> ScaledPsi {
    assert!(l > 0.0, "scaled_psi needs l > 0");
    let t = y - x;
    if t == 0.0 {
        return ScaledPsi {
            value: l,
            saturated: false,
        };
    }
    let e = l * t;
    if e > 700.0 {
        return ScaledPsi {
            value: SCALED_PSI_CAP,
            saturated: true,
        };
    }
    ScaledPsi {
        value: e.exp_m1() / t,
        saturated: false,
    }
}

/// Smoothed step family: P_alpha = 1 below mu_alpha, 0 above mu_{alpha+1},
/// with a cubic smoothstep in between. Thresholds are the distinct plateau
/// values mu_1 < ... < mu_l.
#[derive(Clone, Debug)]
pub struct StepSpec {
    pub thresholds: Vec<f64>,
}

impl StepSpec {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() < 2 {
            return Err(HelabError::Domain(
                "step spec needs at least two thresholds".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HelabError::Domain(
                "step spec thresholds must be strictly increasing".into(),
            ));
        }
        Ok(StepSpec { thresholds })
    }

    /// Number of step functions, l - 1.
    pub fn count(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn p_alpha(&self, alpha: usize, x: f64) -> f64 {
        let lo = self.thresholds[alpha];
        let hi = self.thresholds[alpha + 1];
        if x <= lo {
            1.0
        } else if x >= hi {
            0.0
        } else {
            let t = (x - lo) / (hi - lo);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    pub fn p_alpha_prime(&self, alpha: usize, x: f64) -> f64 {
        let lo = self.thresholds[alpha];
        let hi = self.thresholds[alpha + 1];
        if x <= lo || x >= hi {
            0.0
        } else {
            let t = (x - lo) / (hi - lo);
            -6.0 * t * (1.0 - t) / (hi - lo)
        }
    }

    /// Difference quotient of P_alpha; P_alpha' on the diagonal. Symmetric in
    /// (x, y) and bounded by sup |P_alpha'|.
    pub fn dp_alpha(&self, alpha: usize, x: f64, y: f64) -> f64 {
        if x == y {
            self.p_alpha_prime(alpha, x)
        } else {
            (self.p_alpha(alpha, x) - self.p_alpha(alpha, y)) / (x - y)
        }
    }
}

/// Left side of the step-function sum rule
/// sum_alpha (mu_{alpha+1} - mu_alpha) dP_alpha(mu_beta, mu_gamma)^2,
/// which must equal |mu_beta - mu_gamma|^{-1}. Indices are 0-based.
pub fn sum_rule_check(mus: &[f64], beta: usize, gamma: usize) -> Result<f64> {
    if beta == gamma {
        return Err(HelabError::Domain(
            "sum rule is undefined for beta == gamma".into(),
        ));
    }
    let spec = StepSpec::new(mus.to_vec())?;
    let mut acc = 0.0;
    for alpha in 0..spec.count() {
        let gap = mus[alpha + 1] - mus[alpha];
        let d = spec.dp_alpha(alpha, mus[beta], mus[gamma]);
        acc += gap * d * d;
    }
    Ok(acc)
}

/// Spectral projections onto eigenvalues <= threshold, one per threshold.
/// Thresholds must clear every eigenvalue by at least gap_min.
pub fn projections_from(
    u: &SmallMat,
    thresholds: &[f64],
    gap_min: f64,
) -> Result<Vec<SmallMat>> {
    let e = herm_eigen(u)?;
    let n = u.n;
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        if let Some(&nearest) = e
            .eigenvalues
            .iter()
            .filter(|l| (**l - t).abs() < gap_min)
            .next()
        {
            return Err(HelabError::ThresholdInCluster {
                threshold: t,
                nearest,
            });
        }
        let mut p = SmallMat::zeros(n);
        for (a, &l) in e.eigenvalues.iter().enumerate() {
            if l <= t {
                for i in 0..n {
                    for j in 0..n {
                        p[(i, j)] +=
                            e.eigenvectors[(i, a)] * e.eigenvectors[(j, a)].conj();
                    }
                }
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Entrywise divided difference of exp in the eigenframe: the exact derivative
/// of the matrix exponential along the main functional-calculus path.
pub fn dexp_bifn(s: &SmallMat, ds: &SmallMat) -> Result<SmallMat> {
    // (e^x - e^y)/(x - y) = e^y Psi(y, x).
    apply_bifn(s, ds, |x, y| {
        if x == y {
            x.exp()
        } else {
            (x.exp() - y.exp()) / (x - y)
        }
    })
}

#[derive(Clone, Copy, Debug)]
pub struct TraceIdentityReport {
    /// |Tr(f^{-1} Dexp_s[ds] s) - Tr(s ds)| with the divided-difference Dexp.
    pub residual: f64,
    /// Same with the block-triangular exponential oracle for Dexp.
    pub residual_block_oracle: f64,
}

/// The trace identity Tr(f^{-1} (d f) s) = Tr(s ds) for f = exp(s), checked
/// along two independent derivative-of-exponential routes.
pub fn trace_identity_check(s: &SmallMat, ds: &SmallMat) -> Result<TraceIdentityReport> {
    if !ds.is_hermitian(1e-10) {
        return Err(HelabError::Domain("ds must be Hermitian".into()));
    }
    let e = herm_eigen(s)?;
    let f_inv = e.apply(|x| (-x).exp());
    let rhs = s.mul(ds).trace();
    let lhs_a = f_inv.mul(&dexp_bifn(s, ds)?).mul(s).trace();
    let lhs_b = f_inv.mul(&dexp_block_oracle(s, ds)).mul(s).trace();
    Ok(TraceIdentityReport {
        residual: (lhs_a - rhs).norm(),
        residual_block_oracle: (lhs_b - rhs).norm(),
    })
}

/// Synthetic eigenframe data at one point: eigenvalues of s, their
/// (1,0)-derivatives, the (1,0) connection coefficient in the unitary frame,
/// and the Higgs coefficient.
#[derive(Clone, Debug)]
pub struct FramePoint {
    pub lambdas: Vec<f64>,
    /// partial(lambda_a); dbar(lambda_a) is its conjugate.
    pub dlambda: Vec<C64>,
    /// theta[(a,b)]: coefficient of dz in the connection, unitary frame; the
    /// (0,1) coefficient is -theta^dagger.
    pub theta: SmallMat,
    pub phi: SmallMat,
}

/// Both sides of the pointwise identity
/// Tr sqrt(-1) Lambda { f^{-1} D' f wedge D'' s } = < Psi(s)(D'' s), D'' s >,
/// evaluated from the frame formulas with f = exp(s).
pub fn pointwise_identity_check(fp: &FramePoint) -> (f64, f64) {
    let n = fp.lambdas.len();
    let s = SmallMat::diag_re(&fp.lambdas);
    let f = SmallMat::from_fn(n, |i, j| {
        if i == j {
            C64::new(fp.lambdas[i].exp(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let f_inv = SmallMat::from_fn(n, |i, j| {
        if i == j {
            C64::new((-fp.lambdas[i]).exp(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let theta_m = fp.theta.dagger().scale_re(-1.0);

    // (1,0) coefficient of partial_{H_0} f and (0,1) coefficient of dbar_E s.
    let mut df = fp.theta.commutator(&f);
    let mut dbar_s = theta_m.commutator(&s);
    for a in 0..n {
        df[(a, a)] += C64::new(fp.lambdas[a].exp(), 0.0) * fp.dlambda[a];
        dbar_s[(a, a)] += fp.dlambda[a].conj();
    }
    // Higgs components of D' f and D'' s.
    let phi_dag_f = fp.phi.dagger().commutator(&f);
    let phi_s = fp.phi.commutator(&s);

    // dz wedge dzbar contracts to +1 here, dzbar wedge dz to -1.
    let lhs = (f_inv.mul(&df).mul(&dbar_s).trace()
        - f_inv.mul(&phi_dag_f).mul(&phi_s).trace())
    .re;

    let eig = eig_herm(&s);
    let rhs = psi_quadratic(&eig, &dbar_s, simpson_psi) + psi_quadratic(&eig, &phi_s, simpson_psi);
    (lhs, rhs)
}
