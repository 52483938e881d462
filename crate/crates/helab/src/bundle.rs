//! Higgs bundles as lattice data.
//!
//! A bundle of rank r and degree d over the discretized torus is a unitary
//! link field (one r x r unitary per site per axis) whose plaquette phases
//! carry the flux, together with a (0,1) perturbation a of the dbar-operator
//! and a (1,0) Higgs field phi. The background frame is unitary for the
//! reference metric H_0, so H_0 is the identity per site and adjoints *H_0
//! are plain conjugate transposes; a metric is the positive endomorphism
//! f = exp(s) with H = H_0 f.
//!
//! Degree is topological here: the mean curvature assembles from the
//! plaquette logarithm plus centered covariant differences, and the integral
//! of Tr K telescopes to 2 pi sum(flux) exactly, independent of the state.

use crate::error::{HelabError, Result};
use crate::matrix::{C64, C_ONE, SmallMat, eig_herm};
use crate::torus::{ConformalMetric, TorusGrid};

/// One small matrix per site, layout i + N j like scalar fields.
pub type EndField = Vec<SmallMat>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormType {
    Scalar,
    OneZero,
    ZeroOne,
    OneOne,
}

#[derive(Clone, Debug)]
pub struct HiggsBundle {
    pub rank: usize,
    /// One integer per diagonal background block (1 x 1 blocks, padded with
    /// zero-flux entries up to the rank). Sums to deg E.
    pub flux: Vec<i64>,
    pub links_x: Vec<SmallMat>,
    pub links_y: Vec<SmallMat>,
    /// (0,1) coefficient of the dbar-perturbation.
    pub a_field: EndField,
    /// (1,0) coefficient of the Higgs field.
    pub phi_field: EndField,
}

impl HiggsBundle {
    pub fn degree(&self) -> i64 {
        self.flux.iter().sum()
    }

    /// Einstein constant: lambda = 2 pi deg / (rank Vol).
    pub fn einstein_constant(&self, metric: &ConformalMetric) -> f64 {
        2.0 * std::f64::consts::PI * self.degree() as f64
            / (self.rank as f64 * metric.volume)
    }
}

/// Metric state relative to the background: s Hermitian per site, with the
/// exponential family cached from one eigen-decomposition per site.
#[derive(Clone, Debug)]
pub struct HermitianState {
    pub s_field: EndField,
    pub f_field: EndField,
    pub f_inv: EndField,
    pub f_half: EndField,
    pub f_inv_half: EndField,
}

impl HermitianState {
    pub fn from_s(s_field: EndField) -> Result<Self> {
        let n = s_field.len();
        let mut f_field = Vec::with_capacity(n);
        let mut f_inv = Vec::with_capacity(n);
        let mut f_half = Vec::with_capacity(n);
        let mut f_inv_half = Vec::with_capacity(n);
        for (site, s) in s_field.iter().enumerate() {
            let mag = s.max_abs();
            if !mag.is_finite() || mag > 350.0 {
                // exp(s) would overflow or lose all precision in f64; the
                // metric has degenerated beyond representable range.
                return Err(HelabError::State(format!(
                    "metric exponent overflow at site {site} (max |s| = {mag:.3e})"
                )));
            }
            if !s.is_hermitian(1e-12) {
                return Err(HelabError::State(format!(
                    "s is not Hermitian at site {site} (deviation {:.3e})",
                    s.herm_deviation()
                )));
            }
            let e = eig_herm(&s.herm_part());
            f_field.push(e.apply(f64::exp));
            f_inv.push(e.apply(|x| (-x).exp()));
            f_half.push(e.apply(|x| (0.5 * x).exp()));
            f_inv_half.push(e.apply(|x| (-0.5 * x).exp()));
        }
        Ok(HermitianState {
            s_field,
            f_field,
            f_inv,
            f_half,
            f_inv_half,
        })
    }

    pub fn identity(rank: usize, nsites: usize) -> Self {
        Self::from_s(vec![SmallMat::zeros(rank); nsites]).unwrap()
    }

    /// Frobenius norm of f^{1/2} A f^{-1/2}: the endomorphism norm induced by
    /// H = H_0 f at one site.
    pub fn h_norm_at(&self, site: usize, a: &SmallMat) -> f64 {
        self.f_half[site].mul(a).mul(&self.f_inv_half[site]).norm()
    }

    /// H-self-adjointness deviation of a scalar endomorphism field:
    /// max-norm of the anti-Hermitian part of f^{1/2} A f^{-1/2}.
    pub fn h_herm_deviation(&self, field: &EndField) -> f64 {
        field
            .iter()
            .enumerate()
            .map(|(s, a)| {
                self.f_half[s]
                    .mul(a)
                    .mul(&self.f_inv_half[s])
                    .herm_deviation()
            })
            .fold(0.0, f64::max)
    }
}

pub fn max_site_norm(field: &EndField) -> f64 {
    field.iter().map(SmallMat::norm).fold(0.0, f64::max)
}

/// L2 norm of a scalar endomorphism field against omega.
pub fn l2_end_norm(field: &EndField, grid: &TorusGrid, metric: &ConformalMetric) -> f64 {
    let mut acc = 0.0;
    for (a, w) in field.iter().zip(metric.weight.iter()) {
        acc += a.norm() * a.norm() * w * grid.cell_area;
    }
    acc.sqrt()
}

/// Constant-flux background: diagonal 1 x 1 blocks, block b carrying uniform
/// plaquette phase -2 pi flux_b / N^2 (curvature +2 pi flux_b / Vol). a = 0,
/// phi = 0.
pub fn make_background(grid: &TorusGrid, rank: usize, flux: &[i64]) -> Result<HiggsBundle> {
    if rank < 1 || rank > crate::matrix::MAX_DIM {
        return Err(HelabError::Config(format!("rank {rank} out of range")));
    }
    if flux.len() > rank {
        return Err(HelabError::Config(format!(
            "{} flux entries for rank {rank}",
            flux.len()
        )));
    }
    let mut padded = flux.to_vec();
    padded.resize(rank, 0);
    let n = grid.n;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut links_x = Vec::with_capacity(grid.nsites());
    let mut links_y = Vec::with_capacity(grid.nsites());
    for site in 0..grid.nsites() {
        let i = site % n;
        let j = site / n;
        links_x.push(SmallMat::from_fn(rank, |p, q| {
            if p != q {
                return C64::new(0.0, 0.0);
            }
            let phase = two_pi * padded[p] as f64 * j as f64 / (n * n) as f64;
            C64::new(0.0, phase).exp()
        }));
        links_y.push(SmallMat::from_fn(rank, |p, q| {
            if p != q {
                return C64::new(0.0, 0.0);
            }
            let phase = if j == n - 1 {
                -two_pi * padded[p] as f64 * i as f64 / n as f64
            } else {
                0.0
            };
            C64::new(0.0, phase).exp()
        }));
    }
    Ok(HiggsBundle {
        rank,
        flux: padded,
        links_x,
        links_y,
        a_field: vec![SmallMat::zeros(rank); grid.nsites()],
        phi_field: vec![SmallMat::zeros(rank); grid.nsites()],
    })
}

pub(crate) fn site_shift(grid: &TorusGrid, site: usize, di: i64, dj: i64) -> usize {
    let n = grid.n as i64;
    let i = (site % grid.n) as i64;
    let j = (site / grid.n) as i64;
    let ii = (i + di).rem_euclid(n) as usize;
    let jj = (j + dj).rem_euclid(n) as usize;
    ii + grid.n * jj
}

/// Centered link-covariant difference along one lattice axis, O(h^2).
fn covariant_axis_diff(
    field: &EndField,
    links: &[SmallMat],
    grid: &TorusGrid,
    axis_x: bool,
) -> EndField {
    let (di, dj) = if axis_x { (1, 0) } else { (0, 1) };
    let scale = grid.n as f64 / 2.0;
    (0..grid.nsites())
        .map(|s| {
            let fwd = site_shift(grid, s, di, dj);
            let bwd = site_shift(grid, s, -di, -dj);
            let up = field[fwd].conjugate_by(&links[s]);
            let down = links[bwd].dagger().mul(&field[bwd]).mul(&links[bwd]);
            up.sub(&down).scale_re(scale)
        })
        .collect()
}

/// Link-covariant partial and partial-bar (background connection only, no
/// a-terms): the complex combinations of the axis stencils fixed by
/// z = x + tau y.
pub fn covariant_partials(
    field: &EndField,
    bundle: &HiggsBundle,
    grid: &TorusGrid,
) -> (EndField, EndField) {
    let dx = covariant_axis_diff(field, &bundle.links_x, grid, true);
    let dy = covariant_axis_diff(field, &bundle.links_y, grid, false);
    let denom = grid.tau.conj() - grid.tau;
    let mut p = Vec::with_capacity(field.len());
    let mut pb = Vec::with_capacity(field.len());
    for s in 0..field.len() {
        p.push(
            dx[s]
                .scale(grid.tau.conj() / denom)
                .add(&dy[s].scale(-C_ONE / denom)),
        );
        pb.push(
            dy[s]
                .scale(C_ONE / denom)
                .add(&dx[s].scale(-grid.tau / denom)),
        );
    }
    (p, pb)
}

/// dbar_E on endomorphism fields: covariant stencil plus [a, .].
pub fn dbar_e(field: &EndField, bundle: &HiggsBundle, grid: &TorusGrid) -> EndField {
    let (_, mut pb) = covariant_partials(field, bundle, grid);
    for s in 0..field.len() {
        pb[s] = pb[s].add(&bundle.a_field[s].commutator(&field[s]));
    }
    pb
}

/// (1,0) Chern derivative of H_0 on endomorphism fields: covariant stencil
/// minus [a^dagger, .].
pub fn partial_e0(field: &EndField, bundle: &HiggsBundle, grid: &TorusGrid) -> EndField {
    let (mut p, _) = covariant_partials(field, bundle, grid);
    for s in 0..field.len() {
        p[s] = p[s].sub(&bundle.a_field[s].dagger().commutator(&field[s]));
    }
    p
}

/// Max-norm of dbar_E phi; the configuration is a Higgs bundle iff this is
/// below 1e-8 (1 + max |phi|).
pub fn validate_higgs(bundle: &HiggsBundle, grid: &TorusGrid) -> Result<f64> {
    let resid = max_site_norm(&dbar_e(&bundle.phi_field, bundle, grid));
    let tol = 1e-8 * (1.0 + max_site_norm(&bundle.phi_field));
    if resid > tol {
        return Err(HelabError::NotAHiggsBundle {
            residual: resid,
            tol,
        });
    }
    Ok(resid)
}

/// phi^{*H} = f^{-1} phi^dagger f per site ((0,1)-form coefficient).
pub fn adjoint_phi(bundle: &HiggsBundle, state: &HermitianState) -> EndField {
    (0..bundle.phi_field.len())
        .map(|s| {
            state.f_inv[s]
                .mul(&bundle.phi_field[s].dagger())
                .mul(&state.f_field[s])
        })
        .collect()
}

/// Hermitian logarithm of a unitary near the identity: theta with
/// U = exp(i theta), from the principal log series.
fn herm_log_unitary(u: &SmallMat) -> Result<SmallMat> {
    let x = u.sub(&SmallMat::identity(u.n));
    if x.norm() > 0.9 {
        return Err(HelabError::State(format!(
            "plaquette too far from identity (|U - I| = {:.3e}); grid too coarse for this flux",
            x.norm()
        )));
    }
    let mut term = x;
    let mut log = SmallMat::zeros(u.n);
    for k in 1..60 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        log = log.add(&term.scale_re(sign / k as f64));
        term = term.mul(&x);
        if term.norm() < 1e-17 {
            break;
        }
    }
    // theta = -i log U, hermitized against round-off.
    Ok(log.scale(C64::new(0.0, -1.0)).herm_part())
}

/// Mean curvature K_H = sqrt(-1) Lambda_omega (F_H + [phi, phi^{*H}]).
///
/// Assembled as plaquette curvature of the links, plus the a-perturbation
/// terms, plus -2/w dbar_E(f^{-1} partial_{H_0} f), plus the Higgs
/// commutator, plus an optional scalar curvature shift (the conformal
/// normalization correction) times the identity. H-self-adjoint to O(h^2);
/// integrate(Tr K) = 2 pi deg E to round-off.
pub fn mean_curvature_k(
    bundle: &HiggsBundle,
    state: &HermitianState,
    grid: &TorusGrid,
    metric: &ConformalMetric,
    shift: Option<&[f64]>,
) -> Result<EndField> {
    let nsites = grid.nsites();
    // Background: -theta_plaquette / (w * cell area). The sign pairs with
    // the covariant-stencil commutator [partial_E, dbar_E] = -ad(F_xy)/(2 Im
    // tau), which the metric term needs for H-self-adjointness; flux d then
    // carries plaquette phase -2 pi d / N^2 and curvature +2 pi d / Vol.
    let mut k: EndField = Vec::with_capacity(nsites);
    for s in 0..nsites {
        let sx = site_shift(grid, s, 1, 0);
        let sy = site_shift(grid, s, 0, 1);
        let plaq = bundle.links_x[s]
            .mul(&bundle.links_y[sx])
            .mul(&bundle.links_x[sy].dagger())
            .mul(&bundle.links_y[s].dagger());
        let theta = herm_log_unitary(&plaq)?;
        k.push(theta.scale_re(-1.0 / (metric.weight[s] * grid.cell_area)));
    }
    // a-terms: 2(partial a + dbar a^dagger - [a^dagger, a]) / w.
    let (pa, _) = covariant_partials(&bundle.a_field, bundle, grid);
    let adag: EndField = bundle.a_field.iter().map(SmallMat::dagger).collect();
    let (_, pbad) = covariant_partials(&adag, bundle, grid);
    for s in 0..nsites {
        let comm = adag[s].commutator(&bundle.a_field[s]);
        k[s] = k[s].add(&pa[s].add(&pbad[s]).sub(&comm).scale_re(2.0 / metric.weight[s]));
    }
    // Metric term: -2/w dbar_E(f^{-1} partial_{H_0,E} f).
    let dpf = partial_e0(&state.f_field, bundle, grid);
    let g: EndField = (0..nsites).map(|s| state.f_inv[s].mul(&dpf[s])).collect();
    let dbg = dbar_e(&g, bundle, grid);
    // Constraint-compatible trace: the discrete stencil has no chain rule, so
    // tr of the metric block only approximates P(tr s). Pin it to P(tr s)
    // exactly (an O(h) scalar shift with exact zero integral); the traced
    // equation then matches the scalar Poisson identity and traceless s
    // stays traceless under Newton.
    let tr_s: Vec<C64> = state.s_field.iter().map(SmallMat::trace).collect();
    let p_tr = crate::torus::p_operator(&tr_s, grid, metric);
    let rk = bundle.rank as f64;
    for s in 0..nsites {
        let block = dbg[s].scale_re(-2.0 / metric.weight[s]);
        let corr = (p_tr[s].re - block.trace().re) / rk;
        k[s] = k[s]
            .add(&block)
            .add(&SmallMat::identity(bundle.rank).scale_re(corr));
    }
    // Higgs term: 2 [phi, phi^{*H}] / w.
    let psi = adjoint_phi(bundle, state);
    for s in 0..nsites {
        k[s] = k[s].add(
            &bundle.phi_field[s]
                .commutator(&psi[s])
                .scale_re(2.0 / metric.weight[s]),
        );
    }
    if let Some(sh) = shift {
        for s in 0..nsites {
            k[s] = k[s].add(&SmallMat::identity(bundle.rank).scale_re(sh[s]));
        }
    }
    Ok(k)
}

/// integrate(Tr K) / 2 pi: the degree read back from a curvature field.
pub fn degree_from_k(k: &EndField, grid: &TorusGrid, metric: &ConformalMetric) -> f64 {
    let tr: Vec<C64> = k.iter().map(SmallMat::trace).collect();
    crate::torus::integrate(&tr, grid, metric).re / (2.0 * std::f64::consts::PI)
}

/// D'' = dbar_E + [phi, .] on scalar endomorphism fields: the (0,1) and
/// (1,0) components, kept separate.
pub fn d_double_prime(
    field: &EndField,
    bundle: &HiggsBundle,
    grid: &TorusGrid,
) -> (EndField, EndField) {
    let db = dbar_e(field, bundle, grid);
    let higgs = (0..field.len())
        .map(|s| bundle.phi_field[s].commutator(&field[s]))
        .collect();
    (db, higgs)
}

/// D' = partial_{H_0} + [phi^{*H_0}, .]: the (1,0) and (0,1) components.
pub fn d_prime(
    field: &EndField,
    bundle: &HiggsBundle,
    grid: &TorusGrid,
) -> (EndField, EndField) {
    let p = partial_e0(field, bundle, grid);
    let higgs = (0..field.len())
        .map(|s| bundle.phi_field[s].dagger().commutator(&field[s]))
        .collect();
    (p, higgs)
}

/// L2 norm of a (1,0)- or (0,1)-form pair against omega; the pointwise norm
/// of a form alpha = u dz (or u dzbar) is 2 |u|^2 / w.
pub fn l2_form_norm_sq(
    parts: &[&EndField],
    grid: &TorusGrid,
    metric: &ConformalMetric,
) -> f64 {
    let mut acc = 0.0;
    for part in parts {
        for (a, w) in part.iter().zip(metric.weight.iter()) {
            acc += 2.0 * a.norm() * a.norm() / w * w * grid.cell_area;
        }
    }
    acc
}

/// Gauge transformation by a unitary field g: links conjugate across edges,
/// site fields conjugate in place.
pub fn gauge_transform(bundle: &HiggsBundle, g: &[SmallMat], grid: &TorusGrid) -> HiggsBundle {
    let nsites = grid.nsites();
    let mut out = bundle.clone();
    for s in 0..nsites {
        let sx = site_shift(grid, s, 1, 0);
        let sy = site_shift(grid, s, 0, 1);
        out.links_x[s] = g[s].mul(&bundle.links_x[s]).mul(&g[sx].dagger());
        out.links_y[s] = g[s].mul(&bundle.links_y[s]).mul(&g[sy].dagger());
        out.a_field[s] = bundle.a_field[s].conjugate_by(&g[s]);
        out.phi_field[s] = bundle.phi_field[s].conjugate_by(&g[s]);
    }
    out
}

/// Tensor by a flat line bundle with holonomies exp(i alpha), exp(i beta)
/// around the two cycles: every link picks up the 1/N-th root phase, the
/// plaquettes (hence flux and degree) are unchanged, and a nontrivial
/// holonomy moves the bundle to a different point of its degree class, where
/// degree-zero summands lose their covariantly constant sections.
pub fn twist_flat(bundle: &HiggsBundle, grid: &TorusGrid, alpha: f64, beta: f64) -> HiggsBundle {
    let px = C64::from_polar(1.0, alpha / grid.n as f64);
    let py = C64::from_polar(1.0, beta / grid.n as f64);
    let mut out = bundle.clone();
    for s in 0..grid.nsites() {
        out.links_x[s] = out.links_x[s].scale(px);
        out.links_y[s] = out.links_y[s].scale(py);
    }
    out
}

/// One-step parallel transport of an endomorphism field along a lattice
/// axis: the value at the neighbor, conjugated back through the link.
pub fn covariant_transport(
    field: &EndField,
    bundle: &HiggsBundle,
    grid: &TorusGrid,
    di: i64,
    dj: i64,
) -> EndField {
    (0..grid.nsites())
        .map(|s| {
            let t = site_shift(grid, s, di, dj);
            match (di, dj) {
                (1, 0) => field[t].conjugate_by(&bundle.links_x[s]),
                (-1, 0) => bundle.links_x[t].dagger().mul(&field[t]).mul(&bundle.links_x[t]),
                (0, 1) => field[t].conjugate_by(&bundle.links_y[s]),
                (0, -1) => bundle.links_y[t].dagger().mul(&field[t]).mul(&bundle.links_y[t]),
                _ => panic!("transport step must be one lattice unit"),
            }
        })
        .collect()
}

/// Jacobi-style covariant heat smoothing: damps components that are rough as
/// sections of End(E). Used to manufacture covariantly smooth test data on
/// twisted backgrounds, where fields smooth in the plain periodic frame are
/// not smooth sections across the holonomy seam.
pub fn covariant_smooth(
    field: &mut EndField,
    bundle: &HiggsBundle,
    grid: &TorusGrid,
    iters: usize,
) {
    for _ in 0..iters {
        let xp = covariant_transport(field, bundle, grid, 1, 0);
        let xm = covariant_transport(field, bundle, grid, -1, 0);
        let yp = covariant_transport(field, bundle, grid, 0, 1);
        let ym = covariant_transport(field, bundle, grid, 0, -1);
        for s in 0..field.len() {
            let avg = xp[s].add(&xm[s]).add(&yp[s]).add(&ym[s]).scale_re(0.25);
            field[s] = field[s].scale_re(0.2).add(&avg.scale_re(0.8));
        }
    }
}
