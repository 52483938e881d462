//! Small dense complex matrices with a branch-deterministic Hermitian
//! eigensolver.
//!
//! Everything in the lab lives on fibers of rank <= 4, so matrices are stored
//! inline with a fixed capacity. Capacity 8 leaves room for the block
//! exponential used as an independent derivative-of-exp oracle.

use num_complex::Complex64;

pub const MAX_DIM: usize = 8;

pub type C64 = Complex64;

pub const C_ZERO: C64 = Complex64::new(0.0, 0.0);
pub const C_ONE: C64 = Complex64::new(1.0, 0.0);
pub const C_I: C64 = Complex64::new(0.0, 1.0);

/// Dense `n x n` complex matrix, `n <= MAX_DIM`, stored row-major inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallMat {
    pub n: usize,
    d: [C64; MAX_DIM * MAX_DIM],
}

impl SmallMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "matrix dimension {n} out of range");
        SmallMat {
            n,
            d: [C_ZERO; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diag_re(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        for (i, x) in v.iter().enumerate() {
            m[(i, i)] = C64::new(*x, 0.0);
        }
        m
    }

    /// Rank-one e_i e_j^* basis matrix.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m[(i, j)] = C_ONE;
        m
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut m = *self;
        for i in 0..self.n * MAX_DIM {
            m.d[i] *= c;
        }
        m
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.n, o.n);
        let mut m = *self;
        for i in 0..self.n * MAX_DIM {
            m.d[i] += o.d[i];
        }
        m
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.n, o.n);
        let mut m = *self;
        for i in 0..self.n * MAX_DIM {
            m.d[i] -= o.d[i];
        }
        m
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.n, o.n);
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C_ZERO {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] += a * o[(k, j)];
                }
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn commutator(&self, o: &Self) -> Self {
        self.mul(o).sub(&o.mul(self))
    }

    /// Hilbert-Schmidt pairing tr(A^dagger B).
    pub fn hs_dot(&self, o: &Self) -> C64 {
        let mut s = C_ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self[(i, j)].conj() * o[(i, j)];
            }
        }
        s
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.hs_dot(self).re.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self[(i, j)].norm());
            }
        }
        m
    }

    pub fn herm_part(&self) -> Self {
        self.add(&self.dagger()).scale_re(0.5)
    }

    pub fn herm_deviation(&self) -> f64 {
        self.sub(&self.dagger()).norm() * 0.5
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.herm_deviation() <= tol * (1.0 + self.norm())
    }

    /// Conjugation g . self . g^dagger.
    pub fn conjugate_by(&self, g: &Self) -> Self {
        g.mul(self).mul(&g.dagger())
    }

    pub fn det(&self) -> C64 {
        // LU with partial pivoting on a copy; n <= 8 so this is cheap.
        let n = self.n;
        let mut a = *self;
        let mut det = C_ONE;
        for col in 0..n {
            let mut piv = col;
            let mut best = a[(col, col)].norm();
            for r in col + 1..n {
                if a[(r, col)].norm() > best {
                    best = a[(r, col)].norm();
                    piv = r;
                }
            }
            if best == 0.0 {
                return C_ZERO;
            }
            if piv != col {
                for j in 0..n {
                    let t = a[(col, j)];
                    a[(col, j)] = a[(piv, j)];
                    a[(piv, j)] = t;
                }
                det = -det;
            }
            det *= a[(col, col)];
            for r in col + 1..n {
                let fac = a[(r, col)] / a[(col, col)];
                for j in col..n {
                    let sub = fac * a[(col, j)];
                    a[(r, j)] -= sub;
                }
            }
        }
        det
    }
}

impl std::ops::Index<(usize, usize)> for SmallMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.d[i * MAX_DIM + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SmallMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.d[i * MAX_DIM + j]
    }
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and
/// the unitary matrix of eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: SmallMat,
}

impl HermEigen {
    /// E diag(g(lambda)) E^dagger.
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> SmallMat {
        let n = self.eigenvalues.len();
        let e = &self.eigenvectors;
        let mut m = SmallMat::zeros(n);
        for a in 0..n {
            let ga = g(self.eigenvalues[a]);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += e[(i, a)] * e[(j, a)].conj() * ga;
                }
            }
        }
        m
    }

    pub fn reconstruct(&self) -> SmallMat {
        self.apply(|x| x)
    }
}

/// Cyclic Jacobi diagonalization for complex Hermitian matrices.
///
/// Deterministic sweep order (p < q lexicographic), eigenvalues sorted
/// ascending with a stable tie-break on the original index, so repeated calls
/// on equal input are bit-identical.
pub fn eig_herm(m: &SmallMat) -> HermEigen {
    let n = m.n;
    let mut a = m.herm_part();
    let mut v = SmallMat::identity(n);
    let scale = a.norm().max(1.0);

    for _sweep in 0..50 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let w = apq / mag;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (tau * tau + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Right-multiply A and V by R, left-multiply A by R^dagger,
                // where R is the identity outside rows/cols {p,q} and
                // R[[p,q],[p,q]] = [[c, s w], [-s conj(w), c]].
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * s * w.conj();
                    a[(i, q)] = aip * s * w + aiq * c;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * s * w;
                    a[(q, j)] = apj * s * w.conj() + aqj * c;
                }
                a[(p, q)] = C_ZERO;
                a[(q, p)] = C_ZERO;
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * s * w.conj();
                    v[(i, q)] = vip * s * w + viq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .re
            .partial_cmp(&a[(j, j)].re)
            .unwrap()
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = SmallMat::from_fn(n, |i, j| v[(i, order[j])]);
    HermEigen {
        eigenvalues,
        eigenvectors,
    }
}

/// exp of a Hermitian matrix through its eigen-decomposition.
pub fn exp_herm(m: &SmallMat) -> SmallMat {
    eig_herm(m).apply(f64::exp)
}

/// General matrix exponential by scaling-and-squaring with a Taylor series.
///
/// Not restricted to Hermitian input; this is the independent route behind the
/// derivative-of-exponential oracle.
pub fn expm_general(m: &SmallMat) -> SmallMat {
    let n = m.n;
    let norm = m.norm();
    let k = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let a = m.scale_re(1.0 / f64::powi(2.0, k as i32));
    let mut term = SmallMat::identity(n);
    let mut sum = SmallMat::identity(n);
    for j in 1..=30 {
        term = term.mul(&a).scale_re(1.0 / j as f64);
        sum = sum.add(&term);
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    let mut r = sum;
    for _ in 0..k {
        r = r.mul(&r);
    }
    r
}

/// Derivative of the matrix exponential at `s` in direction `ds`, computed by
/// the 2n x 2n block-triangular exponential: the (0,1) block of
/// exp([[s, ds], [0, s]]).
pub fn dexp_block_oracle(s: &SmallMat, ds: &SmallMat) -> SmallMat {
    let n = s.n;
    assert!(2 * n <= MAX_DIM);
    let mut b = SmallMat::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = s[(i, j)];
            b[(n + i, n + j)] = s[(i, j)];
            b[(i, n + j)] = ds[(i, j)];
        }
    }
    let e = expm_general(&b);
    SmallMat::from_fn(n, |i, j| e[(i, n + j)])
}
