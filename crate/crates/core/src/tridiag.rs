//! Tridiagonal kernels: LU with partial pivoting (the `gttrf`/`gtts2` pair)
//! and Sturm-sequence counting for symmetric pencils `A - x B` with diagonal
//! positive `B`.

/// A general tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone)]
pub(crate) struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

/// LU factors of a [`Tridiag`] with row interchanges.
#[derive(Debug, Clone)]
pub(crate) struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl Tridiag {
    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len());
        Self {
            lower: off.clone(),
            diag,
            upper: off,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Returns `None` when an exactly zero pivot shows up.
    pub fn factor(&self) -> Option<TridiagLu> {
        let n = self.len();
        let mut dl = self.lower.clone();
        let mut d = self.diag.clone();
        let mut du = self.upper.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return None;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if n == 0 || d[n - 1] == 0.0 || d.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(TridiagLu {
            dl,
            d,
            du,
            du2,
            swapped,
        })
    }
}

impl TridiagLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Number of eigenvalues of the pencil `(A, B)` strictly below `x`, where `A`
/// is symmetric tridiagonal (`diag`, `off`) and `B = diag(weight) > 0`.
/// By Sylvester's law of inertia this is the number of negative pivots of the
/// `LDLᵀ` factorization of `A - x B`.
pub(crate) fn sturm_count(diag: &[f64], off: &[f64], weight: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut pivot = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 {
            0.0
        } else {
            off[i - 1] * off[i - 1] / pivot
        };
        pivot = diag[i] - x * weight[i] - coupling;
        if pivot == 0.0 {
            pivot = -f64::EPSILON * (diag[i].abs() + x.abs() * weight[i]).max(f64::MIN_POSITIVE);
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin enclosure of the spectrum of `B^{-1/2} A B^{-1/2}`.
pub(crate) fn gershgorin(diag: &[f64], off: &[f64], weight: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let c = diag[i] / weight[i];
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs() / (weight[i] * weight[i - 1]).sqrt();
        }
        if i + 1 < n {
            r += off[i].abs() / (weight[i] * weight[i + 1]).sqrt();
        }
        lo = lo.min(c - r);
        hi = hi.max(c + r);
    }
    (lo, hi)
}

/// The `k`-th (1-based) smallest eigenvalue of the pencil by bisection on the
/// Sturm count.
pub(crate) fn kth_eigenvalue(
    diag: &[f64],
    off: &[f64],
    weight: &[f64],
    k: usize,
    rel_tol: f64,
) -> f64 {
    let (mut lo, mut hi) = gershgorin(diag, off, weight);
    let pad = 1e-12 * (lo.abs() + hi.abs()) + 1e-300;
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, weight, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
