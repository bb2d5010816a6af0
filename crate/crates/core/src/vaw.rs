//! Transductive shrinkage leave-one-out for least squares.
//!
//! `beta_{-i} = A^+ sum_{j != i} x_j y_j` with the full-sample Gram matrix
//! `A = X^T X`, so only the linear term loses row `i`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{MlsaError, Result};

/// Tolerance for the per-instance pseudoinverse identity.
pub const PINV_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLooResult {
    pub beta_hat: DVector<f64>,
    /// Row `i` is `beta_{-i}`.
    pub beta_minus: DMatrix<f64>,
    pub leverages: Vec<f64>,
    pub loo_sq_sum: f64,
    pub fit_sq_sum: f64,
    pub m_sq: f64,
    pub rank: usize,
}

impl LinearLooResult {
    /// `2 * fit_sq_sum + 2 * m_sq * rank`.
    pub fn bound_rhs(&self) -> f64 {
        2.0 * self.fit_sq_sum + 2.0 * self.m_sq * self.rank as f64
    }

    pub fn bound_holds(&self, tol: f64) -> bool {
        self.loo_sq_sum <= self.bound_rhs() + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearLooSummary {
    pub n: usize,
    pub d: usize,
    pub rank: usize,
    pub loo_sq_sum: f64,
    pub fit_sq_sum: f64,
    pub m_sq: f64,
    pub bound: f64,
    pub leverage_sum: f64,
}

impl From<&LinearLooResult> for LinearLooSummary {
    fn from(r: &LinearLooResult) -> Self {
        Self {
            n: r.beta_minus.nrows(),
            d: r.beta_hat.len(),
            rank: r.rank,
            loo_sq_sum: r.loo_sq_sum,
            fit_sq_sum: r.fit_sq_sum,
            m_sq: r.m_sq,
            bound: r.bound_rhs(),
            leverage_sum: r.leverages.iter().sum(),
        }
    }
}

/// `100 * eps * max(n, d)`, relative to the largest singular value. The
/// factor clears the noise floor of singular values that are exactly zero.
pub fn default_svd_tol(n: usize, d: usize) -> f64 {
    100.0 * f64::EPSILON * n.max(d) as f64
}

fn check_design(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(MlsaError::Empty("design matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MlsaError::InvalidParameter("design matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Thin SVD of `X` with the numerical rank: singular values at or below
/// `svd_tol * sigma_max` count as zero. Returns `U`, `V` and the indices
/// of the retained singular values with their values.
fn thin_svd(x: &DMatrix<f64>, svd_tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<(usize, f64)>)> {
    check_design(x)?;
    let (n, d) = x.shape();
    let svd = faer::Mat::<f64>::from_fn(n, d, |i, j| x[(i, j)])
        .thin_svd()
        .map_err(|_| MlsaError::NonConvergence {
            solver: "svd",
            iterations: 0,
            residual: f64::NAN,
        })?;
    let m = n.min(d);
    let sigma = svd.S().column_vector();
    let (fu, fv) = (svd.U(), svd.V());
    let u = DMatrix::from_fn(n, m, |i, k| fu[(i, k)]);
    let v = DMatrix::from_fn(d, m, |j, k| fv[(j, k)]);
    let cutoff = svd_tol * (0..m).map(|k| sigma[k]).fold(0.0, f64::max);
    let kept = (0..m)
        .map(|k| (k, sigma[k]))
        .filter(|&(_, s)| s > cutoff && s > 0.0)
        .collect();
    Ok((u, v, kept))
}

/// `sigma_max / sigma_min` over the retained singular values; 1 for a zero
/// design.
pub fn condition_number(x: &DMatrix<f64>, svd_tol: f64) -> Result<f64> {
    let (_, _, kept) = thin_svd(x, svd_tol)?;
    let (lo, hi) = kept
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, s)| (lo.min(s), hi.max(s)));
    Ok(if kept.is_empty() { 1.0 } else { hi / lo })
}

/// `X^+ = V_r S_r^-1 U_r^T`.
pub fn design_pinv(x: &DMatrix<f64>, svd_tol: f64) -> Result<DMatrix<f64>> {
    let (u, v, kept) = thin_svd(x, svd_tol)?;
    let mut pinv = DMatrix::zeros(x.ncols(), x.nrows());
    for (k, s) in kept {
        pinv += v.column(k) * u.column(k).transpose() / s;
    }
    Ok(pinv)
}

/// `A^+ = V_r S_r^-2 V_r^T` and `rank(A)` for `A = X^T X`, from the SVD of
/// `X` so that `A` is never formed.
pub fn gram_pinv(x: &DMatrix<f64>, svd_tol: f64) -> Result<(DMatrix<f64>, usize)> {
    let (_, v, kept) = thin_svd(x, svd_tol)?;
    let d = x.ncols();
    let mut pinv = DMatrix::zeros(d, d);
    for &(k, s) in &kept {
        pinv += v.column(k) * v.column(k).transpose() / (s * s);
    }
    Ok((pinv, kept.len()))
}

pub fn fit_transductive_vaw(x: &DMatrix<f64>, y: &DVector<f64>, svd_tol: f64) -> Result<LinearLooResult> {
    check_design(x)?;
    if y.len() != x.nrows() {
        return Err(MlsaError::LengthMismatch {
            what: "responses",
            got: y.len(),
            expected: x.nrows(),
        });
    }
    if !(svd_tol >= 0.0) {
        return Err(MlsaError::InvalidParameter(format!("svd tolerance must be nonnegative, got {svd_tol}")));
    }
    let (a_pinv, rank) = gram_pinv(x, svd_tol)?;
    let xty = x.transpose() * y;
    let beta_hat = &a_pinv * &xty;
    let n = x.nrows();
    let mut beta_minus = DMatrix::zeros(n, x.ncols());
    let mut leverages = Vec::with_capacity(n);
    let (mut loo_sq_sum, mut fit_sq_sum) = (0.0, 0.0);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let b = &a_pinv * (&xty - &xi * y[i]);
        leverages.push((xi.transpose() * &a_pinv * &xi)[(0, 0)]);
        loo_sq_sum += (y[i] - xi.dot(&b)).powi(2);
        fit_sq_sum += (y[i] - xi.dot(&beta_hat)).powi(2);
        beta_minus.set_row(i, &b.transpose());
    }
    Ok(LinearLooResult {
        beta_hat,
        beta_minus,
        leverages,
        loo_sq_sum,
        fit_sq_sum,
        m_sq: y.iter().map(|v| v * v).fold(0.0, f64::max),
        rank,
    })
}

/// `max |X^+ - A^+ X^T|` over entries.
pub fn pinv_identity_error(x: &DMatrix<f64>, svd_tol: f64) -> Result<f64> {
    let direct = design_pinv(x, svd_tol)?;
    let (a_pinv, _) = gram_pinv(x, svd_tol)?;
    Ok((direct - a_pinv * x.transpose()).amax())
}

pub fn verify_pinv_identity(x: &DMatrix<f64>, svd_tol: f64) -> Result<bool> {
    Ok(pinv_identity_error(x, svd_tol)? <= PINV_IDENTITY_TOL)
}

/// Rows of whitespace-separated numbers: covariates followed by the
/// response. Blank lines and `#` comments are skipped.
pub fn parse_design(text: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| MlsaError::Parse {
                    line: k + 1,
                    message: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() < 2 {
            return Err(MlsaError::Parse {
                line: k + 1,
                message: "need at least one covariate and a response".into(),
            });
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MlsaError::Parse {
                    line: k + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MlsaError::Empty("design file"));
    }
    let d = rows[0].len() - 1;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y = rows.iter().map(|r| r[d]).collect();
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol(x: &DMatrix<f64>) -> f64 {
        default_svd_tol(x.nrows(), x.ncols())
    }

    #[test]
    fn identity_design() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let r = fit_transductive_vaw(&x, &y, tol(&x)).unwrap();
        assert!((r.beta_hat.clone() - &y).amax() < 1e-14);
        assert!(r.fit_sq_sum < 1e-28);
        assert!(r.leverages.iter().all(|&h| (h - 1.0).abs() < 1e-14));
        assert!((r.loo_sq_sum - 5.25).abs() < 1e-12);
        assert_eq!(r.rank, 3);
        assert_eq!(r.bound_rhs(), 2.0 * 4.0 * 3.0);
        assert!(r.bound_holds(1e-9));
    }

    #[test]
    fn duplicated_row_hand_computation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let (a_pinv, rank) = gram_pinv(&x, tol(&x)).unwrap();
        assert_eq!(rank, 1);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!((a_pinv - expected).amax() < 1e-15);
        let r = fit_transductive_vaw(&x, &DVector::from_vec(vec![1.0, 3.0]), tol(&x)).unwrap();
        assert!(r.leverages.iter().all(|&h| (h - 0.5).abs() < 1e-15));
    }

    #[test]
    fn zero_response() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let r = fit_transductive_vaw(&x, &DVector::zeros(3), tol(&x)).unwrap();
        assert_eq!((r.loo_sq_sum, r.fit_sq_sum, r.bound_rhs()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_matrix_pinv_identity() {
        let x = DMatrix::zeros(4, 3);
        assert_eq!(pinv_identity_error(&x, tol(&x)).unwrap(), 0.0);
        let r = fit_transductive_vaw(&x, &DVector::from_element(4, 1.0), tol(&x)).unwrap();
        assert_eq!(r.rank, 0);
        assert!(r.bound_holds(1e-9));
    }

    #[test]
    fn rejects_mismatched_responses() {
        let x = DMatrix::identity(2, 2);
        assert!(fit_transductive_vaw(&x, &DVector::zeros(3), 1e-12).is_err());
    }

    #[test]
    fn parse_roundtrip() {
        let (x, y) = parse_design("# x1 x2 y\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1., 2., 4., 5.]));
        assert_eq!(y, vec![3., 6.]);
        assert!(matches!(parse_design("1 2 3\n4 5"), Err(MlsaError::Parse { line: 2, .. })));
        assert!(parse_design("7\n").is_err());
    }

    #[test]
    fn sparse_rank_deficient_design() {
        // Fourth column duplicates the first; this design once produced a
        // wrong factorization with a different SVD backend.
        let rows: [[f64; 3]; 23] = [
            [1.6055472205226826, 0.0, -2.0268333999393033],
            [0.0, 1.7520181032050652, -0.9215292742372831],
            [0.0, -2.5164374600300596, 0.0],
            [0.0, 1.563161941453491, 0.0],
            [0.0, -0.5206037674736068, 0.0],
            [-0.4432111553242287, 0.0, 0.0],
            [1.9040537383810663, -2.5762978311992732, -0.7473889669960296],
            [0.0, 0.0, 0.2950888828583242],
            [0.7531245128644007, -1.2333155911987683, 2.004876163771695],
            [-2.688511600259058, 0.5838551720694829, 2.14952879722977],
            [-0.2982187586189756, 0.0, 2.2830444466185673],
            [-2.5423561334464977, -0.3901323716131384, -2.5088520208535674],
            [-2.4335808367913345, 0.0, -2.7473867964601584],
            [0.0, 0.0, 0.0],
            [-1.1291751341721206, -0.5886384435487292, -1.3463481849879033],
            [0.0, 2.037028761588911, 1.0480448417010424],
            [1.034440303627851, 0.34326201092899555, 0.0],
            [0.0, 0.0, 0.0],
            [-1.068164599824278, 0.0, -2.4966446983062522],
            [0.0, 0.0, 1.7582700601702925],
            [-2.932977775451825, -2.558086892978833, 2.662758585904932],
            [0.050825907104263233, -1.8282584175950185, -2.612932517994198],
            [1.7477980643024495, 2.330613220240611, -2.595305636911691],
        ];
        let x = DMatrix::from_fn(23, 4, |i, j| rows[i][if j == 3 { 0 } else { j }]);
        let t = tol(&x);
        let xp = design_pinv(&x, t).unwrap();
        assert!((&x * &xp * &x - &x).amax() < 1e-12);
        assert!(pinv_identity_error(&x, t).unwrap() <= PINV_IDENTITY_TOL);
        assert_eq!(gram_pinv(&x, t).unwrap().1, 3);
    }

    fn design(n: usize, d: usize, entries: &[f64], dup: bool) -> DMatrix<f64> {
        let mut x = DMatrix::from_fn(n, d, |i, j| entries[(i * d + j) % entries.len()]);
        if dup && d >= 2 {
            let c = x.column(0).clone_owned();
            x.set_column(d - 1, &c);
        }
        x
    }

    proptest! {
        #[test]
        fn bound_and_identities_hold(
            n in 1usize..30,
            d in 1usize..8,
            entries in prop::collection::vec(-3.0f64..3.0, 240),
            ys in prop::collection::vec(-2.0f64..2.0, 30),
            dup in any::<bool>(),
        ) {
            let x = design(n, d, &entries, dup);
            let y = DVector::from_vec(ys[..n].to_vec());
            let t = tol(&x);
            let r = fit_transductive_vaw(&x, &y, t).unwrap();
            prop_assert!(r.bound_holds(1e-9));
            for &h in &r.leverages {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h));
            }
            prop_assert!((r.leverages.iter().sum::<f64>() - r.rank as f64).abs() < 1e-8);
            for i in 0..n {
                let xi = x.row(i).transpose();
                let lhs = y[i] - xi.dot(&r.beta_minus.row(i).transpose());
                let rhs = (y[i] - xi.dot(&r.beta_hat)) + r.leverages[i] * y[i];
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
            let a = x.transpose() * &x;
            let (ap, _) = gram_pinv(&x, t).unwrap();
            prop_assert!((&a * &ap * &a - &a).amax() <= 1e-9 * a.amax().max(1.0));
            prop_assert!((&ap - ap.transpose()).amax() <= 1e-12 * ap.amax().max(1.0));
            let xp = design_pinv(&x, t).unwrap();
            prop_assert!((&x * &xp * &x - &x).amax() < 1e-9);
            let hat = &x * &xp;
            prop_assert!((&hat * &hat - &hat).amax() < 1e-8);
            prop_assert!((&hat - hat.transpose()).amax() < 1e-8);
        }
    }
}
