//! Finite density classes on a finite space under log loss.
//!
//! Observations are indices into the space. The prediction table holds
//! probability values `p_j(x_i)`; the responses carry the observed index only
//! for bookkeeping, since the log loss depends on the prediction alone.

use crate::audit::{BoundCertificate, BoundComponents};
use crate::engine::{run_mlsa, single_hypothesis_output, Aggregation, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::grid::ToleranceGrid;
use crate::loss::LossModel;
use crate::regression::{check_output_shape, log_class_certificate, scaled_log_grid, GROWTH_CONSTANT, NOMINAL_RHO};
use crate::table::{LabeledSample, PredictionTable};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityClass {
    probs: Vec<Vec<f64>>,
    log_ratio_bound: f64,
}

/// `max_{p, q, x} |ln p(x) - ln q(x)|`; infinite when some entry is zero.
/// Points outside the support of every member are skipped.
fn exact_log_ratio_bound(probs: &[Vec<f64>]) -> f64 {
    let support = probs[0].len();
    (0..support)
        .map(|x| {
            let (lo, hi) = probs
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p[x]), hi.max(p[x])));
            if hi == 0.0 {
                0.0
            } else if lo == 0.0 {
                f64::INFINITY
            } else {
                hi.ln() - lo.ln()
            }
        })
        .fold(0.0, f64::max)
}

impl DensityClass {
    /// Rows are densities over `0..support`; each must sum to one.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let support = probs.first().map(Vec::len).ok_or(MlsaError::Empty("density class"))?;
        if support == 0 {
            return Err(MlsaError::Empty("density support"));
        }
        for (r, row) in probs.iter().enumerate() {
            if row.len() != support {
                return Err(MlsaError::LengthMismatch {
                    what: "density row",
                    got: row.len(),
                    expected: support,
                });
            }
            if row.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(MlsaError::InvalidParameter(format!("density {r} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(MlsaError::InvalidParameter(format!("density {r} sums to {total}")));
            }
        }
        let log_ratio_bound = exact_log_ratio_bound(&probs);
        Ok(Self { probs, log_ratio_bound })
    }

    /// Whitespace-separated matrix, one density per line. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
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
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    pub fn support_size(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Exact `max |ln p(x) / q(x)|` over the class.
    pub fn log_ratio_bound(&self) -> f64 {
        self.log_ratio_bound
    }

    pub fn mean_density(&self) -> Vec<f64> {
        let k = self.size() as f64;
        (0..self.support_size())
            .map(|x| self.probs.iter().map(|p| p[x]).sum::<f64>() / k)
            .collect()
    }

    /// `sum_i -ln p_j(x_i)` for every member `j`.
    pub fn log_losses(&self, observations: &[usize]) -> Result<Vec<f64>> {
        check_observations(self, observations)?;
        Ok(self
            .probs
            .iter()
            .map(|p| observations.iter().map(|&x| -p[x].ln()).sum())
            .collect())
    }
}

fn check_observations(class: &DensityClass, observations: &[usize]) -> Result<()> {
    if observations.is_empty() {
        return Err(MlsaError::Empty("observations"));
    }
    for &x in observations {
        crate::error::check_index("observation", x, class.support_size())?;
    }
    Ok(())
}

/// Table of `p_j(x_i)` with the matching log-loss model. Members keep their
/// multiplicity even if they agree on every observation.
pub fn log_loss_table(
    class: &DensityClass,
    observations: &[usize],
) -> Result<(PredictionTable, LabeledSample, LossModel)> {
    check_observations(class, observations)?;
    let columns = class
        .probs
        .iter()
        .map(|p| observations.iter().map(|&x| p[x]).collect())
        .collect();
    let table = PredictionTable::with_multiplicity(columns)?;
    let sample = LabeledSample::new(observations.iter().map(|&x| x as f64).collect());
    Ok((table, sample, LossModel::neg_log(class.log_ratio_bound)))
}

/// Levels `{k M : k = 1..=ceil(12 ln |P|)}` with gap `M`.
pub fn density_grid(m_bound: f64, class_size: usize) -> Result<ToleranceGrid> {
    scaled_log_grid(m_bound, class_size, "density class")
}

/// Runs the procedure with the class's exact log-ratio bound. A one-member
/// class is returned directly.
pub fn run_density(class: &DensityClass, observations: &[usize]) -> Result<MlsaOutput> {
    let (table, sample, loss) = log_loss_table(class, observations)?;
    if class.size() == 1 {
        return single_hypothesis_output(&table, &sample, &loss);
    }
    if !class.log_ratio_bound.is_finite() {
        return Err(MlsaError::UnboundedLogRatio);
    }
    let grid = density_grid(class.log_ratio_bound, class.size())?;
    run_mlsa(&table, &sample, &loss, &grid, Aggregation::Average)
}

/// `LOO <= 8 minL / n + 104 M ln |P| / n` with the exact `M` of the class.
pub fn verify_cor_density(
    output: &MlsaOutput,
    class: &DensityClass,
    observations: &[usize],
) -> Result<BoundCertificate> {
    let m_bound = class.log_ratio_bound;
    if !m_bound.is_finite() {
        return Err(MlsaError::UnboundedLogRatio);
    }
    let n = observations.len();
    let erm = min_log_loss(class, observations)?;
    let t_max = if class.size() == 1 {
        if output.medians.len() != n {
            return Err(MlsaError::LengthMismatch {
                what: "medians",
                got: output.medians.len(),
                expected: n,
            });
        }
        0.0
    } else {
        let grid = density_grid(m_bound, class.size())?;
        check_output_shape(output, &grid, n)?;
        grid.t_max()
    };
    Ok(log_class_certificate(
        "density-corollary",
        output.loo_error,
        erm,
        m_bound,
        class.size(),
        n,
        t_max,
    ))
}

fn min_log_loss(class: &DensityClass, observations: &[usize]) -> Result<f64> {
    Ok(class.log_losses(observations)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// `ln(1/eps) + min(ln |P|, ln |X|)`.
pub fn smoothing_bound(class_size: usize, support: usize, eps: f64) -> f64 {
    (1.0 / eps).ln() + (class_size as f64).ln().min((support as f64).ln())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(MlsaError::InvalidParameter(format!("smoothing weight must lie in (0, 1/2), got {eps}")))
    }
}

/// Mixes every member with `nu`: the class mean when `|X| >= |P|`, the
/// uniform density otherwise.
pub fn smooth_class(class: &DensityClass, eps: f64) -> Result<DensityClass> {
    check_eps(eps)?;
    let support = class.support_size();
    let nu = if support >= class.size() {
        class.mean_density()
    } else {
        vec![1.0 / support as f64; support]
    };
    let probs: Vec<Vec<f64>> = class
        .probs
        .iter()
        .map(|p| p.iter().zip(&nu).map(|(&a, &b)| (1.0 - eps) * a + eps * b).collect())
        .collect();
    // Rounding can push a row sum a few ulps past the strict row check.
    let probs = probs
        .into_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    DensityClass::new(probs)
}

/// Smoothing at weight `eps`: `L_S(p*_eps) <= L_S(p*) + 2 n eps`, where `p*`
/// minimizes the log loss over the original class and `p*_eps` is its
/// smoothed counterpart.
pub fn verify_smoothing_inflation(class: &DensityClass, observations: &[usize], eps: f64) -> Result<BoundCertificate> {
    let smoothed = smooth_class(class, eps)?;
    let original = class.log_losses(observations)?;
    let best = (0..original.len())
        .min_by(|&a, &b| original[a].total_cmp(&original[b]))
        .ok_or(MlsaError::Empty("density class"))?;
    let inflated = smoothed.log_losses(observations)?[best];
    let n = observations.len();
    Ok(BoundCertificate::new(
        "smoothing-inflation",
        inflated,
        original[best] + 2.0 * n as f64 * eps,
        BoundComponents {
            n,
            erm_loss: original[best],
            t_max: 0.0,
            delta: 0.0,
            c_g: 1.0,
            rho: 1.0,
            multiplier: 1.0,
        },
    ))
}

/// Certificates for the procedure run on the smoothed class.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCertificates {
    /// `8/n (minL + 13 M_eps ln |P|) + 16 eps`.
    pub general: BoundCertificate,
    /// At `eps = 1/n`: `8 minL / n + 112/n ln|P| min(ln|P|, ln|X|) + 112/n ln|P| ln n`.
    pub inverse_n: Option<BoundCertificate>,
}

/// Smooths `class` at `eps`, runs the procedure on the smoothed class and
/// bounds its leave-one-out error against the best member of the original
/// class. `minL` is always taken over the unsmoothed class.
pub fn verify_smoothed_density(
    class: &DensityClass,
    observations: &[usize],
    eps: f64,
) -> Result<(MlsaOutput, SmoothedCertificates)> {
    let smoothed = smooth_class(class, eps)?;
    let output = run_density(&smoothed, observations)?;
    let n = observations.len();
    let nf = n as f64;
    let size = class.size();
    let support = class.support_size();
    let erm = min_log_loss(class, observations)?;
    let m_eps = smoothing_bound(size, support, eps);
    let ln_p = (size as f64).ln();
    let t_max = if size == 1 {
        0.0
    } else {
        density_grid(smoothed.log_ratio_bound, size)?.t_max()
    };
    let components = BoundComponents {
        n,
        erm_loss: erm,
        t_max,
        delta: smoothed.log_ratio_bound,
        c_g: GROWTH_CONSTANT,
        rho: NOMINAL_RHO,
        multiplier: 8.0 / nf,
    };
    let general = BoundCertificate::new(
        "smoothed-density",
        output.loo_error,
        8.0 / nf * (erm + 13.0 * m_eps * ln_p) + 16.0 * eps,
        components.clone(),
    );
    let inverse_n = (eps == 1.0 / nf).then(|| {
        let small = ln_p.min((support as f64).ln());
        BoundCertificate::new(
            "smoothed-density/inverse-n",
            output.loo_error,
            8.0 * erm / nf + 112.0 / nf * ln_p * small + 112.0 / nf * ln_p * nf.ln(),
            components,
        )
    });
    Ok((output, SmoothedCertificates { general, inverse_n }))
}

/// Per-sample log-loss differences `|ln p(x_i) - ln q(x_i)|` over the
/// observed points, for checking that `M` bounds every table row.
pub fn max_observed_log_ratio(table: &PredictionTable) -> f64 {
    (0..table.n_samples())
        .map(|i| {
            let row = table.row(i);
            let hi = row.iter().copied().fold(0.0, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi.ln() - lo.ln()
        })
        .fold(0.0, f64::max)
}
