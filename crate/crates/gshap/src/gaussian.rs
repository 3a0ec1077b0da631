//! Multivariate Gaussian feature model: validation, block-structured
//! construction, conditioning on a coalition, sampling, and the closed-form
//! moments that power the analytic contribution oracle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::coalition::{Coalition, FeaturePartition};
use crate::error::{Error, Result};

/// Symmetry tolerance for covariance validation.
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue tolerance for the PSD check.
const PSD_REL_TOL: f64 = 1e-10;
/// Minimum Cholesky pivot accepted when conditioning.
const PIVOT_MIN: f64 = 1e-12;
/// Eigenvalue floor applied by the opt-in repair projection.
const REPAIR_FLOOR: f64 = 1e-8;

/// A multivariate Gaussian `N(mean, covariance)` over `M` features.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

/// Record of an eigenvalue-clipping repair applied to an indefinite matrix.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RepairEvent {
    /// Smallest eigenvalue before the repair.
    pub min_eigenvalue: f64,
    /// Frobenius distance between the original and repaired matrices.
    pub frobenius_distance: f64,
}

impl GaussianModel {
    /// Validate mean/covariance: square, matching dimension, symmetric to
    /// 1e-12, and positive semi-definite (smallest eigenvalue no smaller
    /// than `-1e-10` times the largest magnitude).
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {m} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let delta = (covariance[(i, j)] - covariance[(j, i)]).abs();
                if delta > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { i, j, delta });
                }
            }
        }
        let (min_eig, max_eig) = eigen_range(&covariance);
        if min_eig < -PSD_REL_TOL * max_eig.abs().max(1.0) {
            return Err(Error::NotPositiveDefinite { min_eig, max_eig });
        }
        Ok(GaussianModel { mean, covariance })
    }

    /// Convenience constructor from plain slices/rows.
    pub fn from_rows(mean: &[f64], covariance: &[Vec<f64>]) -> Result<Self> {
        let m = mean.len();
        if covariance.len() != m || covariance.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(
                "covariance rows must form a square matrix matching the mean length".into(),
            ));
        }
        let cov = DMatrix::from_fn(m, m, |i, j| covariance[i][j]);
        Self::new(DVector::from_column_slice(mean), cov)
    }

    /// Standard normal of dimension `m`.
    pub fn standard(m: usize) -> Self {
        GaussianModel {
            mean: DVector::zeros(m),
            covariance: DMatrix::identity(m, m),
        }
    }

    /// Build from a block correlation design, rejecting indefinite results.
    pub fn from_design(design: &CorrelationDesign) -> Result<Self> {
        Self::new(
            DVector::zeros(design.partition.m()),
            design.covariance_matrix(),
        )
    }

    /// Build from a block correlation design; if the matrix is indefinite,
    /// project it to the nearest PSD matrix by clipping eigenvalues and
    /// report the repair.
    pub fn from_design_repaired(design: &CorrelationDesign) -> Result<(Self, Option<RepairEvent>)> {
        let sigma = design.covariance_matrix();
        let m = design.partition.m();
        match Self::new(DVector::zeros(m), sigma.clone()) {
            Ok(model) => Ok((model, None)),
            Err(Error::NotPositiveDefinite { min_eig, .. }) => {
                let eig = sigma.clone().symmetric_eigen();
                let clipped = DVector::from_iterator(
                    m,
                    eig.eigenvalues.iter().map(|&l| l.max(REPAIR_FLOOR)),
                );
                let repaired =
                    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
                let repaired = symmetrize(repaired);
                let frobenius_distance = (&repaired - &sigma).norm();
                let model = Self::new(DVector::zeros(m), repaired)?;
                Ok((
                    model,
                    Some(RepairEvent {
                        min_eigenvalue: min_eig,
                        frobenius_distance,
                    }),
                ))
            }
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Condition on `x_S = x_s` for the coalition `S`.
    ///
    /// Standard Gaussian conditioning through a Cholesky factorization of the
    /// `S` block: the conditional mean is
    /// `mu_f + S_fs S_ss^{-1} (x_s - mu_s)` and the conditional covariance is
    /// `S_ff - S_fs S_ss^{-1} S_sf`.
    pub fn condition(&self, s: Coalition, x_s: &[f64]) -> Result<ConditionalGaussian> {
        let m = self.dim();
        let fixed: Vec<usize> = s.iter().filter(|&i| i < m).collect();
        if fixed.len() != s.size() {
            return Err(Error::DimensionMismatch(format!(
                "coalition {s} references features beyond dimension {m}"
            )));
        }
        if x_s.len() != fixed.len() {
            return Err(Error::DimensionMismatch(format!(
                "conditioning values have length {} but coalition {s} has {} members",
                x_s.len(),
                fixed.len()
            )));
        }
        let free: Vec<usize> = (0..m).filter(|&i| !s.contains(i)).collect();

        if fixed.is_empty() {
            return Ok(ConditionalGaussian {
                conditioned_on: Coalition::EMPTY,
                given_values: DVector::zeros(0),
                fixed,
                free,
                mean: self.mean.clone(),
                covariance: self.covariance.clone(),
                dim: m,
            });
        }

        let k = fixed.len();
        let d = free.len();
        let sigma_ss = DMatrix::from_fn(k, k, |r, c| self.covariance[(fixed[r], fixed[c])]);
        let mu_s = DVector::from_fn(k, |r, _| self.mean[fixed[r]]);
        let given = DVector::from_column_slice(x_s);

        if d == 0 {
            // Fully conditioned: degenerate point mass at the given values.
            return Ok(ConditionalGaussian {
                conditioned_on: s,
                given_values: given,
                fixed,
                free,
                mean: DVector::zeros(0),
                covariance: DMatrix::zeros(0, 0),
                dim: m,
            });
        }

        let chol = sigma_ss
            .clone()
            .cholesky()
            .ok_or_else(|| singular_block(s, &sigma_ss))?;
        if chol.l().diagonal().iter().any(|&p| p <= PIVOT_MIN) {
            return Err(singular_block(s, &sigma_ss));
        }

        let sigma_fs = DMatrix::from_fn(d, k, |r, c| self.covariance[(free[r], fixed[c])]);
        // reg = S_fs S_ss^{-1}, via solving against the transposed system.
        let reg = chol.solve(&sigma_fs.transpose()).transpose();
        let mu_f = DVector::from_fn(d, |r, _| self.mean[free[r]]);
        let mean = &mu_f + &reg * (&given - &mu_s);
        let sigma_ff = DMatrix::from_fn(d, d, |r, c| self.covariance[(free[r], free[c])]);
        let covariance = symmetrize(&sigma_ff - &reg * sigma_fs.transpose());

        Ok(ConditionalGaussian {
            conditioned_on: s,
            given_values: given,
            fixed,
            free,
            mean,
            covariance,
            dim: m,
        })
    }

    /// Draw `n` rows from the distribution.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let factor = sampling_factor(&self.covariance);
        sample_with_factor(&self.mean, &factor, n, rng)
    }

    /// Closed-form moment accessor for the (unconditional) distribution.
    pub fn moments(&self) -> Moments {
        Moments {
            mean: self.mean.clone(),
            cov: self.covariance.clone(),
        }
    }
}

/// Block-structured correlation design: unit-variance features (scaled by
/// `variance`), one correlation within groups and another between groups.
#[derive(Clone, Debug)]
pub struct CorrelationDesign {
    pub within_rho: f64,
    pub between_rho: f64,
    pub variance: f64,
    pub partition: FeaturePartition,
}

impl CorrelationDesign {
    pub fn new(
        within_rho: f64,
        between_rho: f64,
        variance: f64,
        partition: FeaturePartition,
    ) -> Result<Self> {
        for rho in [within_rho, between_rho] {
            if !(-1.0..=1.0).contains(&rho) || !rho.is_finite() {
                return Err(Error::CorrelationRange(rho));
            }
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive, got {variance}"
            )));
        }
        Ok(CorrelationDesign {
            within_rho,
            between_rho,
            variance,
            partition,
        })
    }

    /// The implied covariance matrix (not yet checked for definiteness).
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let m = self.partition.m();
        let mut group_of = vec![0usize; m];
        for (gi, g) in self.partition.groups().iter().enumerate() {
            for &f in g.members() {
                group_of[f] = gi;
            }
        }
        DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                self.variance
            } else if group_of[i] == group_of[j] {
                self.variance * self.within_rho
            } else {
                self.variance * self.between_rho
            }
        })
    }
}

/// The law of the free coordinates given `x_S = x*_S`, together with the
/// frozen coordinates, so that full-dimensional samples and moments can be
/// reconstructed.
#[derive(Clone, Debug)]
pub struct ConditionalGaussian {
    conditioned_on: Coalition,
    given_values: DVector<f64>,
    fixed: Vec<usize>,
    free: Vec<usize>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    dim: usize,
}

impl ConditionalGaussian {
    pub fn conditioned_on(&self) -> Coalition {
        self.conditioned_on
    }

    /// Values of the conditioned coordinates, in ascending index order.
    pub fn given_values(&self) -> &DVector<f64> {
        &self.given_values
    }

    /// Free (unconditioned) feature indices, ascending.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    /// Conditional mean over the free coordinates.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Conditional covariance over the free coordinates.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Original feature-space dimension M.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draw `n` rows of the free coordinates.
    pub fn sample_free<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let factor = sampling_factor(&self.covariance);
        sample_with_factor(&self.mean, &factor, n, rng)
    }

    /// Draw `n` full-dimensional rows: free coordinates sampled, conditioned
    /// coordinates frozen at their given values.
    pub fn sample_full<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let z = self.sample_free(n, rng);
        let mut out = DMatrix::zeros(n, self.dim);
        for (c, &f) in self.free.iter().enumerate() {
            for r in 0..n {
                out[(r, f)] = z[(r, c)];
            }
        }
        for (c, &f) in self.fixed.iter().enumerate() {
            let v = self.given_values[c];
            for r in 0..n {
                out[(r, f)] = v;
            }
        }
        out
    }

    /// Closed-form moment accessor in the original index space: conditioned
    /// coordinates appear as constants (zero variance).
    pub fn moments(&self) -> Moments {
        let mut mean = DVector::zeros(self.dim);
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for (c, &f) in self.fixed.iter().enumerate() {
            mean[f] = self.given_values[c];
        }
        for (r, &fr) in self.free.iter().enumerate() {
            mean[fr] = self.mean[r];
            for (c, &fc) in self.free.iter().enumerate() {
                cov[(fr, fc)] = self.covariance[(r, c)];
            }
        }
        Moments { mean, cov }
    }
}

/// Closed-form Gaussian moments used by the analytic contribution oracle.
///
/// All formulas are exact for jointly Gaussian coordinates:
/// `E[x_i x_j] = mu_i mu_j + S_ij`,
/// `E[x_i x_j^2] = mu_i mu_j^2 + mu_i S_jj + 2 mu_j S_ij`, and
/// `E[cos x_i] = exp(-S_ii / 2) cos(mu_i)`.
#[derive(Clone, Debug)]
pub struct Moments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E[x_i]`
    pub fn e_x(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// `Cov(x_i, x_j)` (zero when either coordinate is conditioned).
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    /// `E[x_i x_j]`
    pub fn e_xy(&self, i: usize, j: usize) -> f64 {
        self.mean[i] * self.mean[j] + self.cov[(i, j)]
    }

    /// `E[x_i x_j^2]`
    pub fn e_xy2(&self, i: usize, j: usize) -> f64 {
        let (mi, mj) = (self.mean[i], self.mean[j]);
        mi * mj * mj + mi * self.cov[(j, j)] + 2.0 * mj * self.cov[(i, j)]
    }

    /// `E[cos x_i]`
    pub fn e_cos(&self, i: usize) -> f64 {
        (-0.5 * self.cov[(i, i)]).exp() * self.mean[i].cos()
    }
}

/// JSON distribution spec: either explicit moments or a correlation design
/// to be resolved against a partition.
#[derive(Deserialize)]
#[serde(untagged)]
enum DistFile {
    Explicit {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Design { design: DesignDto },
}

#[derive(Deserialize)]
struct DesignDto {
    within_rho: f64,
    between_rho: f64,
    #[serde(default = "default_variance")]
    variance: f64,
}

fn default_variance() -> f64 {
    1.0
}

/// Parse a distribution spec document. A `{"design": ...}` spec requires the
/// partition it is resolved against.
pub fn distribution_from_json(
    json: &str,
    partition: Option<&FeaturePartition>,
) -> Result<GaussianModel> {
    let doc: DistFile = serde_json::from_str(json)?;
    match doc {
        DistFile::Explicit { mean, covariance } => GaussianModel::from_rows(&mean, &covariance),
        DistFile::Design { design } => {
            let partition = partition.ok_or_else(|| {
                Error::InvalidArgument(
                    "a design-based distribution spec requires a partition".into(),
                )
            })?;
            let design = CorrelationDesign::new(
                design.within_rho,
                design.between_rho,
                design.variance,
                partition.clone(),
            )?;
            GaussianModel::from_design(&design)
        }
    }
}

fn singular_block(s: Coalition, sigma_ss: &DMatrix<f64>) -> Error {
    let (min_eig, max_eig) = eigen_range(sigma_ss);
    let cond = if min_eig.abs() > 0.0 {
        (max_eig / min_eig).abs()
    } else {
        f64::INFINITY
    };
    Error::SingularBlock {
        coalition: s.to_string(),
        cond,
    }
}

fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    (min, max)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Lower-triangular factor `L` with `L L^T = cov`: Cholesky when the matrix
/// is positive definite, eigen decomposition with negative eigenvalues
/// clipped to zero for the PSD-singular case.
fn sampling_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    match cov.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            let eig = cov.clone().symmetric_eigen();
            let roots =
                DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        }
    }
}

fn sample_with_factor<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let d = mean.len();
    let normal = StandardNormal;
    let z = DMatrix::from_fn(n, d, |_, _| normal.sample(rng));
    let mut out = z * factor.transpose();
    for c in 0..d {
        let mu = mean[c];
        for r in 0..n {
            out[(r, c)] += mu;
        }
    }
    out
}
