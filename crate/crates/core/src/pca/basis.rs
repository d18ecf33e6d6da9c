use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::RolloutDataset;
use crate::error::{check_dim, Error, Result};

pub const SIGN_CONVENTION: &str = "largest-magnitude entry of each component is positive";

/// Mean, orthonormal components (columns, descending variance) and the
/// variance along each component.
#[derive(Debug, Clone, PartialEq)]
pub struct PcBasis {
    pub mean: DVector<f64>,
    pub components: DMatrix<f64>,
    pub variances: DVector<f64>,
    pub source_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub basis: PcBasis,
    /// Fewer rows than dimensions, or variances clamped to zero.
    pub rank_deficient: bool,
    pub rank: usize,
}

fn hash_matrix(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Eigendecomposition of the mean-centered population covariance.
/// Variances below `1e-12` of the largest are set to exactly zero.
pub fn fit_pca(ds: &RolloutDataset) -> Result<PcaFit> {
    let rows = ds.rows();
    let dim = ds.width();
    if rows == 0 || dim == 0 {
        return Err(Error::Config("cannot fit PCA on an empty dataset".into()));
    }
    let mean = DVector::from_fn(dim, |c, _| ds.data.column(c).sum() / rows as f64);
    let mut centered = ds.data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / rows as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = 1e-12 * top;

    let mut components = DMatrix::zeros(dim, dim);
    let mut variances = DVector::zeros(dim);
    let mut rank = 0;
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if lambda > floor && lambda > 0.0 {
            variances[k] = lambda;
            rank += 1;
        }
        let mut col = eig.eigenvectors.column(src).into_owned();
        col /= col.norm();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1 {
                    (i, v.abs())
                } else {
                    best
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col = -col;
        }
        components.set_column(k, &col);
    }

    Ok(PcaFit {
        basis: PcBasis {
            mean,
            components,
            variances,
            source_hash: hash_matrix(&ds.data),
        },
        rank_deficient: rows < dim || rank < dim,
        rank,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisJson {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
    sign_convention: String,
    source_hash: String,
}

impl PcBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn component(&self, pc: usize) -> DVector<f64> {
        self.components.column(pc).into_owned()
    }

    pub fn std_dev(&self, pc: usize) -> f64 {
        self.variances[pc].sqrt()
    }

    /// First `k` coordinates of `s - mean` in the component basis.
    pub fn project(&self, s: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        check_dim("state", self.dim(), s.len())?;
        self.check_k(k)?;
        Ok(self.components.columns(0, k).tr_mul(&(s - &self.mean)))
    }

    /// `mean + C_k coords`: the point whose trailing coordinates are zero.
    pub fn reconstruct(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_k(coords.len())?;
        Ok(&self.mean + self.components.columns(0, coords.len()) * coords)
    }

    /// Replaces the leading `coords.len()` coordinates of `s`, keeping its
    /// residual in the remaining components.
    pub fn replace_leading(&self, s: &DVector<f64>, coords: &DVector<f64>) -> Result<DVector<f64>> {
        let current = self.project(s, coords.len())?;
        Ok(s + self.components.columns(0, coords.len()) * (coords - current))
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.dim() {
            return Err(Error::Config(format!(
                "component count {k} outside 1..={}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = BasisJson {
            mean: self.mean.iter().copied().collect(),
            components: (0..self.dim())
                .map(|r| self.components.row(r).iter().copied().collect())
                .collect(),
            variances: self.variances.iter().copied().collect(),
            sign_convention: SIGN_CONVENTION.to_string(),
            source_hash: self.source_hash.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BasisJson = serde_json::from_str(text)?;
        let dim = doc.mean.len();
        check_dim("basis variances", dim, doc.variances.len())?;
        check_dim("basis component rows", dim, doc.components.len())?;
        for row in &doc.components {
            check_dim("basis component columns", dim, row.len())?;
        }
        Ok(PcBasis {
            mean: DVector::from_vec(doc.mean),
            components: DMatrix::from_fn(dim, dim, |r, c| doc.components[r][c]),
            variances: DVector::from_vec(doc.variances),
            source_hash: doc.source_hash,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    /// 1-based component index.
    pub pc: usize,
    pub fraction: f64,
    pub cumulative: f64,
}

/// Fraction of total variance per component. A zero-variance basis yields
/// all-zero fractions.
pub fn explained_variance_report(basis: &PcBasis) -> Vec<VarianceRow> {
    let total: f64 = basis.variances.iter().sum();
    let mut cumulative = 0.0;
    basis
        .variances
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let fraction = if total > 0.0 { v / total } else { 0.0 };
            cumulative += fraction;
            VarianceRow {
                pc: k + 1,
                fraction,
                cumulative,
            }
        })
        .collect()
}
