//! Synthetic Kruskal tensors with prescribed collinearity and SNR, component
//! matching and squared-angular-error metrics.

mod fisher;
mod hungarian;

pub use hungarian::hungarian;
pub use fisher::crib_numeric;

use crate::error::{invalid, FcpError, Result};
use crate::linalg::random_orthonormal;
use crate::tensor::{DenseTensor, KruskalTensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// SAE values above this many dB (including exact recovery) are reported as this.
pub const SAE_CAP_DB: f64 = 300.0;

/// Recipe for a synthetic noisy tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub shape: Vec<usize>,
    pub rank: usize,
    /// `a_r^(n)ᵀ a_s^(n) = c_n` for `r ≠ s`.
    pub collinearity: Vec<f64>,
    /// Infinite for a noiseless tensor.
    pub snr_db: f64,
    pub seed: u64,
    /// Component weights; all ones when `None`.
    pub weights: Option<Vec<f64>>,
}

impl SynthSpec {
    pub fn new(shape: Vec<usize>, rank: usize, collinearity: Vec<f64>, snr_db: f64, seed: u64) -> Self {
        Self { shape, rank, collinearity, snr_db, seed, weights: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return invalid("rank must be positive");
        }
        if self.shape.len() < 2 {
            return invalid("order must be at least 2");
        }
        if self.collinearity.len() != self.shape.len() {
            return invalid(format!(
                "{} collinearity values for order {}",
                self.collinearity.len(),
                self.shape.len()
            ));
        }
        if let Some(&i) = self.shape.iter().find(|&&i| i < self.rank) {
            return invalid(format!("mode size {i} is below rank {}", self.rank));
        }
        for (n, &c) in self.collinearity.iter().enumerate() {
            if !(c.abs() < 1.0) {
                return invalid(format!("collinearity of mode {} must satisfy |c| < 1, got {c}", n + 1));
            }
            if self.rank > 1 && c <= -1.0 / (self.rank as f64 - 1.0) {
                return invalid(format!(
                    "collinearity {c} of mode {} is not positive definite for rank {}",
                    n + 1,
                    self.rank
                ));
            }
        }
        if self.snr_db.is_nan() {
            return invalid("SNR must be a number");
        }
        if let Some(w) = &self.weights {
            if w.len() != self.rank || w.iter().any(|x| !(*x > 0.0)) {
                return invalid("weights must be positive, one per component");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub noisy: DenseTensor,
    pub truth: KruskalTensor,
    /// `‖E‖² / ∏ I_n`.
    pub noise_variance: f64,
    /// `10·log10(‖X‖² / ‖E‖²)` of the returned pair.
    pub realized_snr_db: f64,
}

/// `I × R` factor with unit columns and pairwise inner products `c`:
/// a random orthonormal basis times the transposed Cholesky factor of the
/// target Gram matrix.
pub fn collinear_factor<R: Rng + ?Sized>(rows: usize, rank: usize, c: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let q = random_orthonormal(rows, rank, rng)?;
    let gram = DMatrix::from_fn(rank, rank, |i, j| if i == j { 1.0 } else { c });
    let chol = gram
        .cholesky()
        .ok_or_else(|| FcpError::InvalidArgument(format!("collinearity {c} gives an indefinite Gram matrix")))?;
    Ok(q * chol.l().transpose())
}

/// Draws the ground truth and the noisy observation.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let factors = spec
        .shape
        .iter()
        .zip(&spec.collinearity)
        .map(|(&i, &c)| collinear_factor(i, spec.rank, c, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0; spec.rank]);
    let truth = KruskalTensor::new(weights, factors)?;
    let clean = truth.to_dense();
    let signal = clean.norm_sq();
    if spec.snr_db == f64::INFINITY {
        return Ok(SynthData { noisy: clean, truth, noise_variance: 0.0, realized_snr_db: f64::INFINITY });
    }
    let mut noise: Vec<f64> = (0..clean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let raw: f64 = noise.iter().map(|x| x * x).sum();
    let target = signal / 10f64.powf(spec.snr_db / 10.0);
    let scale = (target / raw).sqrt();
    noise.iter_mut().for_each(|x| *x *= scale);
    let energy: f64 = noise.iter().map(|x| x * x).sum();
    let data = clean.data().iter().zip(&noise).map(|(a, b)| a + b).collect();
    let noisy = DenseTensor::new(spec.shape.clone(), data)?;
    Ok(SynthData {
        noisy,
        truth,
        noise_variance: energy / clean.len() as f64,
        realized_snr_db: 10.0 * (signal / energy).log10(),
    })
}

/// Result of aligning estimated components with the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `permutation[r]` is the estimated component matched to true component `r`.
    pub permutation: Vec<usize>,
    /// `signs[n][r]`: sign that aligns the matched column of mode `n`.
    pub signs: Vec<Vec<f64>>,
    /// `∏_n |cos|` per true component.
    pub congruence: Vec<f64>,
    /// `Σ_r (1 − congruence_r)`.
    pub cost: f64,
}

fn unit_columns(f: &DMatrix<f64>, what: &str, mode: usize) -> Result<DMatrix<f64>> {
    let mut out = f.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        let n = c.norm();
        if !(n > 0.0) {
            return Err(FcpError::DegenerateComponent(format!(
                "{what} column {} of mode {} is zero",
                j + 1,
                mode + 1
            )));
        }
        c /= n;
    }
    Ok(out)
}

/// `|cos|` between all columns per mode: `cosines[n][(r, s)]`.
fn cosine_tables(truth: &KruskalTensor, est: &KruskalTensor) -> Result<Vec<DMatrix<f64>>> {
    if truth.rank() != est.rank() {
        return invalid(format!("rank mismatch: truth {} vs estimate {}", truth.rank(), est.rank()));
    }
    if truth.shape() != est.shape() {
        return invalid(format!("shape mismatch: {:?} vs {:?}", truth.shape(), est.shape()));
    }
    (0..truth.order())
        .map(|n| {
            let a = unit_columns(truth.factor(n), "true", n)?;
            let b = unit_columns(est.factor(n), "estimated", n)?;
            Ok(a.tr_mul(&b))
        })
        .collect()
}

/// Optimal one-to-one assignment maximizing total congruence.
pub fn match_components(truth: &KruskalTensor, est: &KruskalTensor) -> Result<Matching> {
    let cos = cosine_tables(truth, est)?;
    let r = truth.rank();
    let cong = |i: usize, j: usize| cos.iter().map(|m| m[(i, j)].abs()).product::<f64>();
    let cost: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| 1.0 - cong(i, j)).collect()).collect();
    let permutation = hungarian(&cost);
    let signs = cos
        .iter()
        .map(|m| {
            permutation
                .iter()
                .enumerate()
                .map(|(i, &j)| if m[(i, j)] < 0.0 { -1.0 } else { 1.0 })
                .collect()
        })
        .collect();
    let congruence: Vec<f64> = permutation.iter().enumerate().map(|(i, &j)| cong(i, j)).collect();
    let total = congruence.iter().map(|c| 1.0 - c).sum();
    Ok(Matching { permutation, signs, congruence, cost: total })
}

/// `−10·log10(x)`, capped at [`SAE_CAP_DB`].
pub fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        return SAE_CAP_DB;
    }
    (-10.0 * x.log10()).min(SAE_CAP_DB)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Squared angular errors after matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeReport {
    /// `alpha_sq[n][r]` for true component `r` in mode `n`.
    pub alpha_sq: Vec<Vec<f64>>,
    pub mode_mean_db: Vec<f64>,
    pub mode_median_db: Vec<f64>,
    /// `−10·log10` of the mean of all `α²`.
    pub msae_db: f64,
    /// `−10·log10` of the median of all `α²`.
    pub median_db: f64,
    pub permutation: Vec<usize>,
}

impl SaeReport {
    pub fn all_alpha_sq(&self) -> Vec<f64> {
        self.alpha_sq.iter().flatten().copied().collect()
    }
}

/// Angles between matched true and estimated columns in every mode.
pub fn sae(truth: &KruskalTensor, est: &KruskalTensor) -> Result<SaeReport> {
    let m = match_components(truth, est)?;
    let mut alpha_sq = Vec::with_capacity(truth.order());
    for n in 0..truth.order() {
        let a = unit_columns(truth.factor(n), "true", n)?;
        let b = unit_columns(est.factor(n), "estimated", n)?;
        // atan2 of the orthogonal residual stays accurate for tiny angles
        let row = m
            .permutation
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let ai = a.column(i);
                let bj = b.column(j);
                let c = ai.dot(&bj);
                let s = (bj - ai * c).norm();
                let t = s.atan2(c.abs());
                t * t
            })
            .collect::<Vec<f64>>();
        alpha_sq.push(row);
    }
    let all: Vec<f64> = alpha_sq.iter().flatten().copied().collect();
    Ok(SaeReport {
        mode_mean_db: alpha_sq.iter().map(|a| to_db(mean(a))).collect(),
        mode_median_db: alpha_sq.iter().map(|a| to_db(median(a))).collect(),
        msae_db: to_db(mean(&all)),
        median_db: to_db(median(&all)),
        alpha_sq,
        permutation: m.permutation,
    })
}
