//! CP-ALS, Tucker compression by HOOI, and best rank-one approximation.

use crate::error::{invalid, FcpError, Result};
use crate::exec::Exec;
use crate::linalg::{gram, hadamard_except, leading_eigenvectors, leading_left_singular_vectors, pinv_psd, random_unit_columns, thin_svd};
use crate::tensor::{mode_gram, mode_unfolding, mttkrp_with, ttm_with, DenseTensor, KruskalTensor, TuckerTensor};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Relative error below which the Gram-based error estimate is replaced by
/// an exact residual; the estimate loses all digits near `sqrt(eps)`.
pub(crate) const EXACT_RESIDUAL_BELOW: f64 = 1e-4;

/// Keeps restart seeds away from the seeds callers use for data.
const RESTART_SEED_OFFSET: u64 = 0x5eed_0000;

/// Starting point for ALS.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Standard normal factors with unit-norm columns.
    Random { seed: u64 },
    /// Leading left singular vectors of each mode-n unfolding. Columns
    /// beyond the mode size are filled randomly from `seed`.
    SvdLeading { seed: u64 },
    /// Explicit starting point.
    Given(KruskalTensor),
}

impl Default for Init {
    fn default() -> Self {
        Init::Random { seed: 0 }
    }
}

/// Termination test applied after every sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop when `|ε_old − ε| ≤ tol·ε`, or when `ε ≤ tol`.
    #[default]
    RelativeChange,
    /// Stop only when `ε ≤ tol`.
    ErrorBelow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub init: Init,
    pub stop: StopRule,
    pub exec: Exec,
    /// Independent runs of [`cp_als`]; the one with the lowest error wins.
    /// The first starts from `init`, the others from random factors.
    pub starts: usize,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            init: Init::default(),
            stop: StopRule::default(),
            exec: Exec::default(),
            starts: 1,
        }
    }
}

impl AlsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if self.starts == 0 {
            return invalid("starts must be at least 1");
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Outcome of an ALS run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `‖Y − Ŷ‖_F / ‖Y‖_F`.
    pub relative_error: f64,
    /// `100·(1 − ε)`.
    pub fit_percent: f64,
    pub iterations: usize,
    pub seconds: f64,
    /// ε after every sweep.
    pub history: Vec<f64>,
    /// A Gram matrix needed the pseudo-inverse fallback at least once.
    pub degenerate: bool,
}

impl FitReport {
    pub(crate) fn new(relative_error: f64, iterations: usize, seconds: f64, history: Vec<f64>, degenerate: bool) -> Self {
        Self {
            relative_error,
            fit_percent: 100.0 * (1.0 - relative_error),
            iterations,
            seconds,
            history,
            degenerate,
        }
    }
}

/// Anything ALS can fit a Kruskal model to.
pub(crate) trait AlsTarget: Sync {
    fn shape(&self) -> Vec<usize>;
    fn norm_sq(&self) -> f64;
    fn mttkrp(&self, factors: &[DMatrix<f64>], n: usize, exec: Exec) -> Result<DMatrix<f64>>;
    /// `‖Y − ⟦w; factors⟧‖_F` computed without cancellation.
    fn residual(&self, weights: &[f64], factors: &[DMatrix<f64>], exec: Exec) -> Result<f64>;
}

impl AlsTarget for DenseTensor {
    fn shape(&self) -> Vec<usize> {
        DenseTensor::shape(self).to_vec()
    }

    fn norm_sq(&self) -> f64 {
        DenseTensor::norm_sq(self)
    }

    fn mttkrp(&self, factors: &[DMatrix<f64>], n: usize, exec: Exec) -> Result<DMatrix<f64>> {
        mttkrp_with(self, factors, n, exec)
    }

    fn residual(&self, weights: &[f64], factors: &[DMatrix<f64>], _exec: Exec) -> Result<f64> {
        let mut f = factors.to_vec();
        for (j, &w) in weights.iter().enumerate() {
            f[0].column_mut(j).scale_mut(w);
        }
        let a1 = &f[0];
        let rest = crate::tensor::khatri_rao(&f[1..])?;
        let model = a1 * rest.transpose();
        Ok(self
            .data()
            .iter()
            .zip(model.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// The ALS sweep shared by the dense and structured solvers. Factors are
/// renormalized after every mode update with norms kept in the weights.
pub(crate) fn als_engine<T: AlsTarget + ?Sized>(
    target: &T,
    init: Vec<DMatrix<f64>>,
    opts: &AlsOptions,
) -> Result<(KruskalTensor, FitReport)> {
    opts.validate()?;
    let start = Instant::now();
    let shape = target.shape();
    let order = shape.len();
    let r = init[0].ncols();
    let exec = opts.exec;
    let norm_y_sq = target.norm_sq();
    if !(norm_y_sq > 0.0) {
        return Err(FcpError::DegenerateComponent("cannot fit a zero tensor".into()));
    }
    let norm_y = norm_y_sq.sqrt();

    let mut factors = init;
    let mut weights = vec![1.0; r];
    for f in factors.iter_mut() {
        for mut c in f.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
    }
    let mut grams: Vec<DMatrix<f64>> = factors.iter().map(gram).collect();
    let mut history = Vec::new();
    let mut degenerate = false;
    let mut eps_old = f64::INFINITY;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let mut last_m = DMatrix::zeros(0, 0);
        for n in 0..order {
            let m = target.mttkrp(&factors, n, exec)?;
            let gamma = hadamard_except(&grams, n, r);
            let (p, deg) = pinv_psd(&gamma);
            degenerate |= deg;
            let mut a = &m * p;
            for j in 0..r {
                let norm = a.column(j).norm();
                weights[j] = norm;
                if norm > 0.0 {
                    a.column_mut(j).unscale_mut(norm);
                }
            }
            grams[n] = gram(&a);
            factors[n] = a;
            if n + 1 == order {
                last_m = m;
            }
        }
        // ⟨Y, Ŷ⟩ from the last MTTKRP, ‖Ŷ‖² from the Grams
        let inner: f64 = (0..r)
            .map(|j| weights[j] * factors[order - 1].column(j).dot(&last_m.column(j)))
            .sum();
        let w = DVector::from_column_slice(&weights);
        let model_sq = (w.transpose() * hadamard_except(&grams, usize::MAX, r) * &w)[(0, 0)];
        let mut eps = ((norm_y_sq - 2.0 * inner + model_sq).max(0.0)).sqrt() / norm_y;
        if eps < EXACT_RESIDUAL_BELOW {
            eps = target.residual(&weights, &factors, exec)? / norm_y;
        }
        history.push(eps);
        let done = match opts.stop {
            StopRule::RelativeChange => (eps_old - eps).abs() <= opts.tol * eps || eps <= opts.tol,
            StopRule::ErrorBelow => eps <= opts.tol,
        };
        eps_old = eps;
        if done {
            break;
        }
    }

    let k = crate::tensor::normalize_parts(&weights, &factors)?;
    let eps = *history.last().expect("at least one sweep");
    let report = FitReport::new(eps, iterations, start.elapsed().as_secs_f64(), history, degenerate);
    Ok((k, report))
}

fn check_rank(rank: usize) -> Result<()> {
    if rank == 0 {
        return invalid("rank must be at least 1");
    }
    Ok(())
}

/// Initial factors for `t` under `init`.
pub(crate) fn initial_factors(t: &DenseTensor, rank: usize, init: &Init, exec: Exec) -> Result<Vec<DMatrix<f64>>> {
    match init {
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(t.shape().iter().map(|&i| random_unit_columns(i, rank, &mut rng)).collect())
        }
        Init::SvdLeading { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..t.order())
                .map(|n| {
                    let size = t.shape()[n];
                    let k = rank.min(size);
                    let u = leading_eigenvectors(&mode_gram(t, n, exec), k);
                    let mut f = random_unit_columns(size, rank, &mut rng);
                    f.columns_mut(0, k).copy_from(&u);
                    Ok(f)
                })
                .collect()
        }
        Init::Given(k) => {
            if k.rank() != rank || k.shape() != t.shape() {
                return invalid(format!(
                    "initial Kruskal tensor has shape {:?} rank {}, expected {:?} rank {rank}",
                    k.shape(),
                    k.rank(),
                    t.shape()
                ));
            }
            Ok(k.weighted_factors())
        }
    }
}

/// CP decomposition of `t` with rank `rank` by alternating least squares.
pub fn cp_als(t: &DenseTensor, rank: usize, opts: &AlsOptions) -> Result<(KruskalTensor, FitReport)> {
    check_rank(rank)?;
    if t.order() < 2 {
        return invalid("cp_als needs a tensor of order at least 2");
    }
    opts.validate()?;
    let init = initial_factors(t, rank, &opts.init, opts.exec)?;
    let mut best = als_engine(t, init, opts)?;
    if opts.starts == 1 {
        return Ok(best);
    }
    let base = match opts.init {
        Init::Random { seed } | Init::SvdLeading { seed } => seed,
        Init::Given(_) => 0,
    };
    let mut seconds = best.1.seconds;
    for s in 1..opts.starts {
        let seed = base.wrapping_add(RESTART_SEED_OFFSET).wrapping_add(s as u64);
        let init = initial_factors(t, rank, &Init::Random { seed }, opts.exec)?;
        let run = als_engine(t, init, opts)?;
        seconds += run.1.seconds;
        // strict: ties keep the earlier start
        if run.1.relative_error < best.1.relative_error {
            best = run;
        }
    }
    best.1.seconds = seconds;
    Ok(best)
}

/// HOSVD-initialized higher-order orthogonal iteration.
pub fn tucker_hooi(t: &DenseTensor, ranks: &[usize], sweeps: usize) -> Result<TuckerTensor> {
    tucker_hooi_with(t, ranks, sweeps, Exec::default())
}

pub fn tucker_hooi_with(t: &DenseTensor, ranks: &[usize], sweeps: usize, exec: Exec) -> Result<TuckerTensor> {
    if ranks.len() != t.order() {
        return invalid("one Tucker rank per mode is required");
    }
    for (n, (&r, &i)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > i {
            return invalid(format!("Tucker rank {r} invalid for mode {} of size {i}", n + 1));
        }
    }
    let mut us: Vec<DMatrix<f64>> = (0..t.order())
        .map(|n| mode_leading_vectors(t, n, ranks[n], exec))
        .collect::<Result<_>>()?;
    for _ in 0..sweeps {
        for n in 0..t.order() {
            let y = project_except(t, &us, Some(n), exec)?;
            us[n] = mode_leading_vectors(&y, n, ranks[n], exec)?;
        }
    }
    let core = project_except(t, &us, None, exec)?;
    TuckerTensor::new(core, us)
}

/// `t ×_k U_kᵀ` for every mode `k ≠ skip`, contracting the modes with the
/// largest size reduction first.
/// Leading `k` left singular vectors of the mode-`n` unfolding, through
/// whichever Gram matrix is smaller.
fn mode_leading_vectors(t: &DenseTensor, n: usize, k: usize, exec: Exec) -> Result<DMatrix<f64>> {
    let size = t.shape()[n];
    if size <= t.len() / size {
        Ok(leading_eigenvectors(&mode_gram(t, n, exec), k))
    } else {
        Ok(leading_left_singular_vectors(&mode_unfolding(t, n), k))
    }
}

fn project_except(t: &DenseTensor, us: &[DMatrix<f64>], skip: Option<usize>, exec: Exec) -> Result<DenseTensor> {
    let mut modes: Vec<usize> = (0..t.order()).filter(|&k| Some(k) != skip).collect();
    modes.sort_by(|&a, &b| {
        let ra = us[a].ncols() as f64 / us[a].nrows() as f64;
        let rb = us[b].ncols() as f64 / us[b].nrows() as f64;
        ra.total_cmp(&rb)
    });
    let mut y = t.clone();
    for k in modes {
        y = ttm_with(&y, &us[k].transpose(), k, exec)?;
    }
    Ok(y)
}

/// Best rank-one approximation `g · u_1 ∘ … ∘ u_N` by HOOI with unit ranks.
///
/// `g > 0`; every vector except the last has its largest-magnitude entry
/// positive. For matrices this is the leading singular triple.
pub fn best_rank_one(t: &DenseTensor) -> Result<(f64, Vec<DVector<f64>>)> {
    let norm = t.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(FcpError::DegenerateComponent(
            "best rank-one approximation of a zero tensor".into(),
        ));
    }
    let order = t.order();
    let mut vecs: Vec<DVector<f64>> = match order {
        1 => vec![DVector::from_column_slice(t.data()) / norm],
        2 => {
            let (i, j) = (t.shape()[0], t.shape()[1]);
            let m = DMatrix::from_column_slice(i, j, t.data());
            let (u, _, v) = thin_svd(&m)?;
            let (u, v) = (u.column(0).into_owned(), v.column(0).into_owned());
            vec![u, v]
        }
        _ => {
            let exec = Exec::Sequential;
            let mut v: Vec<DVector<f64>> = (0..order)
                .map(|n| leading_eigenvectors(&mode_gram(t, n, exec), 1).column(0).into_owned())
                .collect();
            let mut g_old = 0.0;
            for _ in 0..1000 {
                for n in 0..order {
                    let w = contract_except(t, &v, n)?;
                    let wn = w.norm();
                    if wn > 0.0 {
                        v[n] = w / wn;
                    }
                }
                let g = contract_except(t, &v, order - 1)?.dot(&v[order - 1]).abs();
                if (g - g_old).abs() <= 1e-15 * g {
                    break;
                }
                g_old = g;
            }
            v
        }
    };
    // sign convention
    for n in 0..order.saturating_sub(1) {
        let k = vecs[n].iamax();
        if vecs[n][k] < 0.0 {
            vecs[n].neg_mut();
            vecs[order - 1].neg_mut();
        }
    }
    let mut g = if order == 1 {
        norm
    } else {
        contract_except(t, &vecs, order - 1)?.dot(&vecs[order - 1])
    };
    if g < 0.0 {
        g = -g;
        vecs[order - 1].neg_mut();
    }
    Ok((g, vecs))
}

/// `t ×_{k≠n} v_kᵀ` as a vector of length `I_n`.
fn contract_except(t: &DenseTensor, v: &[DVector<f64>], n: usize) -> Result<DVector<f64>> {
    let mut y = t.clone();
    for k in (0..t.order()).rev().filter(|&k| k != n) {
        y = ttm_with(&y, &DMatrix::from_row_slice(1, v[k].len(), v[k].as_slice()), k, Exec::Sequential)?;
    }
    Ok(DVector::from_column_slice(y.data()))
}
