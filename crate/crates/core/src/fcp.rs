//! Fast CP decomposition through a generalized unfolding.
//!
//! Stage 1 compresses the unfolded tensor (Tucker/HOOI), stage 2 runs CP-ALS
//! on the low-order tensor, stage 3 recovers the original factors from the
//! merged ones, and the optional stage 4 refines with ALS on the full data.
//! Stage 3 either takes a best rank-one approximation of every merged
//! component, or splits one mode at a time with truncated SVDs and fits the
//! resulting structured tensor with [`structured_als`].

use crate::als::{best_rank_one, cp_als, tucker_hooi_with, AlsOptions, AlsTarget, FitReport, Init};
use crate::error::{invalid, FcpError, Result};
use crate::exec::Exec;
use crate::linalg::thin_svd;
use crate::structured::{structured_als, StructuredKruskal};
use crate::tensor::{inverse_permutation, DenseTensor, KruskalTensor, UnfoldingRule};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// τ below this triggers a warning in the trace.
pub const RECOMMENDED_MIN_TAU: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FcpMode {
    /// Best rank-one approximation of every merged component.
    RankOne,
    /// Sequential truncated-SVD splits with structured ALS.
    #[default]
    LowRank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcpOptions {
    pub rule: UnfoldingRule,
    /// Energy fraction kept by the truncated SVDs, in `(0, 1]`.
    pub tau: f64,
    pub mode: FcpMode,
    /// Finish with CP-ALS on the full tensor.
    pub refine: bool,
    /// Tucker-compress the unfolded tensor before stage 2.
    pub compress: bool,
    pub hooi_sweeps: usize,
    /// Upper bound on the number of split terms per component.
    pub j_max: usize,
    /// Rank used through stage 3 (`R⁺ ≥ R`); truncated to `R` afterwards.
    pub overshoot: Option<usize>,
    pub unfolded_als: AlsOptions,
    pub structured_als: AlsOptions,
    pub refine_als: AlsOptions,
    /// Keep the per-split tensors in the trace for [`error_ordering_check`].
    pub keep_artifacts: bool,
}

impl FcpOptions {
    pub fn new(rule: UnfoldingRule) -> Self {
        Self {
            rule,
            tau: 0.99,
            mode: FcpMode::default(),
            refine: false,
            compress: true,
            hooi_sweeps: 2,
            j_max: 10,
            overshoot: None,
            unfolded_als: AlsOptions::default(),
            structured_als: AlsOptions::default(),
            refine_als: AlsOptions::default(),
            keep_artifacts: false,
        }
    }

    /// Uses `exec` for every inner solver.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.unfolded_als.exec = exec;
        self.structured_als.exec = exec;
        self.refine_als.exec = exec;
        self
    }

    /// Checks the options against a tensor order and rank; returns warnings.
    pub fn validate(&self, order: usize, rank: usize) -> Result<Vec<String>> {
        self.rule.validate(order)?;
        if rank == 0 {
            return invalid("rank must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return invalid(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.j_max == 0 {
            return invalid("j_max must be at least 1");
        }
        if let Some(r) = self.overshoot {
            if r < rank {
                return invalid(format!("overshoot rank {r} is below the target rank {rank}"));
            }
        }
        self.unfolded_als.validate()?;
        self.structured_als.validate()?;
        self.refine_als.validate()?;
        let mut warnings = Vec::new();
        if self.mode == FcpMode::LowRank && self.tau < RECOMMENDED_MIN_TAU {
            warnings.push(format!("tau = {} is below the recommended {RECOMMENDED_MIN_TAU}", self.tau));
        }
        Ok(warnings)
    }
}

/// One sequential split of stage 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    /// Original (0-based) mode peeled off by this run.
    pub split_mode: usize,
    /// Rule of the working tensor after the split, 1-based.
    pub rule_after: String,
    pub block_ranks: Vec<usize>,
    /// Structured ALS ran (`Σ J_r > R`).
    pub structured: bool,
    pub seconds: f64,
    pub fit: Option<FitReport>,
}

/// Tensors retained from one split run.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitArtifacts {
    pub rule_before: UnfoldingRule,
    /// Working model before the split.
    pub kruskal_before: KruskalTensor,
    pub rule_after: UnfoldingRule,
    /// Full rank-`J` split of `kruskal_before`.
    pub y_j: KruskalTensor,
    /// Leading split terms only.
    pub y_r: KruskalTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcpTrace {
    pub rule: String,
    pub rank: usize,
    pub working_rank: usize,
    pub compressed: bool,
    pub compression_seconds: f64,
    pub unfolded_cpd_seconds: f64,
    pub reconstruction_seconds: f64,
    pub refinement_seconds: f64,
    pub total_seconds: f64,
    /// Stage 2 on the (possibly compressed) unfolded tensor.
    pub unfolded_fit: FitReport,
    pub runs: Vec<SplitRun>,
    /// Relative error of the stage-3 result on the full tensor.
    pub unrefined_error: f64,
    pub refined_fit: Option<FitReport>,
    /// Final fit on the full tensor.
    pub fit: FitReport,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub artifacts: Vec<SplitArtifacts>,
}

/// Runs the variant selected by `opts.mode`.
pub fn fcp(t: &DenseTensor, rank: usize, opts: &FcpOptions) -> Result<(KruskalTensor, FcpTrace)> {
    match opts.mode {
        FcpMode::RankOne => fcp_rank_one(t, rank, opts),
        FcpMode::LowRank => fcp_low_rank(t, rank, opts),
    }
}

/// Rank-one FCP: every merged component is replaced by its best rank-one
/// approximation.
pub fn fcp_rank_one(t: &DenseTensor, rank: usize, opts: &FcpOptions) -> Result<(KruskalTensor, FcpTrace)> {
    run(t, rank, opts, FcpMode::RankOne)
}

/// Low-rank FCP with sequential two-mode splits and structured ALS.
pub fn fcp_low_rank(t: &DenseTensor, rank: usize, opts: &FcpOptions) -> Result<(KruskalTensor, FcpTrace)> {
    run(t, rank, opts, FcpMode::LowRank)
}

fn run(t: &DenseTensor, rank: usize, opts: &FcpOptions, mode: FcpMode) -> Result<(KruskalTensor, FcpTrace)> {
    let start = Instant::now();
    let mut opts_used = opts.clone();
    opts_used.mode = mode;
    let warnings = opts_used.validate(t.order(), rank)?;
    if t.norm_sq() == 0.0 {
        return invalid("cannot decompose a zero tensor");
    }
    let working_rank = opts.overshoot.unwrap_or(rank);
    let exec = opts.unfolded_als.exec;

    // stages 1 and 2
    let (merged, unfolded_fit, compressed, compression_seconds, unfolded_cpd_seconds) =
        unfolded_cpd(t, working_rank, opts)?;

    // stage 3
    let t3 = Instant::now();
    let mut runs = Vec::new();
    let mut artifacts = Vec::new();
    let (working_rule, model) = match mode {
        FcpMode::RankOne => (
            UnfoldingRule::identity(t.order()),
            rank_one_reconstruction(&merged, &opts.rule, t.shape(), exec)?,
        ),
        FcpMode::LowRank => {
            low_rank_reconstruction(&merged, &opts.rule, t.shape(), opts, &mut runs, &mut artifacts)?
        }
    };
    let model = restore_mode_order(&model, &working_rule)?;
    let model = model.truncate(rank)?;
    let reconstruction_seconds = t3.elapsed().as_secs_f64();

    let norm = t.norm();
    let unrefined_error = t.residual(model.weights(), model.factors(), exec)? / norm;

    // stage 4
    let t4 = Instant::now();
    let (model, refined_fit) = if opts.refine {
        let ropts = opts.refine_als.clone().with_init(Init::Given(model));
        let (k, fit) = cp_als(t, rank, &ropts)?;
        (k, Some(fit))
    } else {
        (model, None)
    };
    let refinement_seconds = if opts.refine { t4.elapsed().as_secs_f64() } else { 0.0 };
    let final_error = match &refined_fit {
        Some(f) => f.relative_error,
        None => unrefined_error,
    };
    let total_seconds = start.elapsed().as_secs_f64();
    let iterations = unfolded_fit.iterations + refined_fit.as_ref().map_or(0, |f| f.iterations);
    let degenerate = unfolded_fit.degenerate || refined_fit.as_ref().is_some_and(|f| f.degenerate);
    let fit = FitReport::new(final_error, iterations, total_seconds, Vec::new(), degenerate);
    let trace = FcpTrace {
        rule: opts.rule.to_string(),
        rank,
        working_rank,
        compressed,
        compression_seconds,
        unfolded_cpd_seconds,
        reconstruction_seconds,
        refinement_seconds,
        total_seconds,
        unfolded_fit,
        runs,
        unrefined_error,
        refined_fit,
        fit,
        warnings,
        artifacts,
    };
    Ok((model, trace))
}

/// Stages 1-2: the normalized rank-`rank` CPD of `unfold(t, rule)`.
fn unfolded_cpd(t: &DenseTensor, rank: usize, opts: &FcpOptions) -> Result<(KruskalTensor, FitReport, bool, f64, f64)> {
    let exec = opts.unfolded_als.exec;
    let t1 = Instant::now();
    let y = t.unfold_with(&opts.rule, exec)?;
    let ranks: Vec<usize> = y.shape().iter().map(|&l| l.min(rank)).collect();
    let compress = opts.compress && ranks.as_slice() != y.shape();
    if !compress {
        let prep = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let (k, fit) = cp_als(&y, rank, &opts.unfolded_als)?;
        return Ok((k.normalize()?, fit, false, prep, t2.elapsed().as_secs_f64()));
    }
    let tucker = tucker_hooi_with(&y, &ranks, opts.hooi_sweeps, exec)?;
    let compression_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut als = opts.unfolded_als.clone();
    if let Init::Given(k) = &als.init {
        let (w, f) = k.unfold(&opts.rule)?.into_parts();
        let projected = f.iter().zip(tucker.factors()).map(|(a, u)| u.tr_mul(a)).collect();
        als.init = Init::Given(KruskalTensor::new(w, projected)?);
    }
    let (core_k, core_fit) = cp_als(tucker.core(), rank, &als)?;
    let (w, f) = core_k.into_parts();
    let lifted = f.iter().zip(tucker.factors()).map(|(b, u)| u * b).collect();
    let merged = KruskalTensor::new(w, lifted)?.normalize()?;
    // report the error on the uncompressed unfolding
    let err = y.residual(merged.weights(), merged.factors(), exec)? / y.norm();
    let seconds = t2.elapsed().as_secs_f64();
    let fit = FitReport::new(
        err,
        core_fit.iterations,
        seconds,
        core_fit.history,
        core_fit.degenerate,
    );
    Ok((merged, fit, true, compression_seconds, seconds))
}

/// Reorders the factors of an all-singleton working model to modes `0..N`.
fn restore_mode_order(model: &KruskalTensor, working_rule: &UnfoldingRule) -> Result<KruskalTensor> {
    let perm = working_rule.permutation();
    model.permute_modes(&inverse_permutation(&perm))?.normalize()
}

fn rank_one_reconstruction(
    merged: &KruskalTensor,
    rule: &UnfoldingRule,
    shape: &[usize],
    exec: Exec,
) -> Result<KruskalTensor> {
    let r = merged.rank();
    let mut weights = merged.weights().to_vec();
    let mut factors: Vec<Option<DMatrix<f64>>> = vec![None; shape.len()];
    for (m, group) in rule.groups().iter().enumerate() {
        let b = merged.factor(m);
        if group.len() == 1 {
            factors[group[0]] = Some(b.clone());
            continue;
        }
        let gshape: Vec<usize> = group.iter().map(|&k| shape[k]).collect();
        let parts = exec.map(r, |j| {
            let col = DenseTensor::new(gshape.clone(), b.column(j).iter().copied().collect())?;
            best_rank_one(&col).map_err(|e| {
                FcpError::DegenerateComponent(format!("group {} component {}: {e}", m + 1, j + 1))
            })
        });
        let mut cols: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(r); group.len()];
        for (j, p) in parts.into_iter().enumerate() {
            let (g, vecs) = p?;
            weights[j] *= g;
            for (k, v) in vecs.into_iter().enumerate() {
                cols[k].push(v);
            }
        }
        for (k, &mode) in group.iter().enumerate() {
            factors[mode] = Some(DMatrix::from_columns(&cols[k]));
        }
    }
    let factors = factors.into_iter().map(|f| f.expect("rule covers every mode")).collect();
    KruskalTensor::new(weights, factors)
}

/// Smallest `J` whose leading singular values carry a `tau` share of the
/// energy, capped at `cap`. Numerically zero singular values never count.
fn block_rank(sigma: &[f64], tau: f64, cap: usize) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let nonzero = sigma.iter().take_while(|&&s| s > sigma[0] * f64::EPSILON).count().max(1);
    let mut cum = 0.0;
    let mut j = sigma.len();
    for (k, s) in sigma.iter().enumerate() {
        cum += s * s;
        if cum >= tau * total {
            j = k + 1;
            break;
        }
    }
    j.min(cap).min(nonzero).max(1)
}

struct Split {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

/// Peels the first mode of the group at working position `p`.
fn split_group(
    model: &KruskalTensor,
    rule: &UnfoldingRule,
    p: usize,
    shape: &[usize],
    opts: &FcpOptions,
) -> Result<(UnfoldingRule, Vec<Split>)> {
    let group = &rule.groups()[p];
    let rows = shape[group[0]];
    let cols: usize = group[1..].iter().map(|&k| shape[k]).product();
    let cap = rows.min(cols).min(opts.j_max);
    let a = model.factor(p);
    let exec = opts.structured_als.exec;
    let splits = exec.map(model.rank(), |j| {
        let f = DMatrix::from_column_slice(rows, cols, a.column(j).as_slice());
        let (u, s, v) = thin_svd(&f).map_err(|e| {
            FcpError::Numeric(format!("group {} split of mode {} component {}: {e}", p + 1, group[0] + 1, j + 1))
        })?;
        if !(s[0] > 0.0) {
            return Err(FcpError::DegenerateComponent(format!(
                "component {} vanishes in group {}",
                j + 1,
                p + 1
            )));
        }
        let k = block_rank(&s, opts.tau, cap);
        Ok(Split { u: u.columns(0, k).into_owned(), sigma: s[..k].to_vec(), v: v.columns(0, k).into_owned() })
    });
    let splits = splits.into_iter().collect::<Result<Vec<_>>>()?;
    let mut groups = rule.groups().to_vec();
    let rest = groups[p].split_off(1);
    groups.insert(p + 1, rest);
    Ok((UnfoldingRule::new(groups)?, splits))
}

fn low_rank_reconstruction(
    merged: &KruskalTensor,
    rule: &UnfoldingRule,
    shape: &[usize],
    opts: &FcpOptions,
    runs: &mut Vec<SplitRun>,
    artifacts: &mut Vec<SplitArtifacts>,
) -> Result<(UnfoldingRule, KruskalTensor)> {
    let r = merged.rank();
    let mut model = merged.clone();
    let mut working = rule.clone();
    // last group first, so earlier positions stay valid
    for g in (0..rule.len()).rev() {
        // the unsplit remainder of the group moves one position right per split
        let mut m = g;
        while working.groups()[m].len() > 1 {
            let started = Instant::now();
            let split_mode = working.groups()[m][0];
            let (next, splits) = split_group(&model, &working, m, shape, opts)?;
            let block_ranks: Vec<usize> = splits.iter().map(|s| s.sigma.len()).collect();
            let order = next.len();

            // leading triples
            let mut lead = Vec::with_capacity(order);
            lead.extend(model.factors()[..m].iter().cloned());
            lead.push(DMatrix::from_columns(&splits.iter().map(|s| s.u.column(0).into_owned()).collect::<Vec<_>>()));
            lead.push(DMatrix::from_columns(&splits.iter().map(|s| s.v.column(0).into_owned()).collect::<Vec<_>>()));
            lead.extend(model.factors()[m + 1..].iter().cloned());
            let lead_w: Vec<f64> = model.weights().iter().zip(&splits).map(|(l, s)| l * s.sigma[0]).collect();
            let y_r = KruskalTensor::new(lead_w, lead)?;

            let structured = block_ranks.iter().sum::<usize>() > r;
            let need_yj = structured || opts.keep_artifacts;
            // split pair last
            let omega: Vec<usize> = (0..order).filter(|&k| k != m && k != m + 1).chain([m, m + 1]).collect();
            let back = inverse_permutation(&omega);
            let s = if need_yj {
                let shared: Vec<DMatrix<f64>> =
                    (0..model.order()).filter(|&k| k != m).map(|k| model.factor(k).clone()).collect();
                Some(StructuredKruskal::new(
                    model.weights().to_vec(),
                    shared,
                    splits.iter().map(|s| s.u.clone()).collect(),
                    splits.iter().map(|s| s.v.clone()).collect(),
                    splits.iter().map(|s| s.sigma.clone()).collect(),
                )?)
            } else {
                None
            };
            let (new_model, fit) = match (&s, structured) {
                (Some(s), true) => {
                    let init = y_r.permute_modes(&omega)?;
                    let (k, fit) = structured_als(s, r, &init, &opts.structured_als)?;
                    (k.permute_modes(&back)?.normalize()?, Some(fit))
                }
                _ => (y_r.normalize()?, None),
            };
            if opts.keep_artifacts {
                let y_j = s.as_ref().expect("built when artifacts are kept").to_kruskal().permute_modes(&back)?;
                artifacts.push(SplitArtifacts {
                    rule_before: working.clone(),
                    kruskal_before: model.clone(),
                    rule_after: next.clone(),
                    y_j,
                    y_r: y_r.clone(),
                });
            }
            runs.push(SplitRun {
                split_mode,
                rule_after: next.to_string(),
                block_ranks,
                structured,
                seconds: started.elapsed().as_secs_f64(),
                fit,
            });
            model = new_model;
            working = next;
            m += 1;
        }
    }
    Ok((working, model))
}

/// `(‖E‖², ‖Y − Ỹ_J‖², ‖Y − Ỹ_R‖²)` for one split run, computed densely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualChain {
    pub unfolded: f64,
    pub split_full: f64,
    pub split_leading: f64,
}

impl ResidualChain {
    /// Relative slack used by [`ResidualChain::is_ordered`].
    pub const SLACK: f64 = 1e-9;

    /// `‖E‖² ≤ ‖Y − Ỹ_J‖² ≤ ‖Y − Ỹ_R‖²` up to [`Self::SLACK`].
    pub fn is_ordered(&self) -> bool {
        let s = Self::SLACK * self.split_leading.max(f64::MIN_POSITIVE);
        self.unfolded <= self.split_full + s && self.split_full <= self.split_leading + s
    }

    pub fn check(&self) -> Result<()> {
        if self.is_ordered() {
            Ok(())
        } else {
            Err(FcpError::Numeric(format!(
                "residual ordering violated: {:e}, {:e}, {:e}",
                self.unfolded, self.split_full, self.split_leading
            )))
        }
    }
}

/// Dense residuals of the tensors kept from one low-rank split.
pub fn error_ordering_check(t: &DenseTensor, art: &SplitArtifacts) -> Result<ResidualChain> {
    let sq = |rule: &UnfoldingRule, k: &KruskalTensor| -> Result<f64> {
        if k.order() != rule.len() {
            return Err(FcpError::InvalidState("artifact order does not match its rule".into()));
        }
        let y = t.unfold(rule)?;
        let r = y.residual(k.weights(), k.factors(), Exec::Sequential)?;
        Ok(r * r)
    };
    Ok(ResidualChain {
        unfolded: sq(&art.rule_before, &art.kruskal_before)?,
        split_full: sq(&art.rule_after, &art.y_j)?,
        split_leading: sq(&art.rule_after, &art.y_r)?,
    })
}

/// Artifacts of the first split of a traced run.
pub fn first_artifacts(trace: &FcpTrace) -> Result<&SplitArtifacts> {
    trace
        .artifacts
        .first()
        .ok_or_else(|| FcpError::InvalidState("run kept no split artifacts".into()))
}
