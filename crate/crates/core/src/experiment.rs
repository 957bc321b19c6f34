//! Monte Carlo experiments on synthetic tensors: several decomposition
//! methods per noisy draw, scored by SAE against the ground truth and
//! against the numeric CRIB.

use crate::als::{cp_als, AlsOptions, FitReport, Init};
use crate::crib::{advise_unfolding, estimate_collinearity, ORTHOGONALITY_THRESHOLD};
use crate::error::{invalid, FcpError, Result};
use crate::exec::Exec;
use crate::fcp::{fcp, FcpMode, FcpOptions};
use crate::synth::{crib_numeric, generate, mean, sae, to_db, SaeReport, SynthSpec};
use crate::tensor::{DenseTensor, KruskalTensor, UnfoldingRule};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// CP-ALS on the full tensor.
    Als,
    /// FCP with rank-one reconstruction.
    RankOneFcp,
    /// FCP with low-rank reconstruction.
    Fcp,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Als => "als",
            Algorithm::RankOneFcp => "r1fcp",
            Algorithm::Fcp => "fcp",
        })
    }
}

impl FromStr for Algorithm {
    type Err = FcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "als" => Ok(Algorithm::Als),
            "r1fcp" | "rank1" | "rank-one" => Ok(Algorithm::RankOneFcp),
            "fcp" | "lowrank" | "low-rank" => Ok(Algorithm::Fcp),
            other => invalid(format!("unknown algorithm '{other}' (expected als, r1fcp or fcp)")),
        }
    }
}

/// How an FCP method picks its unfolding.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleChoice {
    Fixed(UnfoldingRule),
    /// Advisor applied to the true collinearity of the generator.
    Advised { target: usize },
    /// Decompose with `probe` first, estimate collinearity from that
    /// result, then decompose again with the advised rule.
    Probe { probe: UnfoldingRule, target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub label: String,
    pub algorithm: Algorithm,
    pub rule: Option<RuleChoice>,
    pub tau: f64,
    /// Also report the result after ALS refinement on the full tensor.
    pub refine: bool,
}

impl Method {
    pub fn als(label: &str) -> Self {
        Self { label: label.into(), algorithm: Algorithm::Als, rule: None, tau: 0.99, refine: false }
    }

    pub fn fcp(label: &str, algorithm: Algorithm, rule: RuleChoice) -> Self {
        Self { label: label.into(), algorithm, rule: Some(rule), tau: 0.99, refine: false }
    }

    pub fn fixed(label: &str, algorithm: Algorithm, rule: &str) -> Result<Self> {
        Ok(Self::fcp(label, algorithm, RuleChoice::Fixed(rule.parse()?)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub shape: Vec<usize>,
    pub rank: usize,
    pub collinearity: Vec<f64>,
    pub snr_db: f64,
    pub reps: usize,
    /// Run `i` draws its data from seed `seed + i`.
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Inner solver settings shared by all methods (`init` is replaced per run).
    pub als: AlsOptions,
    pub compute_crib: bool,
}

/// Names accepted by [`preset`]. `example7-small` is row 5 of the scaled
/// order-6 study; [`preset_group`] also accepts it and returns all six rows.
pub const PRESETS: [&str; 4] = ["example3", "example3b", "example7-small", "smoke"];

/// Order-6 study, `I_n = R = 8`, 0 dB: number of modes with `c = 0.1`
/// (the rest have 0.9) and the unfolding that ignores the advisor.
pub const ORDER6_ROWS: [(usize, &str); 6] = [
    (1, "2,3,(1,4,5,6)"),
    (2, "3,4,(1,2,5,6)"),
    (3, "4,5,(1,2,3,6)"),
    (4, "1,(2,3),(4,5,6)"),
    (5, "(1,2),(3,4),(5,6)"),
    (6, "(1,2),(3,4),(5,6)"),
];

/// Row `row` (1-based) of the scaled order-6 study: rank-one and low-rank
/// FCP, each with the advised rule and with the row's bad rule.
pub fn order6_row(row: usize) -> Result<Experiment> {
    let Some(&(low, bad)) = row.checked_sub(1).and_then(|i| ORDER6_ROWS.get(i)) else {
        return invalid(format!("order-6 study has rows 1..={}, got {row}", ORDER6_ROWS.len()));
    };
    // the unfolded CPD at 0 dB lands in a poor local minimum in roughly one
    // draw out of ten; the lowest-error of three starts avoids most of them
    let als = AlsOptions { max_iters: 1000, tol: 1e-8, starts: 3, ..AlsOptions::default() };
    let collinearity = (0..6).map(|n| if n < low { 0.1 } else { 0.9 }).collect();
    Ok(Experiment {
        name: format!("example7-small/{row}"),
        shape: vec![8; 6],
        rank: 8,
        collinearity,
        snr_db: 0.0,
        reps: 10,
        seed: 1,
        methods: vec![
            Method::fcp("r1fcp advised", Algorithm::RankOneFcp, RuleChoice::Advised { target: 3 }),
            Method::fcp("fcp advised", Algorithm::Fcp, RuleChoice::Advised { target: 3 }),
            Method::fixed(&format!("r1fcp bad {bad}"), Algorithm::RankOneFcp, bad)?,
            Method::fixed(&format!("fcp bad {bad}"), Algorithm::Fcp, bad)?,
        ],
        als,
        compute_crib: true,
    })
}

/// Experiments run together by a preset name: the six order-6 rows for
/// `example7-small`, a single experiment otherwise.
pub fn preset_group(name: &str) -> Result<Vec<Experiment>> {
    match name {
        "example7-small" => (1..=ORDER6_ROWS.len()).map(order6_row).collect(),
        _ => Ok(vec![preset(name)?]),
    }
}

/// Built-in experiment configurations.
pub fn preset(name: &str) -> Result<Experiment> {
    let als = AlsOptions { max_iters: 1000, tol: 1e-8, ..AlsOptions::default() };
    let exp = match name {
        "example3" => Experiment {
            name: name.into(),
            shape: vec![10; 5],
            rank: 10,
            collinearity: vec![0.1, 0.7, 0.7, 0.7, 0.8],
            snr_db: 10.0,
            reps: 30,
            seed: 1,
            methods: vec![
                Method::fixed("fcp l1 (1,4,5),2,3", Algorithm::Fcp, "(1,4,5),2,3")?,
                Method::fixed("fcp l2 1,2,(3,4,5)", Algorithm::Fcp, "1,2,(3,4,5)")?,
                Method::fixed("fcp l3 1,(2,3),(4,5)", Algorithm::Fcp, "1,(2,3),(4,5)")?,
            ],
            als,
            compute_crib: true,
        },
        "example3b" => Experiment {
            methods: vec![
                Method::fixed("fcp bad (1,4,5),2,3", Algorithm::Fcp, "(1,4,5),2,3")?,
                Method::fcp(
                    "fcp re-advised",
                    Algorithm::Fcp,
                    RuleChoice::Probe { probe: "(1,4,5),2,3".parse()?, target: 3 },
                ),
            ],
            name: name.into(),
            ..preset("example3")?
        },
        "example7-small" => order6_row(5)?,
        other if other.starts_with("example7-small/") => {
            let row = other["example7-small/".len()..]
                .parse()
                .map_err(|_| FcpError::InvalidArgument(format!("bad row in preset '{other}'")))?;
            order6_row(row)?
        }
        "smoke" => Experiment {
            name: name.into(),
            shape: vec![5, 5, 5, 5],
            rank: 3,
            collinearity: vec![0.1, 0.5, 0.5, 0.5],
            snr_db: 20.0,
            reps: 2,
            seed: 1,
            methods: vec![
                Method::als("als"),
                Method::fixed("r1fcp 1,2,(3,4)", Algorithm::RankOneFcp, "1,2,(3,4)")?,
                Method::fixed("fcp 1,2,(3,4)", Algorithm::Fcp, "1,2,(3,4)")?,
            ],
            als,
            compute_crib: true,
        },
        other => {
            return invalid(format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")));
        }
    };
    Ok(exp)
}

/// One method on one noisy draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub method: String,
    pub algorithm: Algorithm,
    pub rule: String,
    pub msae_db: f64,
    pub median_db: f64,
    pub refined_msae_db: Option<f64>,
    pub relative_error: f64,
    pub seconds: f64,
    /// `−10·log10` of the mean numeric CRIB over all modes and components.
    pub crib_db: Option<f64>,
    pub realized_snr_db: f64,
    #[serde(skip)]
    pub sae: Option<SaeReport>,
    /// Collinearity estimated by a probe run.
    #[serde(skip)]
    pub estimated_collinearity: Option<Vec<f64>>,
}

/// Averages over runs for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub msae_db: f64,
    pub median_db: f64,
    pub refined_msae_db: Option<f64>,
    pub crib_db: Option<f64>,
    /// `crib_db − msae_db`.
    pub loss_db: Option<f64>,
    pub relative_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub records: Vec<RunRecord>,
    pub summary: Vec<MethodSummary>,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return invalid("at least one repetition is required");
        }
        if self.methods.is_empty() {
            return invalid("no methods configured");
        }
        self.synth_spec(0).validate()?;
        self.als.validate()
    }

    pub fn synth_spec(&self, run: usize) -> SynthSpec {
        SynthSpec::new(
            self.shape.clone(),
            self.rank,
            self.collinearity.clone(),
            self.snr_db,
            self.seed.wrapping_add(run as u64),
        )
    }
}

/// Runs every method on `reps` independent draws. Draws run in parallel
/// under [`Exec::Parallel`]; the records do not depend on `exec`.
pub fn run_experiment(exp: &Experiment, exec: Exec) -> Result<ExperimentReport> {
    exp.validate()?;
    let inner = if exec.is_parallel() && exp.reps > 1 { Exec::Sequential } else { exec };
    let per_run = exec.map(exp.reps, |i| run_once(exp, i, inner));
    let mut records = Vec::new();
    for r in per_run {
        records.extend(r?);
    }
    let summary = summarize(&exp.methods, &records);
    Ok(ExperimentReport { name: exp.name.clone(), records, summary })
}

fn run_once(exp: &Experiment, run: usize, exec: Exec) -> Result<Vec<RunRecord>> {
    let spec = exp.synth_spec(run);
    let data = generate(&spec)?;
    let crib_db = if exp.compute_crib && data.noise_variance > 0.0 {
        let c = crib_numeric(&data.truth, data.noise_variance)?;
        let all: Vec<f64> = c.into_iter().flatten().collect();
        Some(to_db(mean(&all)))
    } else {
        None
    };
    let mut out = Vec::with_capacity(exp.methods.len());
    for m in &exp.methods {
        let started = Instant::now();
        let (est, fit, rule, estimated) = decompose_with(&data.noisy, exp, m, &spec, exec)?;
        let seconds = started.elapsed().as_secs_f64();
        let report = sae(&data.truth, &est)?;
        let refined_msae_db = if m.refine {
            let opts = AlsOptions { exec, init: Init::Given(est.clone()), starts: 1, ..exp.als.clone() };
            let (k, _) = cp_als(&data.noisy, exp.rank, &opts)?;
            Some(sae(&data.truth, &k)?.msae_db)
        } else {
            None
        };
        out.push(RunRecord {
            run,
            seed: spec.seed,
            method: m.label.clone(),
            algorithm: m.algorithm,
            rule,
            msae_db: report.msae_db,
            median_db: report.median_db,
            refined_msae_db,
            relative_error: fit.relative_error,
            seconds,
            crib_db,
            realized_snr_db: data.realized_snr_db,
            sae: Some(report),
            estimated_collinearity: estimated,
        });
    }
    Ok(out)
}

/// Runs one method; returns the estimate, its fit, the rule used and the
/// probe's collinearity estimate if any.
fn decompose_with(
    t: &DenseTensor,
    exp: &Experiment,
    m: &Method,
    spec: &SynthSpec,
    exec: Exec,
) -> Result<(KruskalTensor, FitReport, String, Option<Vec<f64>>)> {
    let als = AlsOptions { exec, init: Init::SvdLeading { seed: spec.seed }, ..exp.als.clone() };
    let run_fcp = |rule: UnfoldingRule| -> Result<(KruskalTensor, FitReport)> {
        let mut o = FcpOptions::new(rule);
        o.tau = m.tau;
        o.mode = if m.algorithm == Algorithm::RankOneFcp { FcpMode::RankOne } else { FcpMode::LowRank };
        o.unfolded_als = als.clone();
        o.structured_als = AlsOptions { init: Init::default(), starts: 1, ..als.clone() };
        o.refine_als = o.structured_als.clone();
        let (k, trace) = fcp(t, exp.rank, &o)?;
        Ok((k, trace.fit))
    };
    match (m.algorithm, &m.rule) {
        (Algorithm::Als, _) => {
            let (k, fit) = cp_als(t, exp.rank, &als)?;
            Ok((k, fit, "-".into(), None))
        }
        (_, None) => invalid(format!("method '{}' needs an unfolding rule", m.label)),
        (_, Some(RuleChoice::Fixed(rule))) => {
            let (k, fit) = run_fcp(rule.clone())?;
            Ok((k, fit, rule.to_string(), None))
        }
        (_, Some(RuleChoice::Advised { target })) => {
            let rule = advise_unfolding(&spec.collinearity, *target, ORTHOGONALITY_THRESHOLD)?;
            let (k, fit) = run_fcp(rule.clone())?;
            Ok((k, fit, rule.to_string(), None))
        }
        (_, Some(RuleChoice::Probe { probe, target })) => {
            let (first, _) = run_fcp(probe.clone())?;
            let profile = estimate_collinearity(&first)?;
            let rule = advise_unfolding(&profile.c, *target, ORTHOGONALITY_THRESHOLD)?;
            let (k, fit) = run_fcp(rule.clone())?;
            Ok((k, fit, rule.to_string(), Some(profile.c)))
        }
    }
}

fn summarize(methods: &[Method], records: &[RunRecord]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|m| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.method == m.label).collect();
            let avg = |f: &dyn Fn(&RunRecord) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let opt_avg = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = rs.iter().map(|r| f(r)).collect();
                v.map(|v| mean(&v))
            };
            let msae_db = avg(&|r| r.msae_db);
            let crib_db = opt_avg(&|r| r.crib_db);
            MethodSummary {
                method: m.label.clone(),
                runs: rs.len(),
                msae_db,
                median_db: avg(&|r| r.median_db),
                refined_msae_db: opt_avg(&|r| r.refined_msae_db),
                crib_db,
                loss_db: crib_db.map(|c| c - msae_db),
                relative_error: avg(&|r| r.relative_error),
                seconds: avg(&|r| r.seconds),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_err());
        let rows = preset_group("example7-small").unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].collinearity, vec![0.1, 0.9, 0.9, 0.9, 0.9, 0.9]);
        assert_eq!(preset("example7-small/6").unwrap().collinearity, vec![0.1; 6]);
        assert!(preset("example7-small/7").is_err());
        assert!(preset("example7-small/x").is_err());
        assert_eq!(preset_group("smoke").unwrap().len(), 1);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Als, Algorithm::RankOneFcp, Algorithm::Fcp] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("foo".parse::<Algorithm>().is_err());
    }

    #[test]
    fn smoke_is_deterministic_across_exec() {
        let exp = preset("smoke").unwrap();
        let a = run_experiment(&exp, Exec::Sequential).unwrap();
        let b = run_experiment(&exp, Exec::Parallel).unwrap();
        let strip = |r: &ExperimentReport| {
            r.records.iter().map(|x| (x.method.clone(), x.msae_db, x.relative_error, x.crib_db)).collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.summary.len(), 3);
        assert!(a.summary.iter().all(|s| s.runs == 2 && s.msae_db > 20.0));
    }

    #[test]
    fn probe_records_estimate() {
        let mut exp = preset("smoke").unwrap();
        exp.reps = 1;
        exp.methods = vec![Method::fcp(
            "probe",
            Algorithm::Fcp,
            RuleChoice::Probe { probe: "(1,2),3,4".parse().unwrap(), target: 3 },
        )];
        let rep = run_experiment(&exp, Exec::Sequential).unwrap();
        let c = rep.records[0].estimated_collinearity.clone().unwrap();
        assert_eq!(c.len(), 4);
        assert!((c[0] - 0.1).abs() < 0.1 && (c[2] - 0.5).abs() < 0.1, "{c:?}");
    }
}
