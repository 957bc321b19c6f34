//! One function per subcommand.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use fcp_core::als::{cp_als, AlsOptions, FitReport, Init};
use fcp_core::crib::{advise_unfolding, crib_table, estimate_collinearity, CollinearityProfile};
use fcp_core::experiment::{preset_group, run_experiment, Algorithm};
use fcp_core::fcp::{fcp, FcpMode, FcpOptions, FcpTrace};
use fcp_core::synth::{sae, SaeReport, SynthSpec};
use fcp_core::tensor::{read_kruskal, read_tensor, write_kruskal, write_tensor};
use fcp_core::{DenseTensor, Exec, FcpError, KruskalTensor, UnfoldingRule};

use crate::output::{self, Table};
use crate::{AdviseArgs, BenchArgs, CribArgs, DecomposeArgs, Format, GenerateArgs, InitArg};

/// Sizes the global rayon pool and picks the execution policy.
pub fn configure_threads(threads: usize) -> Result<Exec> {
    if threads == 0 {
        return Err(FcpError::InvalidArgument("--threads must be at least 1".into()).into());
    }
    if threads == 1 {
        return Ok(Exec::Sequential);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot start the worker pool")?;
    Ok(Exec::Parallel)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_tensor(path: &Path) -> Result<DenseTensor> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_tensor(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn load_kruskal(path: &Path) -> Result<KruskalTensor> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_kruskal(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn save_kruskal(path: &Path, k: &KruskalTensor) -> Result<()> {
    let mut w = create(path)?;
    write_kruskal(&mut w, k)?;
    w.flush()?;
    Ok(())
}

/// Repeats a single value `order` times.
fn broadcast(values: &[f64], order: usize) -> Vec<f64> {
    if values.len() == 1 {
        vec![values[0]; order]
    } else {
        values.to_vec()
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct GenerateReport {
    tensor: String,
    truth: String,
    shape: Vec<usize>,
    rank: usize,
    collinearity: Vec<f64>,
    seed: u64,
    noise_variance: f64,
    realized_snr_db: f64,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let mut spec = SynthSpec::new(
        a.shape.clone(),
        a.rank,
        broadcast(&a.collinearity, a.shape.len()),
        a.snr,
        a.seed,
    );
    spec.weights = a.weights.clone();
    let data = fcp_core::synth::generate(&spec)?;
    let tensor_path = PathBuf::from(format!("{}.fcpt", a.output));
    let truth_path = PathBuf::from(format!("{}.fcpk", a.output));
    let mut w = create(&tensor_path)?;
    write_tensor(&mut w, &data.noisy)?;
    w.flush()?;
    save_kruskal(&truth_path, &data.truth)?;

    let rep = GenerateReport {
        tensor: tensor_path.display().to_string(),
        truth: truth_path.display().to_string(),
        shape: spec.shape.clone(),
        rank: spec.rank,
        collinearity: spec.collinearity.clone(),
        seed: spec.seed,
        noise_variance: data.noise_variance,
        realized_snr_db: data.realized_snr_db,
    };
    match a.format {
        Format::Json => print_json(&rep),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["schema", "tensor", "truth", "seed", "noise_variance", "realized_snr_db"])?;
            w.write_record([
                "fcpd.generate.v1".to_string(),
                rep.tensor,
                rep.truth,
                rep.seed.to_string(),
                rep.noise_variance.to_string(),
                rep.realized_snr_db.to_string(),
            ])?;
            w.flush()?;
            Ok(())
        }
        Format::Table => {
            println!("wrote {} and {}", rep.tensor, rep.truth);
            println!("realized SNR: {:.4} dB", rep.realized_snr_db);
            println!("noise variance: {:e}", rep.noise_variance);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SaeSummary {
    msae_db: f64,
    median_db: f64,
    mode_mean_db: Vec<f64>,
    mode_median_db: Vec<f64>,
}

impl From<&SaeReport> for SaeSummary {
    fn from(s: &SaeReport) -> Self {
        Self {
            msae_db: s.msae_db,
            median_db: s.median_db,
            mode_mean_db: s.mode_mean_db.clone(),
            mode_median_db: s.mode_median_db.clone(),
        }
    }
}

#[derive(Serialize)]
struct DecomposeReport {
    algorithm: Algorithm,
    rank: usize,
    rule: String,
    output: String,
    fit: FitReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<FcpTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sae: Option<SaeSummary>,
}

pub fn decompose(a: &DecomposeArgs, exec: Exec) -> Result<()> {
    let t = load_tensor(&a.input)?;
    let init = match a.init {
        InitArg::Svd => Init::SvdLeading { seed: a.seed },
        InitArg::Random => Init::Random { seed: a.seed },
    };
    let als = AlsOptions { max_iters: a.max_iters, tol: a.tol, init, exec, starts: a.starts, ..AlsOptions::default() };
    let rule: UnfoldingRule = match &a.rule {
        Some(s) => s.parse()?,
        None => UnfoldingRule::identity(t.order()),
    };

    let (est, fit, trace) = match a.alg {
        Algorithm::Als => {
            if a.rule.is_some() {
                eprintln!("warning: --rule is ignored by --alg als");
            }
            let (k, fit) = cp_als(&t, a.rank, &als)?;
            (k, fit, None)
        }
        alg => {
            let mut o = FcpOptions::new(rule.clone()).with_exec(exec);
            o.tau = a.tau;
            o.mode = if alg == Algorithm::RankOneFcp { FcpMode::RankOne } else { FcpMode::LowRank };
            o.refine = a.refine;
            o.compress = !a.no_compress;
            o.overshoot = a.overshoot;
            o.j_max = a.j_max;
            o.unfolded_als = als.clone();
            o.structured_als = AlsOptions { init: Init::Random { seed: a.seed }, starts: 1, ..als.clone() };
            o.refine_als = o.structured_als.clone();
            let (k, trace) = fcp(&t, a.rank, &o)?;
            for w in &trace.warnings {
                eprintln!("warning: {w}");
            }
            (k, trace.fit.clone(), Some(trace))
        }
    };

    let out_path = a.output.clone().unwrap_or_else(|| a.input.with_extension("est.fcpk"));
    save_kruskal(&out_path, &est)?;
    let sae = match &a.truth {
        Some(p) => Some(sae(&load_kruskal(p)?, &est)?),
        None => None,
    };

    let rep = DecomposeReport {
        algorithm: a.alg,
        rank: a.rank,
        rule: if a.alg == Algorithm::Als { "-".into() } else { rule.to_string() },
        output: out_path.display().to_string(),
        fit,
        trace,
        sae: sae.as_ref().map(SaeSummary::from),
    };
    match a.format {
        Format::Json => print_json(&rep),
        Format::Csv => output::decompose_csv(&rep.algorithm.to_string(), &rep.rule, &rep.fit, rep.trace.as_ref(), sae.as_ref()),
        Format::Table => {
            let mut tab = Table::new(["quantity", "value"]);
            tab.row(["algorithm".into(), rep.algorithm.to_string()]);
            tab.row(["rule".into(), rep.rule.clone()]);
            tab.row(["rank".into(), rep.rank.to_string()]);
            tab.row(["relative error".into(), format!("{:.6e}", rep.fit.relative_error)]);
            tab.row(["fit %".into(), format!("{:.4}", rep.fit.fit_percent)]);
            tab.row(["iterations".into(), rep.fit.iterations.to_string()]);
            if let Some(tr) = &rep.trace {
                tab.row(["compressed".into(), tr.compressed.to_string()]);
                tab.row(["compression s".into(), format!("{:.4}", tr.compression_seconds)]);
                tab.row(["unfolded CPD s".into(), format!("{:.4}", tr.unfolded_cpd_seconds)]);
                tab.row(["reconstruction s".into(), format!("{:.4}", tr.reconstruction_seconds)]);
                tab.row(["refinement s".into(), format!("{:.4}", tr.refinement_seconds)]);
                tab.row(["total s".into(), format!("{:.4}", tr.total_seconds)]);
                tab.row(["unfolded error".into(), format!("{:.6e}", tr.unfolded_fit.relative_error)]);
                for run in &tr.runs {
                    tab.row([
                        format!("split mode {}", run.split_mode + 1),
                        format!("ranks {:?} -> {}", run.block_ranks, run.rule_after),
                    ]);
                }
            } else {
                tab.row(["total s".into(), format!("{:.4}", rep.fit.seconds)]);
            }
            if let Some(s) = &rep.sae {
                tab.row(["MSAE dB".into(), format!("{:.3}", s.msae_db)]);
                tab.row(["median SAE dB".into(), format!("{:.3}", s.median_db)]);
            }
            tab.row(["estimate".into(), rep.output.clone()]);
            tab.print();
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AdviseReport {
    rule: String,
    collinearity: Vec<f64>,
    estimated: bool,
    target_order: usize,
}

pub fn advise(a: &AdviseArgs) -> Result<()> {
    let (c, estimated) = match (&a.collinearity, &a.from) {
        (Some(c), _) => (c.clone(), false),
        (None, Some(p)) => (estimate_collinearity(&load_kruskal(p)?)?.c, true),
        (None, None) => return Err(FcpError::InvalidArgument("give --collinearity or --from".into()).into()),
    };
    let rule = advise_unfolding(&c, a.target_order, a.threshold)?;
    let rep = AdviseReport { rule: rule.to_string(), collinearity: c, estimated, target_order: a.target_order };
    match a.format {
        Format::Json => print_json(&rep),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["schema", "mode", "collinearity", "rule"])?;
            for (n, c) in rep.collinearity.iter().enumerate() {
                w.write_record(["fcpd.advise.v1".to_string(), (n + 1).to_string(), c.to_string(), rep.rule.clone()])?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Table => {
            let c: Vec<String> = rep.collinearity.iter().map(|x| format!("{x:.4}")).collect();
            let source = if rep.estimated { "estimated" } else { "given" };
            println!("collinearity ({source}): {}", c.join(", "));
            println!("{}", rep.rule);
            Ok(())
        }
    }
}

pub fn crib(a: &CribArgs) -> Result<()> {
    let order = a.order.unwrap_or(a.collinearity.len());
    if a.collinearity.len() != 1 && a.collinearity.len() != order {
        return Err(FcpError::InvalidArgument(format!(
            "--order {order} does not match {} collinearity values",
            a.collinearity.len()
        ))
        .into());
    }
    let p = CollinearityProfile::new(broadcast(&a.collinearity, order), a.theta, a.i1, a.rank)?;
    let rules = a.rules.iter().map(|r| r.parse()).collect::<fcp_core::Result<Vec<UnfoldingRule>>>()?;
    let reports = crib_table(&p, &rules)?;
    match a.format {
        Format::Json => print_json(&reports),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["schema", "rule", "bound", "bound_db", "loss_db"])?;
            for r in &reports {
                w.write_record([
                    "fcpd.crib.v1".to_string(),
                    r.rule.clone().unwrap_or_else(|| "full".into()),
                    r.bound.to_string(),
                    r.bound_db.to_string(),
                    r.loss_db.map(|x| x.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Table => {
            let mut tab = Table::new(["rule", "CRIB", "dB", "loss dB"]);
            for r in &reports {
                tab.row([
                    r.rule.clone().unwrap_or_else(|| "full".into()),
                    format!("{:.6e}", r.bound),
                    format!("{:.3}", r.bound_db),
                    r.loss_db.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
                ]);
            }
            tab.print();
            Ok(())
        }
    }
}

pub fn bench(a: &BenchArgs, exec: Exec) -> Result<()> {
    let mut reports = Vec::new();
    for mut exp in preset_group(&a.preset)? {
        if let Some(r) = a.reps {
            exp.reps = r;
        }
        if let Some(s) = a.seed {
            exp.seed = s;
        }
        reports.push(run_experiment(&exp, exec)?);
    }

    match &a.output {
        Some(p) => {
            let mut w = create(p)?;
            output::runs_csv(&mut w, &reports, a.timing)?;
            w.flush()?;
        }
        None if a.format != Format::Csv => {
            output::runs_csv(&mut std::io::stdout().lock(), &reports, a.timing)?;
            println!();
        }
        None => {}
    }
    if let Some(p) = &a.sae_output {
        let mut w = create(p)?;
        output::sae_csv(&mut w, &reports)?;
        w.flush()?;
    }
    output::summary(&reports, a.format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_single_value() {
        assert_eq!(broadcast(&[0.5], 3), vec![0.5; 3]);
        assert_eq!(broadcast(&[0.1, 0.2], 3), vec![0.1, 0.2]);
    }

    #[test]
    fn zero_threads_is_usage_error() {
        let e = configure_threads(0).unwrap_err();
        assert_eq!(crate::exit_code(&e), crate::EXIT_USAGE);
    }

    #[test]
    fn generate_spec_is_validated() {
        let spec = SynthSpec::new(vec![3, 3], 5, vec![0.0, 0.0], 10.0, 0);
        assert!(fcp_core::synth::generate(&spec).is_err());
    }
}
