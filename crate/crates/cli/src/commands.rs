use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use uniloss::bregman::{separable_constant, SampleSpec};
use uniloss::cluster::{universality_chain_check, Dataset, KMeansOpts};
use uniloss::forecast::{
    evaluate, fit_logistic, load_forecasts, recalibrate, synth_generate, write_forecasts, FitOpts, LogisticModel,
    LossTable, SynthModel, SynthSpec,
};
use uniloss::numeric::linspace;
use uniloss::pacbayes::{
    lambda_grid, minimize_over_lambda, monte_carlo_validity, pac_bayes_bound, pac_bound,
    universal_pac_bayes_bound, BoundInputs, BoundKind, HarnessSpec,
};
use uniloss::project::{ball_sweep, mean_sweep, BallMode, Metric, SolverOpts, SweepGenerator, SweepTable};
use uniloss::proper_loss::{check_admissible, partial_losses, universality_constant, weight, Entropy};
use uniloss::registry::Registry;
use uniloss::verify::{
    expected_bound_check, local_fisher_check, pinsker_compare, verify_thm1, verify_thm2, verify_thm3, BoundReport,
    JointWeights, DEFAULT_SLACK, TOLERANCE,
};
use uniloss::{Error, ExtendedReal, Result};

use crate::args::*;
use crate::output::{emit, sink, Meta};

/// Runs the parsed command; `Ok(false)` means a check ran and failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let meta = Meta::new(cli)?;
    match &cli.command {
        Command::Verify(cmd) => verify(cli, &meta, cmd),
        Command::Project(cmd) => project(cli, &meta, cmd),
        Command::Cluster(args) => cluster(cli, &meta, args),
        Command::Pacbayes(cmd) => pacbayes(cli, &meta, cmd),
        Command::Forecast(cmd) => forecast(cli, &meta, cmd),
        Command::Losses(cmd) => losses(cli, &meta, cmd),
    }
}

fn registry() -> &'static Registry {
    Registry::builtin()
}

fn sample_spec(s: &SamplerArgs, seed: u64) -> SampleSpec {
    SampleSpec {
        grid_step: s.grid_step,
        n_random: s.n_random,
        seed,
        corner_margin: s.corner_margin,
    }
}

fn report_bound(cli: &Cli, meta: &Meta, r: &BoundReport) -> Result<bool> {
    emit(cli, meta, r)?;
    if !r.pass {
        if let Some((p, q)) = &r.worst_pair {
            eprintln!(
                "{} violated at C = {}: lhs - C*rhs = {:e} at p = {p:?}, q = {q:?}",
                r.inequality_id, r.constant_used, r.max_violation
            );
        }
    }
    for pre in r.preconditions.iter().filter(|p| !p.pass) {
        eprintln!("precondition {} failed: {}", pre.name, pre.detail);
    }
    Ok(r.certified())
}

fn verify(cli: &Cli, meta: &Meta, cmd: &VerifyCmd) -> Result<bool> {
    let reg = registry();
    match cmd {
        VerifyCmd::Thm1 { loss, constant, grid } => {
            let g = reg.entropy(loss)?;
            let c = constant.resolve(universality_constant(g.as_ref())?);
            report_bound(cli, meta, &verify_thm1(g.as_ref(), c, *grid)?)
        }
        VerifyCmd::Thm2 { generator, dim, constant, sampler } => {
            let e = reg.generator(generator, *dim)?;
            let c = constant.resolve(e.constant_bound);
            let r = verify_thm2(e.generator.as_ref(), c, &sample_spec(sampler, cli.seed))?;
            report_bound(cli, meta, &r)
        }
        VerifyCmd::Thm3 { scalar, constant, sampler } => {
            let g = reg.scalar_generator(scalar)?;
            let c = constant.resolve(separable_constant(g.as_ref()).value());
            let r = verify_thm3(g.as_ref(), c, &sample_spec(sampler, cli.seed))?;
            report_bound(cli, meta, &r)
        }
        VerifyCmd::Local { loss, p, constant, dp0, halvings } => {
            let g = reg.entropy(loss)?;
            let c = constant.resolve(universality_constant(g.as_ref())?);
            let r = local_fisher_check(g.as_ref(), c, *p, *dp0, *halvings)?;
            emit(cli, meta, &r)?;
            if !r.pass {
                eprintln!("local ratio limsup {} exceeds 1 at p = {p}", r.limsup_estimate);
            }
            Ok(r.pass)
        }
        VerifyCmd::Pinsker { p, q } => {
            #[derive(Serialize)]
            struct Out {
                #[serde(flatten)]
                triple: uniloss::verify::PinskerTriple,
                ordered: bool,
            }
            let triple = pinsker_compare(p, q)?;
            let ordered = triple.ordered();
            emit(cli, meta, &Out { triple, ordered })?;
            Ok(ordered)
        }
        VerifyCmd::Ib { generator, dim, nx, nt, constant, sampler } => {
            let e = reg.generator(generator, *dim)?;
            let c = constant.resolve(e.constant_bound);
            let jw = JointWeights::random(*nx, *nt, *dim, cli.seed);
            let r = expected_bound_check(e.generator.as_ref(), c, &jw, &sample_spec(sampler, cli.seed))?;
            report_bound(cli, meta, &r)
        }
    }
}

fn sweep_generators(names: &[String], m: usize, slack: f64) -> Result<Vec<SweepGenerator>> {
    names
        .iter()
        .filter(|n| n.as_str() != "kl")
        .map(|n| {
            let e = registry().generator(n, m)?;
            Ok(SweepGenerator { f: e.generator, c: e.constant_bound * (1.0 + slack) })
        })
        .collect()
}

fn write_table(cli: &Cli, meta: &Meta, table: &SweepTable, format: Format) -> Result<bool> {
    match format {
        Format::Csv => table.write_csv(sink(cli)?, &meta.header())?,
        Format::Json => emit(cli, meta, table)?,
    }
    let excess = table.max_chain_excess();
    if excess > TOLERANCE {
        eprintln!("a divergence exceeds C times KL by {excess:e}");
        return Ok(false);
    }
    Ok(true)
}

fn project(cli: &Cli, meta: &Meta, cmd: &ProjectCmd) -> Result<bool> {
    let opts = SolverOpts { seed: cli.seed, ..SolverOpts::default() };
    match cmd {
        ProjectCmd::SweepMean { common, h, mu_min, mu_max, points } => {
            let gens = sweep_generators(&common.generators, common.p.len(), common.slack)?;
            let grid = linspace(*mu_min, *mu_max, *points);
            let table = mean_sweep(&common.p, h, &grid, &gens, &opts)?;
            write_table(cli, meta, &table, common.format)
        }
        ProjectCmd::SweepBall { common, metric, eps_max, points, mode } => {
            let gens = sweep_generators(&common.generators, common.p.len(), common.slack)?;
            let metric = match metric {
                MetricArg::Tv => Metric::Tv,
                MetricArg::Chi2 => Metric::ChiSquare,
            };
            let hi = eps_max.unwrap_or(match metric {
                Metric::Tv => 1.0,
                Metric::ChiSquare => 2.0,
            });
            let mode = match mode {
                ModeArg::Own => BallMode::OwnMinimizer,
                ModeArg::Kl => BallMode::KlMinimizer,
            };
            let grid = linspace(0.0, hi, *points);
            let table = ball_sweep(&common.p, metric, &grid, &gens, mode, &opts)?;
            write_table(cli, meta, &table, common.format)
        }
    }
}

const BLOB_SD: f64 = 0.08;

fn cluster(cli: &Cli, meta: &Meta, args: &ClusterArgs) -> Result<bool> {
    let data = match (&args.input, args.blobs) {
        (Some(path), _) => Dataset::from_csv(File::open(path)?)?,
        (None, Some(n)) => Dataset::gaussian_blobs(n, args.dim, args.k, BLOB_SD, cli.seed)?,
        (None, None) => return Err(Error::InvalidArgument("need --in or --blobs".into())),
    };
    let e = registry().generator(&args.generator, data.m())?;
    let c = args.constant.resolve(e.constant_bound);
    let opts = KMeansOpts { n_starts: args.starts, seed: cli.seed, ..KMeansOpts::default() };
    let report = universality_chain_check(&data, args.k, e.generator.as_ref(), c, &opts)?;
    if let Some(path) = &args.assignments_out {
        let mut w = BufWriter::new(File::create(path)?);
        for line in meta.header() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "index,kl_cluster,f_cluster")?;
        let pairs = report.kl_clustering.assignments.iter().zip(&report.f_clustering.assignments);
        for (i, (a, b)) in pairs.enumerate() {
            writeln!(w, "{i},{a},{b}")?;
        }
        w.flush()?;
    }
    emit(cli, meta, &report)?;
    if !report.pass {
        eprintln!(
            "chain broken: L_KL = {}, L_f(mu_KL)/C = {}, L_f(mu_f)/C = {}",
            report.kl_objective, report.f_at_kl_scaled, report.f_at_f_scaled
        );
    }
    Ok(report.pass)
}

fn target_constant(loss: &str) -> Result<f64> {
    let g = registry().entropy(loss)?;
    Ok(universality_constant(g.as_ref())? * (1.0 + DEFAULT_SLACK))
}

fn pacbayes(cli: &Cli, meta: &Meta, cmd: &PacbayesCmd) -> Result<bool> {
    match cmd {
        PacbayesCmd::Bound { kind, lhat, n, delta, lambda, l_max, prior_mass, kl, clip, loss, constant } => {
            #[derive(Serialize)]
            struct Out {
                kind: BoundArg,
                bound: f64,
                lambda: f64,
                lambda_from_grid: bool,
                l_max: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                c_g: Option<f64>,
            }
            let c_g = match kind {
                BoundArg::Universal => {
                    let g = registry().entropy(loss)?;
                    Some(constant.resolve(universality_constant(g.as_ref())?))
                }
                _ => None,
            };
            let effective_l_max = match kind {
                BoundArg::Universal => -clip.ln(),
                _ => *l_max,
            };
            let eval = |lam: f64| -> Result<f64> {
                match kind {
                    BoundArg::Pac => pac_bound(*lhat, *n, *l_max, lam, *delta, *prior_mass),
                    BoundArg::PacBayes => pac_bayes_bound(&BoundInputs {
                        n: *n,
                        delta: *delta,
                        lambda: lam,
                        l_max: *l_max,
                        empirical_loss: *lhat,
                        kl_post_prior: *kl,
                    }),
                    BoundArg::Universal => {
                        universal_pac_bayes_bound(*lhat, *n, *clip, lam, *delta, *kl, c_g.unwrap_or(1.0))
                            .map(|u| u.bound)
                    }
                }
            };
            let lambda_from_grid = lambda.is_none();
            let (lambda, bound) = match lambda {
                Some(l) => (*l, eval(*l)?),
                None => minimize_over_lambda(&lambda_grid(200), eval)?,
            };
            emit(cli, meta, &Out { kind: *kind, bound, lambda, lambda_from_grid, l_max: effective_l_max, c_g })?;
            Ok(true)
        }
        PacbayesCmd::Validate { spec, delta, trials, kind, loss } => {
            let spec = match spec {
                Some(path) => serde_json::from_reader(File::open(path)?)?,
                None => {
                    let bound = match kind {
                        BoundArg::Pac => BoundKind::Pac,
                        BoundArg::PacBayes => BoundKind::PacBayes,
                        BoundArg::Universal => BoundKind::Universal { loss: loss.clone(), c_g: target_constant(loss)? },
                    };
                    HarnessSpec { trials: *trials, ..HarnessSpec::example(*delta, bound, cli.seed) }
                }
            };
            let r = monte_carlo_validity(&spec)?;
            emit(cli, meta, &r)?;
            if !r.pass {
                eprintln!("coverage {} below required {}", r.coverage, r.required);
            }
            Ok(r.pass)
        }
    }
}

/// Accepts the document written by `forecast fit`, a bare `{model: ..}`
/// object, or the coefficients themselves.
fn read_model(path: &Path) -> Result<LogisticModel> {
    let v: Value = serde_json::from_reader(File::open(path)?)?;
    let inner = v
        .pointer("/result/model")
        .or_else(|| v.get("model"))
        .cloned()
        .unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

fn forecast(cli: &Cli, meta: &Meta, cmd: &ForecastCmd) -> Result<bool> {
    match cmd {
        ForecastCmd::Eval { input, threshold, model } => {
            #[derive(Serialize)]
            struct Row {
                forecast: &'static str,
                #[serde(flatten)]
                losses: LossTable,
            }
            let records = load_forecasts(input)?;
            let mut rows = vec![Row { forecast: "raw", losses: evaluate(&records, *threshold)? }];
            if let Some(path) = model {
                let m = read_model(path)?;
                rows.push(Row { forecast: "recalibrated", losses: evaluate(&recalibrate(&records, &m), *threshold)? });
            }
            emit(cli, meta, &rows)?;
            Ok(true)
        }
        ForecastCmd::Fit { train } => {
            let records = load_forecasts(train)?;
            let r = fit_logistic(&records, &FitOpts::default())?;
            emit(cli, meta, &r)?;
            if !r.converged {
                eprintln!("logistic fit did not converge (gradient norm {:e})", r.grad_norm);
            }
            Ok(r.converged)
        }
        ForecastCmd::Recal { input, model } => {
            let records = load_forecasts(input)?;
            let m = read_model(model)?;
            write_forecasts(sink(cli)?, &recalibrate(&records, &m), &meta.header())?;
            Ok(true)
        }
        ForecastCmd::Synth { n, hard_zero_fraction, logistic } => {
            let model = match logistic.as_deref() {
                Some(&[beta0, beta1]) => SynthModel::Logistic { model: LogisticModel { beta0, beta1 } },
                Some(_) => return Err(Error::InvalidArgument("--logistic takes two coefficients".into())),
                None => SynthSpec::rain_like(*n, cli.seed).model,
            };
            let spec = SynthSpec { n: *n, seed: cli.seed, model, hard_zero_fraction: *hard_zero_fraction };
            write_forecasts(sink(cli)?, &synth_generate(&spec)?, &meta.header())?;
            Ok(true)
        }
    }
}

#[derive(Serialize)]
struct LossPoint {
    p: f64,
    entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
    loss_if_0: ExtendedReal,
    loss_if_1: ExtendedReal,
}

#[derive(Serialize)]
struct LossInfo {
    label: String,
    family: String,
    weight_at_half: f64,
    universality_constant: f64,
    table: Vec<LossPoint>,
}

fn loss_info(g: &dyn Entropy) -> Result<LossInfo> {
    let table = linspace(0.0, 1.0, 11)
        .into_iter()
        .map(|p| {
            let (l0, l1) = partial_losses(g, p)?;
            Ok(LossPoint { p, entropy: g.g(p), weight: weight(g, p).ok(), loss_if_0: l0, loss_if_1: l1 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossInfo {
        label: g.label().to_string(),
        family: g.family().to_string(),
        weight_at_half: weight(g, 0.5)?,
        universality_constant: universality_constant(g)?,
        table,
    })
}

fn losses(cli: &Cli, meta: &Meta, cmd: &LossesCmd) -> Result<bool> {
    match cmd {
        LossesCmd::Info { loss } => {
            let g = registry().entropy(loss)?;
            let info = loss_info(g.as_ref())?;
            emit(cli, meta, &info)?;
            eprintln!("{}: w(1/2) = {}, C(G) = {}", info.label, info.weight_at_half, info.universality_constant);
            Ok(true)
        }
        LossesCmd::Check { loss, grid } => {
            let g = registry().entropy(loss)?;
            let r = check_admissible(g.as_ref(), *grid)?;
            emit(cli, meta, &r)?;
            for c in r.failed() {
                eprintln!("check {} failed", c.name);
            }
            Ok(r.pass())
        }
    }
}
