//! Probability forecast evaluation and one-feature logistic recalibration.
//!
//! A forecast is a probability `x` of the event `y = 1`. Records are scored
//! with the 0-1 loss at a threshold, the quadratic (Brier) loss and the
//! log-loss in nats; a single forecast of 0 for an event that happens makes
//! the log-loss infinite. [`fit_logistic`] learns `q(x) = sigmoid(b0 + b1 x)`
//! by log-loss minimization and [`recalibrate`] applies it.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::ext::ExtendedReal;

/// Default threshold for the 0-1 loss.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub x: f64,
    pub y: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
}

impl ForecastRecord {
    pub fn new(x: f64, y: u8) -> Self {
        Self {
            x,
            y,
            timestamp: None,
            station: None,
        }
    }

    fn outcome(&self) -> bool {
        self.y == 1
    }
}

/// Parses CSV with header `x,y` and optional `timestamp`, `station` columns.
/// Every bad row is reported with its line number.
pub fn read_forecasts<R: Read>(reader: R) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(xi), Some(yi)) = (col("x"), col("y")) else {
        return Err(Error::InvalidArgument(format!(
            "forecast CSV needs columns x and y, found: {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let (ti, si) = (col("timestamp"), col("station"));

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let x = field(xi).parse::<f64>();
        let y = field(yi).parse::<u8>();
        let message = match (&x, &y) {
            (Err(_), _) => Some(format!("x = '{}' is not a number", field(xi))),
            (Ok(x), _) if !(0.0..=1.0).contains(x) => Some(format!("x = {x} outside [0, 1]")),
            (_, Err(_)) | (_, Ok(2..)) => Some(format!("y = '{}' is not 0 or 1", field(yi))),
            _ => None,
        };
        if let Some(message) = message {
            errors.push(RowError { line, message });
            continue;
        }
        let opt = |i: Option<usize>| i.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()).map(str::to_string);
        records.push(ForecastRecord {
            x: x.expect("checked"),
            y: y.expect("checked"),
            timestamp: opt(ti),
            station: opt(si),
        });
    }
    if !errors.is_empty() {
        return Err(Error::MalformedRows(errors));
    }
    Ok(records)
}

pub fn load_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    read_forecasts(std::fs::File::open(path)?)
}

/// Writes records as CSV, preceded by `# `-prefixed header lines.
pub fn write_forecasts<W: Write>(mut w: W, records: &[ForecastRecord], header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    let with_ts = records.iter().any(|r| r.timestamp.is_some());
    let with_st = records.iter().any(|r| r.station.is_some());
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["x", "y"];
    if with_ts {
        head.push("timestamp");
    }
    if with_st {
        head.push("station");
    }
    out.write_record(&head)?;
    for r in records {
        let mut row = vec![format!("{}", r.x), r.y.to_string()];
        if with_ts {
            row.push(r.timestamp.clone().unwrap_or_default());
        }
        if with_st {
            row.push(r.station.clone().unwrap_or_default());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub n: usize,
    /// Fraction of records with `y = 1`.
    pub base_rate: f64,
    pub threshold: f64,
    pub zero_one: f64,
    pub quadratic: f64,
    /// Mean log-loss in nats; divide by `ln 2` for bits.
    pub log_loss: ExtendedReal,
}

pub fn zero_one_loss(y: bool, x: f64, t: f64) -> f64 {
    if y == (x >= t) {
        0.0
    } else {
        1.0
    }
}

pub fn quadratic_loss(y: bool, x: f64) -> f64 {
    if y {
        (1.0 - x) * (1.0 - x)
    } else {
        x * x
    }
}

pub fn log_loss(y: bool, x: f64) -> ExtendedReal {
    let q = if y { x } else { 1.0 - x };
    if q <= 0.0 {
        ExtendedReal::INFINITY
    } else {
        ExtendedReal::divergence(-q.ln())
    }
}

pub fn evaluate(records: &[ForecastRecord], t: f64) -> Result<LossTable> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to evaluate".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfDomain {
            what: "threshold",
            value: t,
            domain: "[0, 1]",
        });
    }
    let n = records.len() as f64;
    let mut zo = 0.0;
    let mut quad = 0.0;
    let mut log = ExtendedReal::ZERO;
    let mut pos = 0.0;
    for r in records {
        let y = r.outcome();
        zo += zero_one_loss(y, r.x, t);
        quad += quadratic_loss(y, r.x);
        log = log + log_loss(y, r.x);
        pos += f64::from(r.y);
    }
    Ok(LossTable {
        n: records.len(),
        base_rate: pos / n,
        threshold: t,
        zero_one: zo / n,
        quadratic: quad / n,
        log_loss: log.scale(1.0 / n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta0: f64,
    pub beta1: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn predict(&self, x: f64) -> f64 {
        sigmoid(self.beta0 + self.beta1 * x)
    }

    pub fn norm(&self) -> f64 {
        self.beta0.hypot(self.beta1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOpts {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Ridge penalty used when the unpenalized fit is degenerate.
    pub ridge: f64,
    /// Parameter norm beyond which the unpenalized fit is deemed divergent.
    pub max_norm: f64,
}

impl Default for FitOpts {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            ridge: 1e-6,
            max_norm: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: LogisticModel,
    /// Mean training log-loss at the fitted parameters (without penalty).
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ridge_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    pub gradient_steps: usize,
}

struct Design<'a> {
    records: &'a [ForecastRecord],
    ridge: f64,
}

impl Design<'_> {
    /// Mean penalized log-loss, gradient and Hessian `[h00, h01, h11]`.
    fn eval(&self, b: [f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
        let n = self.records.len() as f64;
        let (mut f, mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for r in self.records {
            let z = b[0] + b[1] * r.x;
            let y = f64::from(r.y);
            f += softplus(z) - y * z;
            let s = sigmoid(z);
            let d = s - y;
            g0 += d;
            g1 += d * r.x;
            let w = s * (1.0 - s);
            h00 += w;
            h01 += w * r.x;
            h11 += w * r.x * r.x;
        }
        let l = self.ridge;
        (
            f / n + l * (b[0] * b[0] + b[1] * b[1]),
            [g0 / n + 2.0 * l * b[0], g1 / n + 2.0 * l * b[1]],
            [h00 / n + 2.0 * l, h01 / n, h11 / n + 2.0 * l],
        )
    }

    fn value(&self, b: [f64; 2]) -> f64 {
        self.eval(b).0
    }
}

enum Outcome {
    Done { b: [f64; 2], iterations: usize, grad_norm: f64, converged: bool, gd_steps: usize },
    Diverged,
}

fn newton(d: &Design, opts: &FitOpts) -> Outcome {
    let mut b = [0.0, 0.0];
    let mut gd_steps = 0;
    for it in 0..opts.max_iters {
        let (f, g, [a, c, e]) = d.eval(b);
        let gn = g[0].hypot(g[1]);
        if gn <= opts.grad_tol {
            return Outcome::Done { b, iterations: it, grad_norm: gn, converged: true, gd_steps };
        }
        let det = a * e - c * c;
        let tr = a + e;
        let disc = ((a - e) * (a - e) + 4.0 * c * c).sqrt();
        let (lmax, lmin) = (0.5 * (tr + disc), 0.5 * (tr - disc));
        let dir = if lmin > 0.0 && lmax / lmin <= 1e12 {
            [-(e * g[0] - c * g[1]) / det, -(a * g[1] - c * g[0]) / det]
        } else {
            gd_steps += 1;
            [-g[0], -g[1]]
        };
        let slope = g[0] * dir[0] + g[1] * dir[1];
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let nb = [b[0] + step * dir[0], b[1] + step * dir[1]];
            let nf = d.value(nb);
            if nf <= f + 1e-4 * step * slope {
                b = nb;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if b[0].hypot(b[1]) > opts.max_norm {
            return Outcome::Diverged;
        }
        if !moved {
            return Outcome::Done { b, iterations: it + 1, grad_norm: gn, converged: false, gd_steps };
        }
    }
    let g = d.eval(b).1;
    let gn = g[0].hypot(g[1]);
    Outcome::Done { b, iterations: opts.max_iters, grad_norm: gn, converged: gn <= opts.grad_tol, gd_steps }
}

/// Fits `sigmoid(b0 + b1 x)` by minimizing the mean log-loss with damped
/// Newton steps (gradient steps when the Hessian is nearly singular).
///
/// A constant `x` column or parameters escaping `opts.max_norm` trigger a
/// refit with a small ridge penalty; the report flags it.
pub fn fit_logistic(train: &[ForecastRecord], opts: &FitOpts) -> Result<FitReport> {
    let pos = train.iter().filter(|r| r.y == 1).count();
    if pos == 0 || pos == train.len() {
        return Err(Error::InvalidArgument("training data needs both outcome classes".into()));
    }
    let mean = train.iter().map(|r| r.x).sum::<f64>() / train.len() as f64;
    let var = train.iter().map(|r| (r.x - mean).powi(2)).sum::<f64>() / train.len() as f64;

    let mut reason = (var <= 1e-14).then(|| "forecast column is constant".to_string());
    let mut outcome = None;
    if reason.is_none() {
        match newton(&Design { records: train, ridge: 0.0 }, opts) {
            Outcome::Diverged => reason = Some(format!("parameter norm exceeded {}", opts.max_norm)),
            done => outcome = Some(done),
        }
    }
    let ridge_fallback = reason.is_some();
    let outcome = match outcome {
        Some(o) => o,
        None => newton(&Design { records: train, ridge: opts.ridge }, &FitOpts { max_norm: f64::INFINITY, ..*opts }),
    };
    let Outcome::Done { b, iterations, grad_norm, converged, gd_steps } = outcome else {
        unreachable!("an unbounded fit cannot diverge");
    };
    let model = LogisticModel { beta0: b[0], beta1: b[1] };
    Ok(FitReport {
        model,
        objective: Design { records: train, ridge: 0.0 }.value(b),
        grad_norm,
        iterations,
        converged,
        ridge_fallback,
        fallback_reason: reason,
        gradient_steps: gd_steps,
    })
}

/// Replaces every forecast by the model's output; other fields pass through.
pub fn recalibrate(records: &[ForecastRecord], model: &LogisticModel) -> Vec<ForecastRecord> {
    records
        .iter()
        .map(|r| ForecastRecord {
            x: model.predict(r.x),
            ..r.clone()
        })
        .collect()
}

/// How synthetic forecast data is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthModel {
    /// Event probabilities `p ~ Beta(a, b)`; the forecast is `p` itself, so
    /// the forecaster is calibrated.
    Calibrated { a: f64, b: f64 },
    /// `x ~ Uniform(0, 1)` and `y ~ Bernoulli(model(x))`.
    Logistic { model: LogisticModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    pub model: SynthModel,
    /// Fraction of records whose forecast is replaced by exactly 0 while the
    /// outcome keeps its original distribution.
    pub hard_zero_fraction: f64,
}

impl SynthSpec {
    /// Calibrated forecasts with a 9% event rate and 2% hard zeros.
    pub fn rain_like(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            model: SynthModel::Calibrated { a: 0.9, b: 9.1 },
            hard_zero_fraction: 0.02,
        }
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<ForecastRecord>> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.hard_zero_fraction) {
        return Err(Error::OutOfDomain {
            what: "hard_zero_fraction",
            value: spec.hard_zero_fraction,
            domain: "[0, 1]",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta = match &spec.model {
        SynthModel::Calibrated { a, b } => {
            Some(Beta::new(*a, *b).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        }
        SynthModel::Logistic { .. } => None,
    };
    Ok((0..spec.n)
        .map(|_| {
            let (x, p) = match (&spec.model, &beta) {
                (SynthModel::Logistic { model }, _) => {
                    let x: f64 = rng.random();
                    (x, model.predict(x))
                }
                (_, Some(beta)) => {
                    let p = beta.sample(&mut rng);
                    (p, p)
                }
                _ => unreachable!("calibrated model always has a beta sampler"),
            };
            let y = u8::from(rng.random::<f64>() < p);
            let x = if rng.random::<f64>() < spec.hard_zero_fraction { 0.0 } else { x };
            ForecastRecord::new(x, y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn csv_parsing() {
        let r = read_forecasts("x,y\n0.0,1\n".as_bytes()).unwrap();
        assert_eq!(r, vec![ForecastRecord::new(0.0, 1)]);
        let r = read_forecasts("x,y,timestamp,station\n0.2,0,2016-01-01,A\n".as_bytes()).unwrap();
        assert_eq!(r[0].station.as_deref(), Some("A"));
        let Err(Error::MalformedRows(rows)) = read_forecasts("x,y\n0.5,1\n1.3,0\n0.2,2\n".as_bytes()) else {
            panic!("expected row errors");
        };
        assert_eq!(rows.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4]);
        assert!(read_forecasts("a,b\n0.1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut recs = vec![ForecastRecord::new(0.25, 1), ForecastRecord::new(0.5, 0)];
        recs[0].timestamp = Some("t0".into());
        let mut buf = Vec::new();
        write_forecasts(&mut buf, &recs, &["seed 1".into()]).unwrap();
        let back = read_forecasts(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn evaluation_examples() {
        let t = evaluate(&[ForecastRecord::new(0.0, 1)], DEFAULT_THRESHOLD).unwrap();
        assert_eq!((t.zero_one, t.quadratic), (1.0, 1.0));
        assert!(t.log_loss.is_infinite());
        let perfect = [ForecastRecord::new(1.0, 1), ForecastRecord::new(0.0, 0)];
        let t = evaluate(&perfect, DEFAULT_THRESHOLD).unwrap();
        assert_eq!((t.zero_one, t.quadratic, t.log_loss.value()), (0.0, 0.0, 0.0));
        assert!(evaluate(&[], 0.35).is_err());
    }

    #[test]
    fn recalibration_examples() {
        let recs = [ForecastRecord::new(0.0, 0), ForecastRecord::new(0.7, 1)];
        let flat = recalibrate(&recs, &LogisticModel { beta0: 0.0, beta1: 0.0 });
        assert!(flat.iter().all(|r| r.x == 0.5));
        let m = LogisticModel { beta0: -2.5, beta1: 5.0 };
        assert_abs_diff_eq!(m.predict(0.0), 0.07586, epsilon = 1e-5);
    }

    #[test]
    fn null_model_recovers_base_rate() {
        let spec = SynthSpec {
            n: 50_000,
            seed: 3,
            model: SynthModel::Logistic { model: LogisticModel { beta0: (0.09f64 / 0.91).ln(), beta1: 0.0 } },
            hard_zero_fraction: 0.0,
        };
        let data = synth_generate(&spec).unwrap();
        let rate = data.iter().filter(|r| r.y == 1).count() as f64 / data.len() as f64;
        let fit = fit_logistic(&data, &FitOpts::default()).unwrap();
        assert!(fit.converged && !fit.ridge_fallback);
        // the unpenalized optimum reproduces the empirical rate exactly
        let mean_pred = data.iter().map(|r| fit.model.predict(r.x)).sum::<f64>() / data.len() as f64;
        assert_abs_diff_eq!(mean_pred, rate, epsilon = 1e-8);
        assert!(fit.model.beta1.abs() < 0.15);
    }

    #[test]
    fn degenerate_designs_use_ridge() {
        let constant: Vec<_> = (0..100).map(|i| ForecastRecord::new(0.3, u8::from(i % 4 == 0))).collect();
        let fit = fit_logistic(&constant, &FitOpts::default()).unwrap();
        assert!(fit.ridge_fallback);
        assert!(fit.model.beta0.is_finite() && fit.model.beta1.is_finite());

        let separable: Vec<_> = (0..100).map(|i| ForecastRecord::new(i as f64 / 99.0, u8::from(i >= 50))).collect();
        let fit = fit_logistic(&separable, &FitOpts::default()).unwrap();
        assert!(fit.ridge_fallback, "{fit:?}");
        assert!(fit.converged);

        assert!(fit_logistic(&[ForecastRecord::new(0.2, 0)], &FitOpts::default()).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_validated() {
        let spec = SynthSpec::rain_like(1000, 7);
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let clean = SynthSpec { hard_zero_fraction: 0.0, ..spec.clone() };
        assert!(evaluate(&synth_generate(&clean).unwrap(), 0.35).unwrap().log_loss.is_finite());
        assert!(synth_generate(&SynthSpec { n: 0, ..spec }).is_err());
    }
}
