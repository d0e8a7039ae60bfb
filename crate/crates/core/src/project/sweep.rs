//! Parameter sweeps comparing constrained minimizers across generators.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{minimize_divergence, ConstraintSet, Metric, SolverOpts};
use crate::bregman::{hessian_gap_certificate, CertificateReport, GeneratorND, SampleSpec, SumSeparable, XLogX};
use crate::error::{ensure_stochastic, Error, Result};
use crate::ext::serde_f64;

/// A generator paired with the constant `C` its column is divided by.
#[derive(Clone)]
pub struct SweepGenerator {
    pub f: Arc<dyn GeneratorND>,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMode {
    /// Column `f` reports `D_f(p || q_f) / C`.
    OwnMinimizer,
    /// Column `f` reports `D_f(p || q_KL) / C`.
    KlMinimizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    /// Normalized objective; `NaN` when the cell failed.
    #[serde(with = "serde_f64")]
    pub value: f64,
    pub q_star: Vec<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl SweepCell {
    fn failed(e: &Error) -> Self {
        Self {
            value: f64::NAN,
            q_star: Vec::new(),
            converged: false,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub grid: Vec<f64>,
    /// `"kl"` followed by the generator labels.
    pub columns: Vec<String>,
    /// Normalizing constant per column (1 for KL).
    pub constants: Vec<f64>,
    pub mode: Option<BallMode>,
    /// `rows[i][j]` is the cell at `grid[i]` for `columns[j]`.
    pub rows: Vec<Vec<SweepCell>>,
    pub certificates: Vec<CertificateReport>,
}

impl SweepTable {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col].value
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col].value).collect()
    }

    /// Largest `column_j - kl` over all rows and generator columns; the
    /// domination chain holds when this is at most the tolerance.
    pub fn max_chain_excess(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r[1..].iter().map(move |c| c.value - r[0].value))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec![self.parameter.clone()];
        head.extend(self.columns.iter().cloned());
        out.write_record(&head)?;
        for (x, row) in self.grid.iter().zip(&self.rows) {
            let mut rec = vec![format!("{x}")];
            rec.extend(row.iter().map(|c| format!("{}", c.value)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn kl_generator(m: usize) -> SumSeparable {
    SumSeparable::new(XLogX, m).with_label("kl")
}

fn certify(gens: &[SweepGenerator]) -> Result<Vec<CertificateReport>> {
    gens.iter()
        .map(|g| {
            let report = hessian_gap_certificate(g.f.as_ref(), g.c, &SampleSpec::default())?;
            if !report.pass {
                return Err(Error::NotCertified(format!(
                    "{} at C = {} (min gap {:e})",
                    report.generator, report.constant, report.min_gap
                )));
            }
            Ok(report)
        })
        .collect()
}

fn check_inputs(p: &[f64], gens: &[SweepGenerator]) -> Result<()> {
    ensure_stochastic("p", p, 1e-10)?;
    for g in gens {
        if g.f.dim() != p.len() {
            return Err(Error::DimensionMismatch(g.f.dim(), p.len()));
        }
    }
    Ok(())
}

fn labels(gens: &[SweepGenerator]) -> (Vec<String>, Vec<f64>) {
    let mut columns = vec!["kl".to_string()];
    let mut constants = vec![1.0];
    for g in gens {
        columns.push(g.f.label().to_string());
        constants.push(g.c);
    }
    (columns, constants)
}

fn solve_cell(
    f: &dyn GeneratorND,
    c: f64,
    p: &[f64],
    s: &ConstraintSet,
    opts: &SolverOpts,
) -> SweepCell {
    match minimize_divergence(f, p, s, opts) {
        Ok(r) => SweepCell {
            value: r.objective.value() / c,
            q_star: r.q_star,
            converged: r.converged,
            error: None,
        },
        Err(e) => SweepCell::failed(&e),
    }
}

/// Minimizes each divergence over `{q : h . q = mu}` for every `mu` in the
/// grid. Every generator must first pass its Hessian-gap certificate.
pub fn mean_sweep(
    p: &[f64],
    h: &[f64],
    mu_grid: &[f64],
    gens: &[SweepGenerator],
    opts: &SolverOpts,
) -> Result<SweepTable> {
    check_inputs(p, gens)?;
    if h.len() != p.len() {
        return Err(Error::DimensionMismatch(h.len(), p.len()));
    }
    let certificates = certify(gens)?;
    let kl = kl_generator(p.len());
    let (columns, constants) = labels(gens);
    let rows = mu_grid
        .par_iter()
        .map(|&mu| {
            let s = ConstraintSet::MeanHyperplane { h: h.to_vec(), mu };
            let mut row = vec![solve_cell(&kl, 1.0, p, &s, opts)];
            row.extend(gens.iter().map(|g| solve_cell(g.f.as_ref(), g.c, p, &s, opts)));
            row
        })
        .collect();
    Ok(SweepTable {
        parameter: "mu".into(),
        grid: mu_grid.to_vec(),
        columns,
        constants,
        mode: None,
        rows,
        certificates,
    })
}

/// Solves a column from the largest radius down, offering each solution as a
/// warm start for the next (smaller) radius, where it is still feasible.
fn ball_column(
    f: &dyn GeneratorND,
    c: f64,
    p: &[f64],
    metric: Metric,
    eps_grid: &[f64],
    extra: &dyn Fn(usize) -> Vec<Vec<f64>>,
    opts: &SolverOpts,
) -> Vec<SweepCell> {
    let mut order: Vec<usize> = (0..eps_grid.len()).collect();
    order.sort_by(|&a, &b| eps_grid[b].total_cmp(&eps_grid[a]).then(a.cmp(&b)));
    let mut cells = vec![None; eps_grid.len()];
    let mut previous: Option<Vec<f64>> = None;
    for i in order {
        let mut o = opts.clone();
        o.warm_starts.extend(extra(i));
        o.warm_starts.extend(previous.clone());
        let s = ConstraintSet::BallExterior { metric, epsilon: eps_grid[i] };
        let cell = solve_cell(f, c, p, &s, &o);
        if cell.error.is_none() {
            previous = Some(cell.q_star.clone());
        }
        cells[i] = Some(cell);
    }
    cells.into_iter().map(|c| c.expect("every index visited")).collect()
}

/// Sweeps the exterior of a `metric`-ball of radius `eps` around `p`.
pub fn ball_sweep(
    p: &[f64],
    metric: Metric,
    eps_grid: &[f64],
    gens: &[SweepGenerator],
    mode: BallMode,
    opts: &SolverOpts,
) -> Result<SweepTable> {
    check_inputs(p, gens)?;
    let certificates = certify(gens)?;
    let kl = kl_generator(p.len());
    let (columns, constants) = labels(gens);
    let kl_cells = ball_column(&kl, 1.0, p, metric, eps_grid, &|_| Vec::new(), opts);

    let other: Vec<Vec<SweepCell>> = gens
        .par_iter()
        .map(|g| match mode {
            BallMode::OwnMinimizer => {
                let warm = |i: usize| -> Vec<Vec<f64>> {
                    let c = &kl_cells[i];
                    if c.error.is_none() { vec![c.q_star.clone()] } else { Vec::new() }
                };
                ball_column(g.f.as_ref(), g.c, p, metric, eps_grid, &warm, opts)
            }
            BallMode::KlMinimizer => kl_cells
                .iter()
                .map(|k| match &k.error {
                    Some(_) => k.clone(),
                    None => SweepCell {
                        value: g.f.divergence(p, &k.q_star).value() / g.c,
                        ..k.clone()
                    },
                })
                .collect(),
        })
        .collect();

    let rows = (0..eps_grid.len())
        .map(|i| {
            let mut row = vec![kl_cells[i].clone()];
            row.extend(other.iter().map(|col| col[i].clone()));
            row
        })
        .collect();
    Ok(SweepTable {
        parameter: "epsilon".into(),
        grid: eps_grid.to_vec(),
        columns,
        constants,
        mode: Some(mode),
        rows,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::{Mahalanobis, MahalanobisQ, Square};
    use crate::numeric::linspace;

    const P: [f64; 3] = [0.25, 0.5, 0.25];

    fn gens() -> Vec<SweepGenerator> {
        let q = MahalanobisQ::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        vec![
            SweepGenerator { f: Arc::new(SumSeparable::new(Square, 3)), c: 2.0 + 1e-6 },
            SweepGenerator { f: Arc::new(Mahalanobis::new(q)), c: 3.0 + 1e-6 },
        ]
    }

    #[test]
    fn mean_sweep_chain_holds() {
        let t = mean_sweep(&P, &[-1.0, 0.0, 1.0], &linspace(-0.5, 0.5, 11), &gens(), &SolverOpts::default()).unwrap();
        assert_eq!(t.columns.len(), 3);
        assert!(t.max_chain_excess() <= 1e-8, "{}", t.max_chain_excess());
        // mu = 0 is p itself
        assert!(t.value(5, 0).abs() < 1e-12);
    }

    #[test]
    fn uncertified_constant_is_refused() {
        let mut g = gens();
        g[1].c = 2.0;
        let err = mean_sweep(&P, &[-1.0, 0.0, 1.0], &[0.1], &g, &SolverOpts::default()).unwrap_err();
        assert!(matches!(err, Error::NotCertified(_)));
    }

    #[test]
    fn ball_sweep_modes_are_ordered() {
        let eps = linspace(0.0, 1.0, 6);
        let own = ball_sweep(&P, Metric::Tv, &eps, &gens(), BallMode::OwnMinimizer, &SolverOpts::default()).unwrap();
        let at_kl = ball_sweep(&P, Metric::Tv, &eps, &gens(), BallMode::KlMinimizer, &SolverOpts::default()).unwrap();
        for i in 0..eps.len() {
            for j in 1..3 {
                assert!(own.value(i, 0) + 1e-8 >= own.value(i, j));
                assert!(at_kl.value(i, j) + 1e-8 >= own.value(i, j));
            }
        }
        // nondecreasing in epsilon
        for j in 0..3 {
            let col = own.column(j);
            assert!(col.windows(2).all(|w| w[1] + 1e-10 >= w[0]), "{col:?}");
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = mean_sweep(&P, &[-1.0, 0.0, 1.0], &[0.0, 0.2], &gens(), &SolverOpts::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["tool uniloss".into()]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# tool uniloss");
        assert!(lines[1].starts_with("mu,kl,"));
        assert_eq!(lines.len(), 4);
    }
}
