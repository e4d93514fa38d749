//! Ordinary least squares over a dummy-coded design with interactions.
//!
//! A factor can optionally be absorbed (within-transformation), which fits
//! one intercept per level without materializing the dummy columns.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{student_two_sided, Collinearity, StatsError};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Factor(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Factor(v) => v.len(),
        }
    }
}

/// Named, equal-length columns.
#[derive(Debug, Clone, Default)]
pub struct Frame {
    names: Vec<String>,
    columns: HashMap<String, Column>,
}

impl Frame {
    pub fn new() -> Frame {
        Frame::default()
    }

    pub fn with(mut self, name: &str, column: Column) -> Frame {
        self.insert(name, column);
        self
    }

    pub fn insert(&mut self, name: &str, column: Column) {
        if self.columns.insert(name.to_string(), column).is_none() {
            self.names.push(name.to_string());
        }
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn n_rows(&self) -> Result<usize, StatsError> {
        let mut lens = self.columns.values().map(Column::len);
        let n = lens.next().unwrap_or(0);
        if lens.any(|l| l != n) {
            return Err(StatsError::Validation("frame columns differ in length".into()));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Numeric(String),
    /// Treatment-coded factor. Without an explicit reference the first level
    /// in sorted order is the baseline.
    Factor { name: String, reference: Option<String> },
    Interaction(Vec<Term>),
}

impl Term {
    pub fn numeric(name: &str) -> Term {
        Term::Numeric(name.into())
    }

    pub fn factor(name: &str, reference: &str) -> Term {
        Term::Factor {
            name: name.into(),
            reference: Some(reference.into()),
        }
    }

    pub fn interaction(terms: Vec<Term>) -> Term {
        Term::Interaction(terms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub response: String,
    pub intercept: bool,
    pub terms: Vec<Term>,
    /// Factor whose levels each get their own intercept via demeaning.
    pub absorb: Option<String>,
}

impl Formula {
    pub fn new(response: &str, terms: Vec<Term>) -> Formula {
        Formula {
            response: response.into(),
            intercept: true,
            terms,
            absorb: None,
        }
    }

    pub fn absorbing(mut self, factor: &str) -> Formula {
        self.absorb = Some(factor.into());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Untransformed response, used for R².
    pub y_raw: DVector<f64>,
    pub absorbed_levels: usize,
}

fn expand(frame: &Frame, term: &Term, n: usize) -> Result<Vec<(String, Vec<f64>)>, StatsError> {
    match term {
        Term::Numeric(name) => match frame.column(name) {
            Some(Column::Numeric(v)) => Ok(vec![(name.clone(), v.clone())]),
            Some(Column::Factor(_)) => Err(StatsError::Validation(format!("{name} is a factor, not numeric"))),
            None => Err(StatsError::Validation(format!("unknown column {name}"))),
        },
        Term::Factor { name, reference } => {
            let values = match frame.column(name) {
                Some(Column::Factor(v)) => v,
                Some(Column::Numeric(_)) => {
                    return Err(StatsError::Validation(format!("{name} is numeric, not a factor")))
                }
                None => return Err(StatsError::Validation(format!("unknown column {name}"))),
            };
            let levels: BTreeSet<&str> = values.iter().map(String::as_str).collect();
            let baseline = match reference {
                Some(r) if levels.contains(r.as_str()) => r.as_str(),
                Some(r) => {
                    return Err(StatsError::Validation(format!("reference level {r} not present in {name}")))
                }
                None => levels.iter().next().copied().unwrap_or(""),
            };
            Ok(levels
                .into_iter()
                .filter(|l| *l != baseline)
                .map(|level| {
                    let col = values.iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect();
                    (format!("{name}[{level}]"), col)
                })
                .collect())
        }
        Term::Interaction(parts) => {
            let mut acc: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; n])];
            for part in parts {
                let cols = expand(frame, part, n)?;
                acc = acc
                    .iter()
                    .flat_map(|(an, av)| {
                        cols.iter().map(move |(bn, bv)| {
                            let name = if an.is_empty() { bn.clone() } else { format!("{an}:{bn}") };
                            (name, av.iter().zip(bv).map(|(a, b)| a * b).collect())
                        })
                    })
                    .collect();
            }
            Ok(acc)
        }
    }
}

fn demean_within(values: &mut [f64], groups: &[usize], n_groups: usize) {
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (&g, &v) in groups.iter().zip(values.iter()) {
        sums[g] += v;
        counts[g] += 1;
    }
    for (v, &g) in values.iter_mut().zip(groups) {
        *v -= sums[g] / counts[g] as f64;
    }
}

pub fn build_design(frame: &Frame, formula: &Formula) -> Result<Design, StatsError> {
    let n = frame.n_rows()?;
    let y_raw = match frame.column(&formula.response) {
        Some(Column::Numeric(v)) => v.clone(),
        _ => {
            return Err(StatsError::Validation(format!(
                "response {} must be a numeric column",
                formula.response
            )))
        }
    };

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    if formula.intercept && formula.absorb.is_none() {
        columns.push(("(Intercept)".into(), vec![1.0; n]));
    }
    for term in &formula.terms {
        columns.extend(expand(frame, term, n)?);
    }

    let mut y = y_raw.clone();
    let mut absorbed_levels = 0;
    if let Some(name) = &formula.absorb {
        let values = match frame.column(name) {
            Some(Column::Factor(v)) => v,
            _ => return Err(StatsError::Validation(format!("absorbed column {name} must be a factor"))),
        };
        let mut index: HashMap<&str, usize> = HashMap::new();
        let groups: Vec<usize> = values
            .iter()
            .map(|v| {
                let next = index.len();
                *index.entry(v.as_str()).or_insert(next)
            })
            .collect();
        absorbed_levels = index.len();
        demean_within(&mut y, &groups, absorbed_levels);
        for (_, col) in &mut columns {
            demean_within(col, &groups, absorbed_levels);
        }
    }

    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j].1[i]);
    Ok(Design {
        names: columns.into_iter().map(|(name, _)| name).collect(),
        x,
        y: DVector::from_vec(y),
        y_raw: DVector::from_vec(y_raw),
        absorbed_levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub df_resid: usize,
    pub sigma: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub absorbed_levels: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

const RANK_TOL: f64 = 1e-9;

fn collinear_columns(design: &Design, diag: &[f64]) -> Vec<Collinearity> {
    let x = &design.x;
    let mut accepted: Vec<usize> = Vec::new();
    let mut problems = Vec::new();
    for (j, &rjj) in diag.iter().enumerate() {
        let norm = x.column(j).norm();
        if norm > 0.0 && rjj.abs() > RANK_TOL * norm {
            accepted.push(j);
            continue;
        }
        let spanned_by = if norm == 0.0 || accepted.is_empty() {
            Vec::new()
        } else {
            let sub = x.select_columns(accepted.iter());
            let target = x.column(j).clone_owned();
            let coef = sub
                .clone()
                .svd(true, true)
                .solve(&target, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(accepted.len()));
            accepted
                .iter()
                .zip(coef.iter())
                .filter(|(_, c)| c.abs() > 1e-8)
                .map(|(&k, _)| design.names[k].clone())
                .collect()
        };
        problems.push(Collinearity {
            column: design.names[j].clone(),
            spanned_by,
        });
    }
    problems
}

/// Householder QR least squares with classical standard errors.
pub fn fit_design(design: &Design) -> Result<RegressionFit, StatsError> {
    let (n, p) = design.x.shape();
    let extra = design.absorbed_levels;
    if n <= p + extra {
        return Err(StatsError::Validation(format!(
            "{n} observations cannot support {} parameters",
            p + extra
        )));
    }

    let qr = design.x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)]).collect();
    let problems = collinear_columns(design, &diag);
    if !problems.is_empty() {
        return Err(StatsError::RankDeficient(problems));
    }

    let qty = qr.q().transpose() * &design.y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| StatsError::Validation("triangular solve failed".into()))?;
    let fitted = &design.x * &beta;
    let resid = &design.y - &fitted;
    let rss = resid.norm_squared();
    let df_resid = n - p - extra;
    let sigma2 = rss / df_resid as f64;

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| StatsError::Validation("R is singular".into()))?;
    let cov_unscaled = &r_inv * r_inv.transpose();

    let coefficients = (0..p)
        .map(|j| {
            let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
            let t = beta[j] / se;
            Coefficient {
                name: design.names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t,
                p: student_two_sided(t, df_resid as f64),
            }
        })
        .collect();

    let y_mean = design.y_raw.mean();
    let tss: f64 = design.y_raw.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let k_params = if design.absorbed_levels > 0 {
        p + extra
    } else {
        p
    };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / (n - k_params) as f64;

    Ok(RegressionFit {
        coefficients,
        n,
        df_resid,
        sigma: sigma2.sqrt(),
        r_squared,
        adj_r_squared,
        absorbed_levels: design.absorbed_levels,
        residuals: resid.iter().copied().collect(),
    })
}

pub fn ols_fit(frame: &Frame, formula: &Formula) -> Result<RegressionFit, StatsError> {
    fit_design(&build_design(frame, formula)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
    fn naive_normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in x.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
                a[i][p] += row[i] * yi;
            }
        }
        for col in 0..p {
            let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> Frame {
        let levels = ["a", "b", "c"];
        let g: Vec<String> = (0..n).map(|i| levels[i % 3].to_string()).collect();
        let h: Vec<String> = (0..n).map(|i| if (i / 3) % 2 == 0 { "x" } else { "y" }.to_string()).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Frame::new()
            .with("g", Column::Factor(g))
            .with("h", Column::Factor(h))
            .with("u", Column::Numeric(u))
            .with("y", Column::Numeric(y))
    }

    fn interaction_formula() -> Formula {
        Formula::new(
            "y",
            vec![
                Term::factor("g", "a"),
                Term::factor("h", "x"),
                Term::interaction(vec![Term::factor("g", "a"), Term::factor("h", "x")]),
                Term::numeric("u"),
            ],
        )
    }

    #[test]
    fn exact_linear_fit() {
        let u: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = u.iter().map(|v| 1.5 + v).collect();
        let frame = Frame::new().with("u", Column::Numeric(u)).with("y", Column::Numeric(y));
        let fit = ols_fit(&frame, &Formula::new("y", vec![Term::numeric("u")])).unwrap();
        assert!((fit.coefficient("u").unwrap().estimate - 1.0).abs() < 1e-10);
        assert!((fit.coefficient("(Intercept)").unwrap().estimate - 1.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn interaction_column_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = build_design(&random_frame(&mut rng, 24), &interaction_formula()).unwrap();
        assert_eq!(
            d.names,
            vec!["(Intercept)", "g[b]", "g[c]", "h[y]", "g[b]:h[y]", "g[c]:h[y]", "u"]
        );
    }

    #[test]
    fn matches_naive_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [12usize, 30, 50] {
            let frame = random_frame(&mut rng, n);
            let design = build_design(&frame, &interaction_formula()).unwrap();
            let fit = fit_design(&design).unwrap();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| design.x.row(i).iter().copied().collect()).collect();
            let naive = naive_normal_equations(&rows, design.y.as_slice());
            for (c, b) in fit.coefficients.iter().zip(naive) {
                assert!((c.estimate - b).abs() < 1e-8, "{} {} vs {}", c.name, c.estimate, b);
            }
            // residuals orthogonal to every design column
            for j in 0..design.x.ncols() {
                let dot: f64 = design.x.column(j).iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn absorbed_factor_matches_explicit_dummies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 48;
        let person: Vec<String> = (0..n).map(|i| format!("p{}", i / 6)).collect();
        let kind: Vec<String> = (0..n).map(|i| ["R", "Q", "U"][i % 3].to_string()).collect();
        let arm: Vec<String> = (0..n).map(|i| if i / 6 % 2 == 0 { "C" } else { "T" }.to_string()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frame = Frame::new()
            .with("person", Column::Factor(person))
            .with("kind", Column::Factor(kind))
            .with("arm", Column::Factor(arm))
            .with("y", Column::Numeric(y));
        let inter = Term::interaction(vec![Term::factor("kind", "R"), Term::factor("arm", "C")]);

        let within = ols_fit(
            &frame,
            &Formula::new("y", vec![Term::factor("kind", "R"), inter.clone()]).absorbing("person"),
        )
        .unwrap();
        let explicit = ols_fit(
            &frame,
            &Formula::new(
                "y",
                vec![Term::factor("person", "p0"), Term::factor("kind", "R"), inter],
            ),
        )
        .unwrap();
        for name in ["kind[U]", "kind[Q]:arm[T]", "kind[U]:arm[T]"] {
            let a = within.coefficient(name).unwrap();
            let b = explicit.coefficient(name).unwrap();
            assert!((a.estimate - b.estimate).abs() < 1e-10);
            assert!((a.std_error - b.std_error).abs() < 1e-10);
        }
        assert_eq!(within.df_resid, explicit.df_resid);
        assert!((within.r_squared - explicit.r_squared).abs() < 1e-10);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let n = 12;
        let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let frame = Frame::new()
            .with("a", Column::Numeric(a.clone()))
            .with("b", Column::Numeric(b))
            .with("y", Column::Numeric(a));
        match ols_fit(&frame, &Formula::new("y", vec![Term::numeric("a"), Term::numeric("b")])) {
            Err(StatsError::RankDeficient(cols)) => {
                assert_eq!(cols.len(), 1);
                assert_eq!(cols[0].column, "b");
                assert_eq!(cols[0].spanned_by, vec!["(Intercept)", "a"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn null_model_has_small_adjusted_r2() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 2000;
        let frame = random_frame(&mut rng, n);
        let fit = ols_fit(&frame, &interaction_formula()).unwrap();
        assert!(fit.adj_r_squared.abs() < 0.01);
        assert!(fit.coefficients.iter().all(|c| (0.0..=1.0).contains(&c.p)));
    }
}
