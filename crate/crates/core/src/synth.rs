//! Synthetic partially linear data with known effects, and a Monte Carlo
//! harness that runs the full estimator against them.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{normal_equation_gap, run_dml, DmlConfig};
use crate::data::{standardize, FeatureMatrix, LabeledDataset, Scaler};
use crate::error::{Error, Result};
use crate::learners::logistic;
use crate::seed::{derive_seed, purpose, stream};

/// Effect function `theta(x)` over raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaForm {
    Constant { value: f64 },
    /// `a + <b, x>`; `b` may be shorter than the covariate count.
    Linear { a: f64, b: Vec<f64> },
    Nonlinear { name: NonlinearTheta },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearTheta {
    /// `1 + sin(x1)`
    Sine,
    /// `2` when `x1 > 0`, else `0`
    Step,
}

/// Outcome nuisance `g(x)` or treatment logit `f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuisanceForm {
    /// `g(x) = 5 sin(x1) + 2 x2^2 + x3`, `f(x) = x1 - 0.5 x2`.
    Default,
    Zero,
    Linear { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub p: usize,
    pub theta: ThetaForm,
    pub g: NuisanceForm,
    pub f: NuisanceForm,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            p: 5,
            theta: ThetaForm::Constant { value: 5.0 },
            g: NuisanceForm::Default,
            f: NuisanceForm::Default,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl ThetaForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ThetaForm::Constant { value } => *value,
            ThetaForm::Linear { a, b } => a + b.iter().zip(x).map(|(c, v)| c * v).sum::<f64>(),
            ThetaForm::Nonlinear { name: NonlinearTheta::Sine } => 1.0 + x[0].sin(),
            ThetaForm::Nonlinear { name: NonlinearTheta::Step } => {
                if x[0] > 0.0 {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Raw-unit slope vector padded to `p`, when the form is affine.
    pub fn slopes(&self, p: usize) -> Option<Vec<f64>> {
        match self {
            ThetaForm::Constant { .. } => Some(vec![0.0; p]),
            ThetaForm::Linear { b, .. } => {
                let mut v = b.clone();
                v.resize(p, 0.0);
                Some(v)
            }
            ThetaForm::Nonlinear { .. } => None,
        }
    }
}

fn g_default(x: &[f64]) -> f64 {
    5.0 * x[0].sin() + 2.0 * x[1] * x[1] + x[2]
}

fn f_default(x: &[f64]) -> f64 {
    x[0] - 0.5 * x[1]
}

impl NuisanceForm {
    fn eval(&self, x: &[f64], default: fn(&[f64]) -> f64) -> f64 {
        match self {
            NuisanceForm::Default => default(x),
            NuisanceForm::Zero => 0.0,
            NuisanceForm::Linear { coefficients } => coefficients.iter().zip(x).map(|(c, v)| c * v).sum(),
        }
    }

    fn check(&self, what: &str, p: usize, default_needs: usize) -> Result<()> {
        match self {
            NuisanceForm::Default if p < default_needs => Err(Error::invalid(format!(
                "default {what} uses {default_needs} covariates, p = {p}"
            ))),
            NuisanceForm::Linear { coefficients } if coefficients.len() > p => Err(Error::invalid(format!(
                "{what} has {} coefficients for p = {p}",
                coefficients.len()
            ))),
            _ => Ok(()),
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        match &self.theta {
            ThetaForm::Linear { b, .. } if b.len() > self.p => {
                return Err(Error::invalid(format!("theta has {} slopes for p = {}", b.len(), self.p)))
            }
            _ => {}
        }
        self.g.check("g", self.p, 3)?;
        self.f.check("f", self.p, 2)
    }

    pub fn column_names(&self) -> Vec<String> {
        (1..=self.p).map(|j| format!("x{j}")).collect()
    }
}

/// A generated sample with its ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    /// Standardized covariates, outcome and treatment.
    pub dataset: LabeledDataset,
    pub raw_x: FeatureMatrix,
    pub scaler: Scaler,
    /// `theta(x_i)` per row.
    pub theta: Vec<f64>,
    /// `logistic(f(x_i))` per row.
    pub propensity: Vec<f64>,
    /// `g(x_i)` per row.
    pub g: Vec<f64>,
}

/// `X ~ N(0, I)`, `T ~ Bernoulli(logistic(f(X)))`,
/// `Y = theta(X) T + g(X) + noise_sd * N(0, 1)`.
pub fn generate(spec: &DgpSpec) -> Result<Generated> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = stream(derive_seed(spec.seed, purpose::GENERATE), 0);
    let mut values = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut propensity = Vec::with_capacity(n);
    let mut gs = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let e = rng.random::<f64>();
        let eps: f64 = rng.sample(StandardNormal);
        let prob = logistic(spec.f.eval(&row, f_default));
        let ti = u8::from(e < prob);
        let th = spec.theta.eval(&row);
        let g = spec.g.eval(&row, g_default);
        y.push(th * f64::from(ti) + g + spec.noise_sd * eps);
        t.push(ti);
        theta.push(th);
        propensity.push(prob);
        gs.push(g);
        values.extend_from_slice(&row);
    }
    let raw_x = FeatureMatrix::new(spec.column_names(), values, (0..n as u64).collect())?;
    let (x, scaler) = standardize(&raw_x)?;
    Ok(Generated {
        dataset: LabeledDataset::new(x, y, t)?,
        raw_x,
        scaler,
        theta,
        propensity,
        g: gs,
    })
}

/// Mean outcome difference between treated and control rows.
pub fn difference_in_means(dataset: &LabeledDataset) -> Result<f64> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&y, &t) in dataset.y.iter().zip(&dataset.t) {
        if t == 1 {
            s1 += y;
            n1 += 1;
        } else {
            s0 += y;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass("difference in means needs both groups".into()));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// Outcome of one Monte Carlo replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    /// Mean true effect over the rows kept after trimming.
    pub true_ate: f64,
    /// Mean true effect over all generated rows.
    pub true_population_ate: f64,
    pub naive_ate: f64,
    pub ate: Option<f64>,
    pub std_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
    pub beta: Option<Vec<f64>>,
    pub beta_se: Option<Vec<f64>>,
    pub kept: Option<usize>,
    /// Final-stage normal-equation gap relative to the outcome residual norm.
    pub orthogonality: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub reps: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Mean of `ate - true_ate` over successful reps.
    pub bias: f64,
    pub rmse: f64,
    pub mean_abs_error: f64,
    /// Share of successful reps whose 95% interval holds `true_ate`.
    pub coverage: f64,
    pub mean_ci_width: f64,
    /// Mean of `naive_ate - true_population_ate` over all reps.
    pub naive_bias: f64,
    pub naive_mean_abs_error: f64,
    /// Raw-unit slopes of the effect, when affine.
    pub beta_truth: Option<Vec<f64>>,
    pub beta_mean: Option<Vec<f64>>,
    pub results: Vec<RepResult>,
}

fn run_rep(spec: &DgpSpec, config: &DmlConfig, rep: usize, seed: u64) -> Result<RepResult> {
    let rep_seed = derive_seed(seed, rep as u64);
    let spec = DgpSpec { seed: rep_seed, ..spec.clone() };
    let data = generate(&spec)?;
    let true_population_ate = data.theta.iter().sum::<f64>() / data.theta.len() as f64;
    let naive_ate = difference_in_means(&data.dataset)?;
    let mut out = RepResult {
        rep,
        seed: rep_seed,
        true_ate: true_population_ate,
        true_population_ate,
        naive_ate,
        ate: None,
        std_error: None,
        ci_low: None,
        ci_high: None,
        covered: None,
        beta: None,
        beta_se: None,
        kept: None,
        orthogonality: None,
        error: None,
    };
    match run_dml(&data.dataset, &data.scaler, config, derive_seed(rep_seed, 1)) {
        Ok(fit) => {
            let kept = &fit.trimmed.kept_rows;
            out.true_ate = kept.iter().map(|&i| data.theta[i]).sum::<f64>() / kept.len() as f64;
            let e = fit.ate.estimate;
            out.ate = Some(e.point);
            out.std_error = Some(e.std_error);
            out.ci_low = Some(e.ci_low);
            out.ci_high = Some(e.ci_high);
            out.covered = Some(e.covers(out.true_ate));
            out.beta = Some(fit.model.beta.clone());
            out.beta_se = Some((1..=fit.model.n_features()).map(|j| fit.model.covariance[j][j].max(0.0).sqrt()).collect());
            out.kept = Some(kept.len());
            let gap = normal_equation_gap(&fit.model, &fit.residuals, &fit.trimmed.dataset.x);
            out.orthogonality = Some(gap / fit.residuals.y_res_norm());
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    Ok(out)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Runs `reps` independent replications in parallel. Rep `r` generates its
/// data and fits with seeds derived from `(seed, r)`, so the report does not
/// depend on scheduling. Estimator failures are recorded per rep.
pub fn monte_carlo(spec: &DgpSpec, config: &DmlConfig, reps: usize, seed: u64) -> Result<McReport> {
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    spec.validate()?;
    config.validate()?;
    let results = (0..reps)
        .into_par_iter()
        .map(|r| run_rep(spec, config, r, seed))
        .collect::<Result<Vec<_>>>()?;

    let ok: Vec<&RepResult> = results.iter().filter(|r| r.ate.is_some()).collect();
    let err = |r: &&RepResult| r.ate.unwrap() - r.true_ate;
    let bias = mean(ok.iter().map(err));
    let mse = mean(ok.iter().map(|r| err(r).powi(2)));
    // sqrt of a mean square can land one ulp under |mean| when all errors agree
    let rmse = mse.sqrt().max(bias.abs());
    let beta_truth = spec.theta.slopes(spec.p);
    let beta_mean = (!ok.is_empty()).then(|| {
        (0..spec.p)
            .map(|j| mean(ok.iter().map(|r| r.beta.as_ref().unwrap()[j])))
            .collect()
    });
    Ok(McReport {
        reps,
        succeeded: ok.len(),
        failed: reps - ok.len(),
        bias,
        rmse,
        mean_abs_error: mean(ok.iter().map(|r| err(r).abs())),
        coverage: mean(ok.iter().map(|r| f64::from(u8::from(r.covered.unwrap())))),
        mean_ci_width: mean(ok.iter().map(|r| r.ci_high.unwrap() - r.ci_low.unwrap())),
        naive_bias: mean(results.iter().map(|r| r.naive_ate - r.true_population_ate)),
        naive_mean_abs_error: mean(results.iter().map(|r| (r.naive_ate - r.true_population_ate).abs())),
        beta_truth,
        beta_mean,
        results,
    })
}
