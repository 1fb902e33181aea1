//! Hyperparameter learning by maximizing a leave-one-beam-out
//! pseudo-likelihood.
//!
//! Every beam `i` yields two pseudo-measurements: its end point, labelled
//! occupied, and a random point along the beam, labelled free. Each is
//! scored against the field built from all *other* beams:
//!
//! ```text
//! J(θ) = Σ_i log s(+2 λ_¬i(end_i)) + Σ_i log s(-2 λ_¬i(free_i))
//! ```
//!
//! with `s` the logistic function. `J` is maximized with Nelder-Mead over
//! the logarithms of the five parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::Scan;
use crate::model::{kernel_eval, log_logistic, BehindSensorSign, Hyperparameters, Measurement, Point2};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Log-parameters are kept inside this box during optimization.
const LOG_BOUNDS: (f64, f64) = (-20.0, 10.0);

/// Beams used for training, stored flat. Max-range beams are excluded.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    beams: Vec<Measurement<f64>>,
    origin: Vec<Point2<f64>>,
    hit: Vec<Point2<f64>>,
    inv_hh: Vec<f64>,
    pub prior_lambda: f64,
    pub behind_sensor_sign: BehindSensorSign,
}

impl TrainingSet {
    pub fn from_measurements<I>(measurements: I) -> Self
    where
        I: IntoIterator<Item = Measurement<f64>>,
    {
        let beams: Vec<_> = measurements.into_iter().filter(|m| !m.is_max_range()).collect();
        let origin = beams.iter().map(|m| m.pose().position()).collect();
        let hit: Vec<_> = beams.iter().map(|m| m.hit_vector()).collect();
        let inv_hh = hit.iter().map(|h| 1.0 / h.norm_squared()).collect();
        TrainingSet {
            beams,
            origin,
            hit,
            inv_hh,
            prior_lambda: 0.0,
            behind_sensor_sign: BehindSensorSign::Corrected,
        }
    }

    /// Collects valid hit beams from `scans`, keeping each with probability
    /// `subsample` (seeded).
    pub fn from_scans(scans: &[Scan<f64>], subsample: f64, seed: u64) -> Result<Self> {
        if !(subsample > 0.0 && subsample <= 1.0) {
            return Err(Error::invalid("beam subsample must lie in (0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kept = Vec::new();
        for m in scans.iter().flat_map(|s| s.measurements()).flatten() {
            if m.is_max_range() {
                continue;
            }
            if subsample >= 1.0 || rng.gen::<f64>() < subsample {
                kept.push(m);
            }
        }
        Ok(TrainingSet::from_measurements(kept))
    }

    pub fn beams(&self) -> &[Measurement<f64>] {
        &self.beams
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// `prior + Σ_{j ≠ skip} λ_j(point)`, full untruncated sum.
    fn lambda_excluding(&self, theta: &Hyperparameters<f64>, point: Point2<f64>, skip: usize) -> f64 {
        let mut sum = self.prior_lambda;
        for j in 0..self.origin.len() {
            if j != skip {
                sum += kernel_eval(
                    point - self.origin[j],
                    self.hit[j],
                    self.inv_hh[j],
                    theta,
                    self.behind_sensor_sign,
                );
            }
        }
        sum
    }
}

/// Occupied end points and free along-beam points, one pair per beam.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPointSet {
    pub endpoints: Vec<Point2<f64>>,
    pub free_points: Vec<Point2<f64>>,
    /// Fraction of the beam length at which each free point sits.
    pub fractions: Vec<f64>,
    pub rng_seed: u64,
    pub fraction_range: (f64, f64),
}

impl PseudoPointSet {
    pub fn sample(data: &TrainingSet, seed: u64, fraction_range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = fraction_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::invalid("fraction range must satisfy 0 < low <= high < 1"));
        }
        if data.is_empty() {
            return Err(Error::EmptySet("no hit beams to sample pseudo-points from".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = data.len();
        let (mut endpoints, mut free_points, mut fractions) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (origin, hit) in data.origin.iter().zip(&data.hit) {
            let u: f64 = rng.gen();
            let f = lo + (hi - lo) * u;
            endpoints.push(*origin + *hit);
            free_points.push(*origin + *hit * f);
            fractions.push(f);
        }
        Ok(PseudoPointSet {
            endpoints,
            free_points,
            fractions,
            rng_seed: seed,
            fraction_range,
        })
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }
}

/// Samples pseudo-points for every hit beam of `scans`.
pub fn sample_pseudo_points(
    scans: &[Scan<f64>],
    seed: u64,
    fraction_range: (f64, f64),
) -> Result<PseudoPointSet> {
    if scans.is_empty() {
        return Err(Error::EmptySet("no scans".into()));
    }
    let data = TrainingSet::from_scans(scans, 1.0, seed)?;
    PseudoPointSet::sample(&data, seed, fraction_range)
}

/// Statistic at `point` from every beam except `excluded_beam`.
pub fn loo_lambda(
    data: &TrainingSet,
    theta: &Hyperparameters<f64>,
    point: Point2<f64>,
    excluded_beam: usize,
) -> Result<f64> {
    if excluded_beam >= data.len() {
        return Err(Error::invalid(format!(
            "beam index {excluded_beam} out of range for {} beams",
            data.len()
        )));
    }
    if !point.is_finite() {
        return Err(Error::invalid("point must be finite"));
    }
    theta.validate()?;
    Ok(data.lambda_excluding(theta, point, excluded_beam))
}

/// Log pseudo-likelihood of the pseudo-points under `theta`.
pub fn pseudo_log_likelihood(
    data: &TrainingSet,
    theta: &Hyperparameters<f64>,
    pts: &PseudoPointSet,
) -> Result<f64> {
    if pts.len() != data.len() {
        return Err(Error::invalid("pseudo-points were not generated from this data"));
    }
    theta.validate()?;
    Ok(objective(data, theta, pts))
}

fn objective(data: &TrainingSet, theta: &Hyperparameters<f64>, pts: &PseudoPointSet) -> f64 {
    let mut total = 0.0;
    for i in 0..data.len() {
        let occ = data.lambda_excluding(theta, pts.endpoints[i], i);
        let free = data.lambda_excluding(theta, pts.free_points[i], i);
        total += log_logistic(2.0 * occ) + log_logistic(-2.0 * free);
    }
    total
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Optimizer {
    #[default]
    NelderMead,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingOptions {
    pub optimizer: Optimizer,
    pub max_evaluations: usize,
    pub relative_tolerance: f64,
    /// Fraction of hit beams kept for training.
    pub beam_subsample: f64,
    pub rng_seed: u64,
    pub fraction_range: (f64, f64),
    /// Initial simplex step in log-parameter space.
    pub initial_step: f64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            optimizer: Optimizer::NelderMead,
            max_evaluations: 500,
            relative_tolerance: 1e-4,
            beam_subsample: 1.0,
            rng_seed: 0,
            fraction_range: (0.1, 0.9),
            initial_step: 0.25,
        }
    }
}

impl TrainingOptions {
    fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::invalid("relative tolerance must be positive"));
        }
        if !(self.beam_subsample > 0.0 && self.beam_subsample <= 1.0) {
            return Err(Error::invalid("beam subsample must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Objective value at one evaluation, with the best value seen so far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub objective: f64,
    pub best_so_far: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutcome {
    pub theta: Hyperparameters<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

fn theta_from_logs(z: &[f64]) -> Hyperparameters<f64> {
    let e = |v: f64| v.clamp(LOG_BOUNDS.0, LOG_BOUNDS.1).exp();
    Hyperparameters {
        sigma_f: e(z[0]),
        sigma_h: e(z[1]),
        l_p: e(z[2]),
        l_f: e(z[3]),
        l_b: e(z[4]),
    }
}

/// Maximizes the pseudo-likelihood over `theta` for fixed pseudo-points.
pub fn optimize_with_points(
    data: &TrainingSet,
    pts: &PseudoPointSet,
    theta0: &Hyperparameters<f64>,
    opts: &TrainingOptions,
) -> Result<TrainingOutcome> {
    opts.validate()?;
    theta0.validate()?;
    if pts.len() != data.len() {
        return Err(Error::invalid("pseudo-points were not generated from this data"));
    }
    let z0: Vec<f64> = theta0.to_array().iter().map(|v| v.ln()).collect();
    if z0.iter().any(|z| !z.is_finite()) {
        return Err(Error::Init("all hyperparameters must be strictly positive to train".into()));
    }
    let initial_objective = objective(data, theta0, pts);
    if !initial_objective.is_finite() {
        return Err(Error::Init(format!("objective at the start point is {initial_objective}")));
    }
    let nm = NelderMeadOptions {
        max_evaluations: opts.max_evaluations,
        relative_tolerance: opts.relative_tolerance,
        initial_step: opts.initial_step,
    };
    let result = nelder_mead(|z: &[f64]| -objective(data, &theta_from_logs(z), pts), &z0, &nm)?;
    let theta = if result.x == z0 { *theta0 } else { theta_from_logs(&result.x) };
    Ok(TrainingOutcome {
        theta,
        objective: -result.value,
        initial_objective,
        evaluations: result.evaluations,
        converged: result.converged,
        trace: result
            .trace
            .iter()
            .map(|t| TracePoint {
                objective: -t.value,
                best_so_far: -t.best_so_far,
            })
            .collect(),
    })
}

/// Samples pseudo-points from `data` using the options' seed and range,
/// then maximizes.
pub fn optimize(
    data: &TrainingSet,
    theta0: &Hyperparameters<f64>,
    opts: &TrainingOptions,
) -> Result<TrainingOutcome> {
    opts.validate()?;
    let pts = PseudoPointSet::sample(data, opts.rng_seed, opts.fraction_range)?;
    optimize_with_points(data, &pts, theta0, opts)
}

/// Writes `theta` as `key=value` lines.
pub fn theta_to_text(theta: &Hyperparameters<f64>) -> String {
    format!(
        "sigma_f={}\nsigma_h={}\nl_p={}\nl_f={}\nl_b={}\n",
        theta.sigma_f, theta.sigma_h, theta.l_p, theta.l_f, theta.l_b
    )
}

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
/// All five keys are required.
pub fn theta_from_text(text: &str) -> Result<Hyperparameters<f64>> {
    let mut vals: [Option<f64>; 5] = [None; 5];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
        let slot = match k.trim() {
            "sigma_f" => 0,
            "sigma_h" => 1,
            "l_p" => 2,
            "l_f" => 3,
            "l_b" => 4,
            other => return Err(err(format!("unknown hyperparameter `{other}`"))),
        };
        vals[slot] = Some(v.trim().parse().map_err(|_| err(format!("bad value `{}`", v.trim())))?);
    }
    let names = ["sigma_f", "sigma_h", "l_p", "l_f", "l_b"];
    let mut out = [0.0; 5];
    for (k, v) in vals.iter().enumerate() {
        out[k] = v.ok_or_else(|| Error::invalid(format!("missing `{}`", names[k])))?;
    }
    Hyperparameters::new(out[0], out[1], out[2], out[3], out[4])
}
