//! Derivative-free Nelder-Mead minimizer.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions<T> {
    /// Evaluation budget. The initial simplex is always evaluated in full,
    /// and an iteration in progress is allowed to finish.
    pub max_evaluations: usize,
    /// Stop once `f_worst - f_best <= relative_tolerance * max(|f_best|, tiny)`.
    pub relative_tolerance: T,
    /// Offset of the initial simplex vertices along each axis.
    pub initial_step: T,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        NelderMeadOptions {
            max_evaluations: 500,
            relative_tolerance: T::lit(1e-4),
            initial_step: T::lit(0.25),
        }
    }
}

/// One objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry<T> {
    pub value: T,
    pub best_so_far: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry<T>>,
}

struct Counter<'a, T, F> {
    f: &'a mut F,
    best: T,
    trace: Vec<TraceEntry<T>>,
}

impl<T: Scalar, F: FnMut(&[T]) -> T> Counter<'_, T, F> {
    fn eval(&mut self, x: &[T]) -> T {
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = T::infinity();
        }
        if v < self.best {
            self.best = v;
        }
        self.trace.push(TraceEntry {
            value: v,
            best_so_far: self.best,
        });
        v
    }
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+inf`,
/// except at `x0`, where they are an error.
pub fn nelder_mead<T, F>(mut f: F, x0: &[T], opts: &NelderMeadOptions<T>) -> Result<NelderMeadResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("cannot optimize over zero parameters"));
    }
    if !(opts.relative_tolerance > T::zero()) {
        return Err(Error::invalid("relative tolerance must be positive"));
    }
    let mut ctr = Counter {
        f: &mut f,
        best: T::infinity(),
        trace: Vec::new(),
    };
    let f0 = ctr.eval(x0);
    if !f0.is_finite() {
        return Err(Error::Init(format!("objective is not finite at the start point ({f0})")));
    }
    let mut simplex: Vec<(Vec<T>, T)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + opts.initial_step;
        let v = ctr.eval(&x);
        simplex.push((x, v));
    }

    let tiny = T::lit(1e-300);
    let mut converged = false;
    loop {
        // stable: ties keep the earlier vertex (x0 first) at the front
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = f_worst - f_best;
        if spread <= opts.relative_tolerance * f_best.abs().max(tiny) {
            converged = true;
            break;
        }
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if diameter <= T::lit(1e-12) {
            converged = true;
            break;
        }
        if ctr.trace.len() >= opts.max_evaluations {
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c = *c + *xi;
            }
        }
        let inv = T::one() / T::lit(n as f64);
        centroid.iter_mut().for_each(|c| *c = *c * inv);
        let toward = |from: &[T], to: &[T], t: f64| -> Vec<T> {
            from.iter().zip(to).map(|(a, b)| *a + (*b - *a) * T::lit(t)).collect()
        };

        let worst = simplex[n].0.clone();
        let xr = toward(&centroid, &worst, -REFLECT);
        let fr = ctr.eval(&xr);
        if fr < f_best {
            let xe = toward(&centroid, &xr, EXPAND);
            let fe = ctr.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < f_worst {
                let xc = toward(&centroid, &xr, CONTRACT);
                let fc = ctr.eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(&centroid, &worst, CONTRACT);
                let fc = ctr.eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(f_worst) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = toward(&best, &vertex.0, SHRINK);
                    let v = ctr.eval(&x);
                    *vertex = (x, v);
                }
            }
        }
    }
    let (x, value) = simplex.swap_remove(0);
    let evaluations = ctr.trace.len();
    Ok(NelderMeadResult {
        x,
        value,
        evaluations,
        converged,
        trace: ctr.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn minimizes_quadratic() {
        let opts = NelderMeadOptions {
            relative_tolerance: 1e-12,
            max_evaluations: 2000,
            ..Default::default()
        };
        let r = nelder_mead(|x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2) + 2.0, &[0.0, 0.0], &opts)
            .unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-4);
        assert!((r.x[1] + 1.0).abs() < 1e-4);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_converges() {
        let opts = NelderMeadOptions {
            relative_tolerance: 1e-14,
            max_evaluations: 5000,
            initial_step: 0.5,
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!(r.value < 1e-8, "value {}", r.value);
    }

    #[test]
    fn trace_best_is_monotone() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions::default()).unwrap();
        assert_eq!(r.trace.len(), r.evaluations);
        for w in r.trace.windows(2) {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
        assert_eq!(r.trace.last().unwrap().best_so_far, r.value);
    }

    #[test]
    fn budget_of_one_returns_best_initial_vertex() {
        let opts = NelderMeadOptions {
            max_evaluations: 1,
            ..Default::default()
        };
        let r = nelder_mead(|x: &[f64]| (x[0] - 1.0).powi(2) + x[1] * x[1], &[0.0, 0.0], &opts).unwrap();
        assert_eq!(r.evaluations, 3);
        assert_eq!(r.x, vec![0.25, 0.0]);
    }

    #[test]
    fn flat_objective_keeps_start() {
        let r = nelder_mead(|_: &[f64]| -5.0, &[0.3, 0.7, 1.1], &NelderMeadOptions::default()).unwrap();
        assert_eq!(r.x, vec![0.3, 0.7, 1.1]);
        assert!(r.converged);
        assert_eq!(r.evaluations, 4);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = nelder_mead(|_: &[f64]| f64::NAN, &[0.0], &NelderMeadOptions::default());
        assert!(matches!(r, Err(Error::Init(_))));
    }
}
