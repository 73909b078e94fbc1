//! Central finite-difference verification of tape gradients, using the
//! five-point stencil so truncation error stays far below the tolerance even
//! on gradients of order 1e-7.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub epsilon: f64,
    /// Coordinates to probe; `None` probes every coordinate.
    pub coordinates: Option<usize>,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 2e-4,
            coordinates: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Relative error with a `max(|a|, |n|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, params: &[(String, FeatureMap)]) -> Result<(Tape, NodeId)>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params
        .iter()
        .map(|(n, v)| tape.parameter(n.clone(), v.clone()))
        .collect();
    let loss = f(&mut tape, &ids)?;
    let v = tape.scalar(loss)?;
    if !v.is_finite() {
        return Err(Error::Numerical(format!("function value is {v}")));
    }
    Ok((tape, loss))
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` receives a fresh tape with `params` registered in order and returns the
/// scalar loss node.
pub fn gradient_check<F>(f: F, params: &[(String, FeatureMap)], options: &CheckOptions) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(options.epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {}", options.epsilon)));
    }
    let (tape, loss) = evaluate(&f, params)?;
    let grads = tape.backward(loss)?;

    let total: usize = params.iter().map(|(_, v)| v.len()).sum();
    let coords: Vec<usize> = match options.coordinates {
        Some(n) if n < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut v = sample(&mut rng, total, n).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..total).collect(),
    };

    let mut work: Vec<(String, FeatureMap)> = params.to_vec();
    let mut report = CheckReport {
        max_relative_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    for flat in coords {
        let (pi, idx) = locate(params, flat);
        let orig = work[pi].1.data()[idx];
        let mut at = |offset: f64| -> Result<f64> {
            work[pi].1.data_mut()[idx] = orig + offset;
            let (t, l) = evaluate(&f, &work)?;
            t.scalar(l)
        };
        let h = options.epsilon;
        let (f2, f1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
        work[pi].1.data_mut()[idx] = orig;

        let numeric = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h);
        let analytic = grads.params()[pi].1.data()[idx];
        let err = relative_error(analytic, numeric);
        report.coordinates_checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = err;
            report.worst = Some((params[pi].0.clone(), idx));
        }
    }
    Ok(report)
}

fn locate(params: &[(String, FeatureMap)], mut flat: usize) -> (usize, usize) {
    for (i, (_, v)) in params.iter().enumerate() {
        if flat < v.len() {
            return (i, flat);
        }
        flat -= v.len();
    }
    unreachable!("coordinate beyond parameter count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ResidualNorm;

    fn p(v: Vec<f64>) -> Vec<(String, FeatureMap)> {
        let n = v.len();
        vec![("p".to_string(), FeatureMap::from_vec(1, n, 1, v).unwrap())]
    }

    #[test]
    fn linear_function_is_exact() {
        let r = gradient_check(
            |t, ids| {
                let s = t.scale(ids[0], 3.5);
                Ok(t.mean(s))
            },
            &p(vec![0.3, -1.2, 4.0]),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-10, "{r:?}");
        assert_eq!(r.coordinates_checked, 3);
    }

    #[test]
    fn quadratic_function() {
        let r = gradient_check(
            |t, ids| {
                let s = t.pixel_norm(ids[0], ResidualNorm::Squared);
                Ok(t.mean(s))
            },
            &p(vec![0.3, -1.2, 4.0, 0.01]),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }

    #[test]
    fn non_finite_value_is_reported() {
        let r = gradient_check(
            |t, ids| {
                let s = t.scale(ids[0], f64::INFINITY);
                Ok(t.mean(s))
            },
            &p(vec![1.0]),
            &CheckOptions::default(),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn rejects_bad_epsilon() {
        let opts = CheckOptions {
            epsilon: 0.0,
            ..CheckOptions::default()
        };
        assert!(gradient_check(|t, ids| Ok(t.mean(ids[0])), &p(vec![1.0]), &opts).is_err());
    }
}
