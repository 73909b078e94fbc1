//! One-sided Mann-Whitney U test with an exact permutation null.

use crate::error::{Error, Result};

/// Largest number of arrangements enumerated exactly; beyond this the normal
/// approximation with tie correction is used.
pub const EXACT_LIMIT: u64 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// `U` of the first group: pairs where it is larger, ties counted half.
    pub u: f64,
    /// `P(U ≥ u)` under the null.
    pub p_value: f64,
    pub exact: bool,
}

/// U statistic of `a` against `b`, doubled so it stays integral.
fn doubled_u(a: &[f64], b: &[f64]) -> u64 {
    let mut twice = 0;
    for &x in a {
        for &y in b {
            if x > y {
                twice += 2;
            } else if x == y {
                twice += 1;
            }
        }
    }
    twice
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    doubled_u(a, b) as f64 / 2.0
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Tests whether `a` is stochastically greater than `b`.
///
/// The p-value is `P(U ≥ u_observed)` over all `C(n+m, n)` ways of splitting
/// the pooled sample into groups of the original sizes; ties use midranks
/// (equivalently, count half in U). Large samples fall back to the normal
/// approximation.
pub fn mann_whitney_one_sided(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("both groups need at least one value".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("sample values must be finite".into()));
    }
    let observed = doubled_u(a, b);
    let (n, m) = (a.len() as u64, b.len() as u64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();

    if binomial(n + m, n) <= EXACT_LIMIT {
        let total_len = pooled.len();
        let mut chosen: Vec<usize> = (0..a.len()).collect();
        let mut ge = 0u64;
        let mut total = 0u64;
        let mut in_a = vec![false; total_len];
        loop {
            in_a.iter_mut().for_each(|v| *v = false);
            for &i in &chosen {
                in_a[i] = true;
            }
            let mut twice = 0u64;
            for &i in &chosen {
                for j in 0..total_len {
                    if !in_a[j] {
                        if pooled[i] > pooled[j] {
                            twice += 2;
                        } else if pooled[i] == pooled[j] {
                            twice += 1;
                        }
                    }
                }
            }
            total += 1;
            if twice >= observed {
                ge += 1;
            }
            if !next_combination(&mut chosen, total_len) {
                break;
            }
        }
        return Ok(MannWhitney {
            u: observed as f64 / 2.0,
            p_value: ge as f64 / total as f64,
            exact: true,
        });
    }

    // Normal approximation with tie correction and continuity correction.
    let (nf, mf) = (n as f64, m as f64);
    let mut sorted = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let big_n = nf + mf;
    let mean = nf * mf / 2.0;
    let var = nf * mf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    let u = observed as f64 / 2.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (u - mean - 0.5) / var.sqrt();
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    };
    Ok(MannWhitney {
        u,
        p_value: p.clamp(0.0, 1.0),
        exact: false,
    })
}

/// Advances a sorted index combination; false when exhausted.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

// Complementary error function (Numerical Recipes erfcc, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
