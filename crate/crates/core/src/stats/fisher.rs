//! Fisher's exact test for 2x2 contingency tables.
//!
//! Two-tailed p-value under the point-probability rule: with margins fixed,
//! sum the hypergeometric probability of every table whose point probability
//! does not exceed the observed one.
//!
//! Small tables (every margin at most 60) are evaluated with exact integer
//! arithmetic — the hypergeometric weights share the denominator
//! `C(n, a+c)`, so tables can be compared and summed as `u128` binomial
//! products with no rounding at all. Larger tables fall back to
//! log-factorials with the usual `1 + 1e-7` slack on the comparison.

use super::StatsError;

const EXACT_MARGIN_LIMIT: u64 = 60;

/// Two-tailed Fisher's exact test on the table `[[a, b], [c, d]]`.
///
/// Rows are the two groups, columns the two outcomes. Every margin must be
/// positive. The result lies in `(0, 1]`.
pub fn fisher_exact_2x2(a: u64, b: u64, c: u64, d: u64) -> Result<f64, StatsError> {
    let (r1, r2) = (a + b, c + d);
    let (c1, c2) = (a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatsError::DegenerateMargins);
    }
    let p = if r1.max(r2).max(c1).max(c2) <= EXACT_MARGIN_LIMIT {
        exact_integer_tail(a, r1, r2, c1)
    } else {
        log_space_tail(a, r1, r2, c1)
    };
    Ok(p.min(1.0))
}

/// Support of the free cell given the margins.
fn support(r1: u64, r2: u64, c1: u64) -> (u64, u64) {
    (c1.saturating_sub(r2), r1.min(c1))
}

fn exact_integer_tail(a: u64, r1: u64, r2: u64, c1: u64) -> f64 {
    let (lo, hi) = support(r1, r2, c1);
    let weight = |x: u64| binomial_u128(r1, x) * binomial_u128(r2, c1 - x);
    let observed = weight(a);
    let mut tail: u128 = 0;
    let mut total: u128 = 0;
    for x in lo..=hi {
        let w = weight(x);
        total += w;
        if w <= observed {
            tail += w;
        }
    }
    tail as f64 / total as f64
}

fn log_space_tail(a: u64, r1: u64, r2: u64, c1: u64) -> f64 {
    let n = r1 + r2;
    let lf = ln_factorials(n as usize);
    let ln_choose = |n: u64, k: u64| lf[n as usize] - lf[k as usize] - lf[(n - k) as usize];
    let ln_weight = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x);
    let ln_total = ln_choose(n, c1);
    let (lo, hi) = support(r1, r2, c1);
    let observed = ln_weight(a);
    // Relative slack so float noise cannot exclude a genuinely tied table.
    let cutoff = observed + 1e-7;
    let mut p = 0.0;
    for x in lo..=hi {
        let lw = ln_weight(x);
        if lw <= cutoff {
            p += (lw - ln_total).exp();
        }
    }
    p
}

/// `ln(k!)` for `k = 0..=n`, by cumulative summation.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    lf.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        lf.push(acc);
    }
    lf
}

/// Exact binomial coefficient. Valid for `n <= 120`, which keeps every
/// intermediate product inside `u128`.
fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        // Multiply-then-divide stays exact: the running value is always a
        // binomial coefficient times an integer.
        result = result * (n - k + i) as u128 / i as u128;
    }
    result
}
