//! Small statistical helpers used by the experiment harness and the
//! verification suites: exact binomial sign tests and chi-square statistics.

/// Exact tail P(X >= k) for X ~ Binomial(n, 1/2).
pub fn binomial_tail_half(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    // sum C(n, i) for i in k..=n, scaled by 2^-n
    let mut total = 0.0f64;
    let mut coeff = 1.0f64; // C(n, 0)
    for i in 0..=n {
        if i >= k {
            total += coeff;
        }
        coeff = coeff * (n - i) as f64 / (i + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

#[derive(Clone, Copy, Debug)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    /// One-sided p-value for "first > second" (ties dropped).
    pub p_value: f64,
}

/// Paired sign test of H1: first coordinate tends to exceed the second.
pub fn sign_test_greater(pairs: &[(f64, f64)]) -> SignTest {
    let wins = pairs.iter().filter(|(a, b)| a > b).count();
    let losses = pairs.iter().filter(|(a, b)| a < b).count();
    let n = wins + losses;
    let p_value = if n == 0 {
        1.0
    } else {
        binomial_tail_half(n, wins)
    };
    SignTest {
        wins,
        losses,
        p_value,
    }
}

/// Pearson chi-square statistic for observed counts vs expected counts.
pub fn chi_square_stat(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}
