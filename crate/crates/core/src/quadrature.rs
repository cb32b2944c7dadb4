//! Gauss-Legendre rules on [-1,1] and symmetric triangle rules.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Computed once by Newton iteration on the Legendre recurrence; exact for
/// polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=32).map(compute_gauss_legendre).collect());
    assert!(n >= 1 && n < cache.len(), "unsupported rule size {n}");
    &cache[n]
}

fn compute_gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-node initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        (1.0, 0.0)
    } else {
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }
}

/// Integrate f over the segment [a, b] with the n-point Gauss rule.
pub fn segment_integral(
    a: [f64; 2],
    b: [f64; 2],
    n: usize,
    mut f: impl FnMut(f64, f64) -> f64,
) -> f64 {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut acc = 0.0;
    for &(x, w) in gauss_legendre(n) {
        let t = 0.5 * (x + 1.0);
        let px = a[0] + t * (b[0] - a[0]);
        let py = a[1] + t * (b[1] - a[1]);
        acc += w * f(px, py);
    }
    acc * 0.5 * len
}

/// Barycentric nodes and weights (summing to 1) of the 3-point edge-midpoint
/// rule, exact for quadratics.
pub const TRI_MIDPOINT: [([f64; 3], f64); 3] = [
    ([0.5, 0.5, 0.0], 1.0 / 3.0),
    ([0.0, 0.5, 0.5], 1.0 / 3.0),
    ([0.5, 0.0, 0.5], 1.0 / 3.0),
];

/// Barycentric 7-point rule, exact for quintics.
pub fn tri_7point() -> &'static [([f64; 3], f64); 7] {
    static RULE: OnceLock<[([f64; 3], f64); 7]> = OnceLock::new();
    RULE.get_or_init(|| {
        let s15 = 15.0_f64.sqrt();
        let a = (6.0 - s15) / 21.0;
        let wa = (155.0 - s15) / 1200.0;
        let b = (6.0 + s15) / 21.0;
        let wb = (155.0 + s15) / 1200.0;
        [
            ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
            ([a, a, 1.0 - 2.0 * a], wa),
            ([a, 1.0 - 2.0 * a, a], wa),
            ([1.0 - 2.0 * a, a, a], wa),
            ([b, b, 1.0 - 2.0 * b], wb),
            ([b, 1.0 - 2.0 * b, b], wb),
            ([1.0 - 2.0 * b, b, b], wb),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_weights_sum_to_two() {
        for n in 1..=32 {
            let s: f64 = gauss_legendre(n).iter().map(|&(_, w)| w).sum();
            assert_relative_eq!(s, 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn gauss_exact_for_high_degree() {
        // 16 points integrate x^30 exactly: 2/31.
        let val: f64 = gauss_legendre(16)
            .iter()
            .map(|&(x, w)| w * x.powi(30))
            .sum();
        assert_relative_eq!(val, 2.0 / 31.0, max_relative = 1e-13);
    }

    #[test]
    fn triangle_rules_integrate_polynomials() {
        // On the reference triangle, integral of l0^2 is area/6.
        let q2: f64 = TRI_MIDPOINT.iter().map(|&(l, w)| w * l[0] * l[0]).sum();
        assert_relative_eq!(q2, 1.0 / 6.0, max_relative = 1e-14);
        // Mean of l0^5 over the triangle is (5!·2)/(7!) / area = 1/21.
        let q5: f64 = tri_7point().iter().map(|&(l, w)| w * l[0].powi(5)).sum();
        assert_relative_eq!(q5, 1.0 / 21.0, max_relative = 1e-13);
    }
}
