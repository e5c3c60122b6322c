//! Integer-order Bessel functions J_n(x) and I_n(x) for real x > 0, plus the
//! elementary bound |J_{±k}(x)| <= (x/2)^k / k! that every truncation
//! certificate in this crate is expressed through.

use crate::error::{Error, Result};

/// Largest start order the backward recurrence is allowed to use.
pub const MAX_START_ORDER: usize = 200_000;

/// Smallest per-entry accuracy a row will promise.
pub const EPS_FLOOR: f64 = 1e-15;

/// J_n(x) for |n| <= n_max at a fixed argument.
#[derive(Debug, Clone)]
pub struct BesselRow {
    x: f64,
    values: Vec<f64>,
    eps: f64,
    start_order: usize,
}

impl BesselRow {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// Absolute error bound per entry.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn start_order(&self) -> usize {
        self.start_order
    }

    /// J_n(x). Orders beyond `n_max` read as 0; rows built with
    /// [`BesselRow::covering`] make that exact to within `eps`.
    pub fn get(&self, n: i64) -> f64 {
        let k = n.unsigned_abs() as usize;
        if k >= self.values.len() {
            return 0.0;
        }
        let v = self.values[k];
        if n < 0 && k % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// Values for orders 0..=n_max.
    pub fn non_negative(&self) -> &[f64] {
        &self.values
    }

    /// A row extended far enough that every order past `n_max` has
    /// |J| <= eps * 1e-3 by the tail bound.
    pub fn covering(x: f64, min_order: usize, eps: f64) -> Result<Self> {
        let n = negligible_order(x, eps * 1e-3).max(min_order);
        bessel_j_row(x, n, eps)
    }
}

/// Smallest k >= x/2 with (x/2)^k / k! <= tol.
pub fn negligible_order(x: f64, tol: f64) -> usize {
    let ln_tol = tol.ln();
    let mut k = (x / 2.0).ceil() as usize;
    while ln_tail_bound(x, k) > ln_tol {
        k += 1;
    }
    k
}

/// J_n(x) for all |n| <= n_max by Miller's backward recurrence, normalised
/// with J_0 + 2 Σ_{k>=1} J_{2k} = 1.
pub fn bessel_j_row(x: f64, n_max: usize, eps: f64) -> Result<BesselRow> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::ParameterOutOfRange(format!(
            "Bessel argument must be positive and finite, got {x}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("eps must be positive, got {eps}")));
    }
    let eps = eps.max(EPS_FLOOR);
    let start = miller_start(x, n_max, eps)?;

    let mut f = vec![0.0f64; start + 2];
    f[start] = 1.0;
    for k in (1..=start).rev() {
        let next = (2.0 * k as f64 / x) * f[k] - f[k + 1];
        f[k - 1] = next;
        if next.abs() > 1e250 {
            for v in &mut f[k - 1..=start] {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = f[0] + 2.0 * f.iter().step_by(2).skip(1).take(start / 2).sum::<f64>();
    let values: Vec<f64> = f[..=n_max].iter().map(|v| v / norm).collect();

    let roundoff = 4.0 * f64::EPSILON * (start as f64).sqrt();
    Ok(BesselRow {
        x,
        values,
        eps: eps.max(roundoff),
        start_order: start,
    })
}

fn miller_start(x: f64, n_max: usize, eps: f64) -> Result<usize> {
    let ln_target = eps.ln() - 14.0;
    let mut n = n_max.max(x.ceil() as usize) + 20;
    while ln_tail_bound(x, n) > ln_target {
        n += 1;
        if n > MAX_START_ORDER {
            break;
        }
    }
    n += n % 2;
    if n > MAX_START_ORDER {
        return Err(Error::ParameterOutOfRange(format!(
            "backward recurrence start order {n} exceeds {MAX_START_ORDER} (x={x}, n_max={n_max})"
        )));
    }
    Ok(n)
}

/// I_n(x) by its positive power series Σ_j (x/2)^{2j+n} / (j! (n+j)!).
pub fn bessel_i(n: u32, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::ParameterOutOfRange(format!(
            "Bessel argument must be positive and finite, got {x}"
        )));
    }
    let half = x / 2.0;
    let q = half * half;
    let mut term = (n as f64 * half.ln() - ln_factorial(n as usize)).exp();
    let mut sum = term;
    let mut j = 0.0f64;
    loop {
        j += 1.0;
        term *= q / (j * (j + n as f64));
        sum += term;
        if term <= sum * 1e-17 && j > half {
            break;
        }
    }
    Ok(sum)
}

/// B(x,k) = (x/2)^k / k!, an upper bound on |J_{±k}(x)|.
pub fn bessel_tail_bound(x: f64, k: usize) -> f64 {
    ln_tail_bound(x, k).exp()
}

pub fn ln_tail_bound(x: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    k as f64 * (x / 2.0).ln() - ln_factorial(k)
}

pub fn ln_factorial(k: usize) -> f64 {
    if k < 24 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: Σ_j (-1)^j (x/2)^{2j+n} / (j!(n+j)!).
    fn j_series(n: u32, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = (0..n).fold(1.0, |acc, i| acc * half / (i + 1) as f64);
        let mut sum = term;
        for j in 1..200 {
            term *= -half * half / (j as f64 * (j + n) as f64);
            sum += term;
            if term.abs() < 1e-300 {
                break;
            }
        }
        sum
    }

    fn i_series(n: u32, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = (0..n).fold(1.0, |acc, i| acc * half / (i + 1) as f64);
        let mut sum = term;
        for j in 1..400 {
            term *= half * half / (j as f64 * (j + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn low_orders_at_two() {
        let row = bessel_j_row(2.0, 1, 1e-15).unwrap();
        assert!((j_series(0, 2.0) - 0.223_890_779_141_235_7).abs() < 1e-15);
        assert!((row.get(0) - j_series(0, 2.0)).abs() < 1e-14);
        assert!((row.get(1) - j_series(1, 2.0)).abs() < 1e-14);
        assert!((row.get(0) - 0.223891).abs() < 1e-6);
        assert!((row.get(1) - 0.576725).abs() < 1e-6);
    }

    #[test]
    fn matches_series_for_many_orders() {
        for &x in &[0.1, 1.0, 2.0, 4.0, 6.0] {
            let row = bessel_j_row(x, 40, 1e-15).unwrap();
            for n in 0..=40u32 {
                let want = j_series(n, x);
                assert!((row.get(n as i64) - want).abs() < 2e-14, "x={x} n={n}");
            }
        }
    }

    #[test]
    fn negative_orders_by_symmetry() {
        let row = bessel_j_row(3.7, 10, 1e-14).unwrap();
        assert_eq!(row.get(-3), -row.get(3));
        assert_eq!(row.get(-4), row.get(4));
    }

    #[test]
    fn normalisation_and_recurrence() {
        for &x in &[0.05, 2.0, 20.0, 250.0] {
            let row = BesselRow::covering(x, 0, 1e-15).unwrap();
            let v = row.non_negative();
            let even: f64 = v[0] + 2.0 * v.iter().step_by(2).skip(1).sum::<f64>();
            assert!((even - 1.0).abs() < 1e-12, "x={x}: {even}");
            let sq: f64 = v[0] * v[0] + 2.0 * v[1..].iter().map(|a| a * a).sum::<f64>();
            assert!((sq - 1.0).abs() < 1e-12, "x={x}: {sq}");
            for k in 1..row.n_max() as i64 {
                let r = x * (row.get(k + 1) + row.get(k - 1)) - 2.0 * k as f64 * row.get(k);
                assert!(r.abs() < 10.0 * row.eps() * (1.0 + x), "x={x} k={k} r={r}");
            }
        }
    }

    #[test]
    fn tail_bound_values() {
        assert_eq!(bessel_tail_bound(2.0, 0), 1.0);
        let f10: f64 = (1..=10).map(|i| i as f64).product();
        assert!((bessel_tail_bound(2.0, 10) - 1.0 / f10).abs() < 1e-20);
        assert!((bessel_tail_bound(2.0, 10) - 2.7557e-7).abs() < 1e-10);
        for k in 0..=50u32 {
            assert!(bessel_tail_bound(2.0, k as usize) >= j_series(k, 2.0).abs());
        }
        // monotone past x/2
        let x = 30.0;
        for k in 16..100 {
            assert!(bessel_tail_bound(x, k + 1) < bessel_tail_bound(x, k));
        }
    }

    #[test]
    fn ln_factorial_stirling_branch() {
        let exact: f64 = (2..=30).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(30) - exact).abs() < 1e-12);
        let exact: f64 = (2..=24).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(24) - exact).abs() < 1e-12);
    }

    #[test]
    fn modified_bessel_series() {
        assert!((bessel_i(0, 2.0).unwrap() - 2.279585).abs() < 1e-6);
        assert!((bessel_i(1, 2.0).unwrap() - 1.590637).abs() < 1e-6);
        for &(n, x) in &[
            (0u32, 2.0),
            (1, 2.0),
            (5, 0.3),
            (3, 6.0),
            (20, 12.0),
            (0, 50.0),
            (200, 50.0),
        ] {
            let want = i_series(n, x);
            let got = bessel_i(n, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-13, "n={n} x={x}");
        }
        assert!(bessel_i(5, 1e-6).unwrap() < 1e-30);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            bessel_j_row(0.0, 3, 1e-14),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(matches!(
            bessel_j_row(-1.0, 3, 1e-14),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(matches!(bessel_i(0, 0.0), Err(Error::ParameterOutOfRange(_))));
        assert!(matches!(
            bessel_j_row(2.0, MAX_START_ORDER + 5, 1e-14),
            Err(Error::ParameterOutOfRange(_))
        ));
    }

    #[test]
    fn orthogonality_over_shifted_lattice() {
        // Σ_{l∈Z'} J_{a+l}(x) J_{b+l}(x) = δ_ab for a, b ∈ Z'; a+l and b+l are integers.
        for &x in &[1.0, 4.0, 10.0] {
            let row = BesselRow::covering(x, 60, 1e-15).unwrap();
            let m = row.n_max() as i64;
            assert!(bessel_tail_bound(x, m as usize) < 1e-13);
            for a2 in (-19..=19).step_by(2) {
                for b2 in (-19..=19).step_by(2) {
                    // l = (2j+1)/2, a + l = (a2 + 2j + 1)/2
                    let mut sum = 0.0;
                    for j in -(m + 12)..=(m + 12) {
                        let p = (a2 + 2 * j + 1) / 2;
                        let q = (b2 + 2 * j + 1) / 2;
                        sum += row.get(p) * row.get(q);
                    }
                    let want = if a2 == b2 { 1.0 } else { 0.0 };
                    assert!((sum - want).abs() < 1e-12, "x={x} a={a2}/2 b={b2}/2 sum={sum}");
                }
            }
        }
    }
}
