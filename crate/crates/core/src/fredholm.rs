//! Q_σ(L,s) = det(1 - M_s) on a certified window, the rank-one ratio
//! identity, and the Toeplitz closed form for the indicator filling.

use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::kernels::{self, DiscreteBessel, HalfInt, SigmaProfile, Window};
use crate::par::{self, Execution};

/// Default per-call accuracy target.
pub const DEFAULT_EPS: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapResult {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub q: f64,
    pub log_q: f64,
    /// Trace of what the window dropped.
    pub trunc_err: f64,
    /// Below this, q is only known to lie in [0, floor].
    pub floor: f64,
    pub window: (HalfInt, HalfInt),
}

impl GapResult {
    /// q is distinguishable from zero.
    pub fn is_resolved(&self) -> bool {
        self.q > self.floor
    }

    pub fn interval(&self) -> (f64, f64) {
        if self.is_resolved() {
            (self.q - self.floor, self.q + self.floor)
        } else {
            (0.0, self.floor)
        }
    }

    /// Error out unless q clears `factor` times its floor.
    pub fn require_positive(&self, factor: f64) -> Result<&Self> {
        if self.q > factor * self.floor {
            Ok(self)
        } else {
            Err(Error::DegenerateDeterminant {
                l: self.l,
                s: self.s.to_string(),
                value: self.q,
                floor: self.floor,
            })
        }
    }
}

/// log|det(I - W)| and the sign of det(I - W), by LU with partial pivoting.
pub fn log_det_one_minus(w: &DMatrix<f64>) -> (f64, f64) {
    let n = w.nrows();
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = DMatrix::identity(n, n) - w;
    let lu = a.lu();
    let u = lu.u();
    let mut log = 0.0;
    let mut sign = 1.0;
    for i in 0..n {
        let d = u[(i, i)];
        if d == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        log += d.abs().ln();
        if d < 0.0 {
            sign = -sign;
        }
    }
    (log, sign * lu.p().determinant::<f64>())
}

/// Q_σ(L,s) with the window chosen from eps.
pub fn gap_probability(l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<GapResult> {
    let w = Window::select(s, l, sigma, eps)?;
    gap_probability_on(&w, l, eps)
}

/// Q_σ(L,s) on a caller-chosen window. A window certified at some L' >= L
/// is certified at L as well, which keeps finite differences in L smooth.
pub fn gap_probability_on(w: &Window, l: f64, eps: f64) -> Result<GapResult> {
    let m = kernels::build_m_on(w, l, eps)?;
    let n = m.len();
    let (log, sign) = log_det_one_minus(&m.entries);
    let q = sign * log.exp();
    let trunc_err = w.left_cert + kernels::right_tail(l, w.hi).min(w.right_cert);
    let floor = trunc_err + 1e-15 * (1.0 + n as f64);
    Ok(GapResult {
        l,
        s: w.s,
        q,
        log_q: if sign > 0.0 { log } else { f64::NEG_INFINITY },
        trunc_err,
        floor,
        window: (w.lo, w.hi),
    })
}

/// Q over a grid, in row-major (L outer, s inner) order.
pub fn gap_sweep(
    exec: Execution,
    ls: &[f64],
    ss: &[HalfInt],
    sigma: &SigmaProfile,
    eps: f64,
) -> Result<Vec<GapResult>> {
    let grid: Vec<(f64, HalfInt)> = ls.iter().flat_map(|&l| ss.iter().map(move |&s| (l, s))).collect();
    par::try_map_collect(exec, &grid, |&(l, s)| gap_probability(l, s, sigma, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QZero {
    pub value: f64,
    /// Some factor 1 - σ(-i-s) is exactly zero.
    pub exact_zero: bool,
}

/// Q⁰_σ(s) = Π_{i>=1} (1 - σ(-i-s)), the L → 0 limit of Q.
pub fn q_zero(s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<QZero> {
    if !(eps > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("eps must be positive, got {eps}")));
    }
    let mut log = 0.0f64;
    let mut l = (-s).pred();
    for _ in 0..10_000_000u64 {
        // |log(1-σ)| <= 2σ once σ <= 1/2
        if sigma.eval(l) <= 0.5 && 2.0 * sigma.tail_bound(l) <= eps {
            return Ok(QZero {
                value: log.exp(),
                exact_zero: false,
            });
        }
        let c = sigma.complement(l);
        if c == 0.0 {
            return Ok(QZero {
                value: 0.0,
                exact_zero: true,
            });
        }
        log += c.ln();
        l = l.pred();
    }
    Err(Error::ResourceLimit(format!(
        "Q0 product at s={s} did not reach its tail"
    )))
}

/// |Q(s-1)/Q(s) - 1 + nᵀ(1 - W)⁻¹n| with n(a) = √σ(a-s-1/2) J_{a-1/2}(2L).
pub fn ratio_identity_residual(l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<f64> {
    let (lhs, rhs) = ratio_identity_sides(l, s, sigma, eps)?;
    Ok((lhs - rhs).abs())
}

/// Both sides of the rank-one identity, for reporting.
pub fn ratio_identity_sides(l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<(f64, f64)> {
    let q = gap_probability(l, s, sigma, eps)?;
    q.require_positive(10.0)?;
    let q_prev = gap_probability(l, s.pred(), sigma, eps)?;
    let lhs = q_prev.q / q.q - 1.0;

    let w = Window::select(s, l, sigma, eps)?;
    if w.is_empty() {
        return Ok((lhs, 0.0));
    }
    let m = kernels::build_m_on(&w, l, eps)?;
    let pts = w.points();
    let need = pts
        .iter()
        .map(|a| a.ceil().unsigned_abs() as usize + 1)
        .max()
        .unwrap_or(0);
    let db = DiscreteBessel::new(l, need, eps)?;
    let n = DVector::from_iterator(
        pts.len(),
        pts.iter().zip(&w.sigma).map(|(a, sg)| sg.sqrt() * db.j(a.floor())),
    );
    let a = DMatrix::identity(pts.len(), pts.len()) - &m.entries;
    let x = a.lu().solve(&n).ok_or_else(|| Error::DegenerateDeterminant {
        l,
        s: s.to_string(),
        value: q.q,
        floor: q.floor,
    })?;
    Ok((lhs, -n.dot(&x)))
}

/// e^{-L²} det[I_{i-j}(2L)]_{i,j=1..s+1/2}, the indicator gap probability in
/// Toeplitz form. Zero for s < -1/2.
///
/// The matrix has condition number up to e^{4L}, so both the I_n values and
/// the elimination run in double-double arithmetic.
pub fn toeplitz_gap(l: f64, s: HalfInt) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("L must be positive, got {l}")));
    }
    if s.twice() < -1 {
        return Ok(0.0);
    }
    let m = s.ceil() as usize;
    let iv: Vec<TwoFloat> = (0..m).map(|k| bessel_i_dd(k as u32, 2.0 * l)).collect();
    let mut a: Vec<Vec<TwoFloat>> = (0..m).map(|i| (0..m).map(|j| iv[i.abs_diff(j)]).collect()).collect();
    let mut det = TwoFloat::from(1.0);
    for c in 0..m {
        let p = (c..m)
            .max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).expect("finite"))
            .expect("non-empty");
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        let piv = a[c][c];
        if piv == 0.0 {
            return Ok(0.0);
        }
        det *= piv;
        for r in c + 1..m {
            let (upper, lower) = a.split_at_mut(r);
            let row = &mut lower[0];
            let f = row[c] / piv;
            for (x, &p) in row[c..].iter_mut().zip(&upper[c][c..]) {
                *x -= f * p;
            }
        }
    }
    Ok(det.hi() * (-l * l).exp())
}

/// I_n(x) by its power series, summed in double-double.
fn bessel_i_dd(n: u32, x: f64) -> TwoFloat {
    let half = TwoFloat::from(x) / 2.0;
    let q = half * half;
    let mut term = TwoFloat::from(1.0);
    for i in 1..=n {
        term = term * half / f64::from(i);
    }
    let mut sum = term;
    let mut j = 0.0f64;
    loop {
        j += 1.0;
        term = term * q / (j * (j + f64::from(n)));
        sum += term;
        if term.hi() <= sum.hi() * 1e-34 {
            break;
        }
    }
    sum
}

/// Memo of gap probabilities keyed by (σ id, L, s, eps). Values are
/// deterministic, so concurrent writers racing on a key is harmless.
#[derive(Debug, Default)]
pub struct GapCache {
    map: RwLock<HashMap<(String, u64, i64, u64), GapResult>>,
}

impl GapCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<GapResult> {
        let key = (sigma.id(), l.to_bits(), s.twice(), eps.to_bits());
        if let Some(v) = self.map.read().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = gap_probability(l, s, sigma, eps)?;
        self.map.write().expect("cache lock").insert(key, v.clone());
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(t: i64) -> HalfInt {
        HalfInt::from_twice(t).unwrap()
    }

    fn i_series(n: u32, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = (1..=n).fold(1.0, |t, i| t * half / i as f64);
        let mut sum = term;
        for j in 1..400u32 {
            term *= half * half / (j as f64 * (j + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn closed_form_anchors() {
        for &l in &[0.5, 1.0, 2.0] {
            let q = gap_probability(l, h(-1), &SigmaProfile::Indicator, 1e-13).unwrap();
            assert!((q.q - (-l * l).exp()).abs() < 1e-12, "L={l}: {}", q.q);
            let q = gap_probability(l, h(1), &SigmaProfile::Indicator, 1e-13).unwrap();
            let want = (-l * l).exp() * i_series(0, 2.0 * l);
            assert!((q.q - want).abs() < 1e-12, "L={l}: {} vs {want}", q.q);
        }
    }

    #[test]
    fn empty_filling_is_one() {
        let q = gap_probability(1.3, h(-7), &SigmaProfile::zero(), 1e-13).unwrap();
        assert_eq!(q.q, 1.0);
        assert_eq!(q.trunc_err, 0.0);
    }

    #[test]
    fn below_support_is_unresolved() {
        let q = gap_probability(1.0, h(-3), &SigmaProfile::Indicator, 1e-13).unwrap();
        assert!(!q.is_resolved());
        assert!(q.q.abs() < 1e-14);
        assert!(q.require_positive(10.0).is_err());
    }

    #[test]
    fn log_det_matches_determinant() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, 0.2, 0.0, 0.2, 1.4]);
        let direct = (DMatrix::identity(3, 3) - &w).determinant();
        let (log, sign) = log_det_one_minus(&w);
        assert!((sign * log.exp() - direct).abs() < 1e-15);
        assert!(sign < 0.0);
    }

    #[test]
    fn q_zero_values() {
        let one = q_zero(h(-1), &SigmaProfile::Indicator, 1e-14).unwrap();
        assert_eq!(one.value, 1.0);
        let zero = q_zero(h(-3), &SigmaProfile::Indicator, 1e-14).unwrap();
        assert!(zero.exact_zero && zero.value == 0.0);
        let f = SigmaProfile::fermi(0.5).unwrap();
        let oracle: f64 = (1..=200).map(|i| 1.0 - f.eval(h(-1).shift(-i))).product();
        let v = q_zero(h(1), &f, 1e-15).unwrap().value;
        assert!((v - oracle).abs() < 1e-14, "{v} vs {oracle}");
        assert!((v - 0.5287).abs() < 1e-4);
    }

    #[test]
    fn ratio_identity_holds() {
        let f = SigmaProfile::fermi(0.5).unwrap();
        assert!(ratio_identity_residual(1.0, h(1), &SigmaProfile::Indicator, 1e-13).unwrap() < 1e-10);
        assert!(ratio_identity_residual(1.0, h(3), &f, 1e-13).unwrap() < 1e-10);
        assert_eq!(
            ratio_identity_residual(1.0, h(3), &SigmaProfile::zero(), 1e-13).unwrap(),
            0.0
        );
    }

    #[test]
    fn toeplitz_matches_fredholm() {
        for &l in &[0.5, 1.5, 3.0] {
            for s2 in (-1..=21).step_by(2) {
                let q = gap_probability(l, h(s2), &SigmaProfile::Indicator, 1e-13).unwrap();
                let t = toeplitz_gap(l, h(s2)).unwrap();
                assert!((q.q - t).abs() < 1e-11, "L={l} s={s2}/2: {} vs {t}", q.q);
            }
        }
    }

    #[test]
    fn monotone_and_tends_to_one() {
        let f = SigmaProfile::fermi(0.5).unwrap();
        for sigma in [SigmaProfile::Indicator, f.clone()] {
            let ss: Vec<_> = HalfInt::range(h(-9), h(21)).collect();
            let r = gap_sweep(Execution::default(), &[2.0], &ss, &sigma, 1e-13).unwrap();
            for w in r.windows(2) {
                assert!(w[1].q >= w[0].q - 2.0 * w[0].trunc_err - 1e-14);
            }
        }
        let far = gap_probability(2.0, HalfInt::above(18), &SigmaProfile::Indicator, 1e-13).unwrap();
        assert!(1.0 - far.q < 1e-8);
        // the Fermi tail only decays like u^s: check against 1 - det(1-M) <= tr M
        let mut prev = 1.0;
        for s2 in (21..=61).step_by(4) {
            let s = h(s2);
            let q = gap_probability(2.0, s, &f, 1e-15).unwrap();
            let m = kernels::build_m(s, 2.0, &f, 1e-15).unwrap();
            assert!(1.0 - q.q <= m.entries.trace() + 1e-15);
            assert!(1.0 - q.q < 0.3 * prev);
            prev = 1.0 - q.q;
        }
    }

    #[test]
    fn widened_window_stays_within_certificate() {
        let f = SigmaProfile::fermi(0.5).unwrap();
        let w = Window::select(h(3), 1.0, &f, 1e-10).unwrap();
        let wide = Window::select_with(h(3), 1.0, &f, 1e-10, w.len() / 2 + 1).unwrap();
        let a = gap_probability_on(&w, 1.0, 1e-10).unwrap();
        let b = gap_probability_on(&wide, 1.0, 1e-10).unwrap();
        assert!((a.q - b.q).abs() <= a.trunc_err + 1e-14);
    }

    #[test]
    fn cache_returns_identical_values() {
        let c = GapCache::new();
        let a = c.get(1.0, h(1), &SigmaProfile::Indicator, 1e-13).unwrap();
        let b = c.get(1.0, h(1), &SigmaProfile::Indicator, 1e-13).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.len(), 1);
    }
}
