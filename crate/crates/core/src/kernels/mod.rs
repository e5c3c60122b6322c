//! Lattice types, the discrete Bessel kernel K^Be on Z' x Z', its
//! finite-temperature deformation, and the symmetrised window of M_s.

mod halfint;
mod sigma;

pub use halfint::HalfInt;
pub use sigma::{LeftTail, SigmaProfile};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::specfun::{self, BesselRow};

/// Largest window (number of lattice points) any builder will assemble.
pub const MAX_WINDOW: usize = 4000;

/// J_n(2L) for all orders that matter at one L, with the kernel sums built on it.
#[derive(Debug, Clone)]
pub struct DiscreteBessel {
    l: f64,
    row: BesselRow,
    cut: i64,
    tol: f64,
}

impl DiscreteBessel {
    /// `min_order` forces the row out at least that far; orders past the
    /// returned cut satisfy |J| <= eps * 1e-3.
    pub fn new(l: f64, min_order: usize, eps: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::ParameterOutOfRange(format!("L must be positive, got {l}")));
        }
        if !(eps > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("eps must be positive, got {eps}")));
        }
        let x = 2.0 * l;
        let cut = specfun::negligible_order(x, eps * 1e-3);
        let row = specfun::bessel_j_row(x, cut.max(min_order), specfun::EPS_FLOOR)?;
        Ok(DiscreteBessel {
            l,
            row,
            cut: cut as i64,
            tol: 10.0 * eps.max(1e-14 * (1.0 + l)),
        })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// J_n(2L).
    pub fn j(&self, n: i64) -> f64 {
        self.row.get(n)
    }

    pub fn row(&self) -> &BesselRow {
        &self.row
    }

    /// Σ_{j>=0} J_{p+j} J_{q+j} with p = a + 1/2, q = b + 1/2.
    pub fn series(&self, a: HalfInt, b: HalfInt) -> f64 {
        let (p, q) = (a.ceil(), b.ceil());
        let j0 = (-self.cut - p.min(q)).max(0);
        let j1 = self.cut - p.max(q);
        (j0..=j1).map(|j| self.j(p + j) * self.j(q + j)).sum()
    }

    /// K^Be(a,a) = Σ_{j>=0} J_{p+j}^2, clamped to [0,1].
    pub fn diag(&self, a: HalfInt) -> f64 {
        if a.twice() < 0 {
            1.0 - self.diag_complement(a)
        } else {
            self.series(a, a).min(1.0)
        }
    }

    /// 1 - K^Be(a,a) = Σ_{j<0} J_{p+j}^2, summed directly so it keeps
    /// relative accuracy when K(a,a) is close to 1.
    pub fn diag_complement(&self, a: HalfInt) -> f64 {
        if a.twice() > 0 {
            return (1.0 - self.series(a, a)).max(0.0);
        }
        let p = a.ceil();
        let lo = (-self.cut - p).max(i64::MIN / 4);
        (lo..0).map(|j| self.j(p + j).powi(2)).sum::<f64>().min(1.0)
    }

    /// L (J_{a-1/2} J_{b+1/2} - J_{a+1/2} J_{b-1/2}) / (a - b) for a != b.
    pub fn closed_form(&self, a: HalfInt, b: HalfInt) -> f64 {
        let (p, q) = (a.ceil(), b.ceil());
        self.l * (self.j(p - 1) * self.j(q) - self.j(p) * self.j(q - 1)) / a.minus(b) as f64
    }

    /// K^Be(a,b), off-diagonal entries checked against the closed form.
    pub fn kernel(&self, a: HalfInt, b: HalfInt) -> Result<f64> {
        if a == b {
            return Ok(self.diag(a));
        }
        let s = self.series(a, b);
        self.check(a, b, s)?;
        Ok(s)
    }

    fn check(&self, a: HalfInt, b: HalfInt, series: f64) -> Result<()> {
        let c = self.closed_form(a, b);
        if (c - series).abs() > self.tol {
            return Err(Error::CrossCheck(format!(
                "K^Be({a},{b}) at L={}: series {series:e} vs closed form {c:e}",
                self.l
            )));
        }
        Ok(())
    }

    /// The block [K^Be(a,b)] for a in `points`, b in `points`.
    pub fn block(&self, points: &[HalfInt]) -> Result<DMatrix<f64>> {
        let n = points.len();
        if n == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        // K = H Hᵀ with H[i, j] = J_{p_i + j}, columns covering every
        // non-negligible order of every row.
        let pmin = points.iter().map(|a| a.ceil()).min().expect("non-empty");
        let j0 = (-self.cut - points.iter().map(|a| a.ceil()).max().expect("non-empty")).max(0);
        let j1 = (self.cut - pmin).max(j0);
        let m = (j1 - j0 + 1) as usize;
        let h = DMatrix::from_fn(n, m, |i, c| self.j(points[i].ceil() + j0 + c as i64));
        let mut k = &h * h.transpose();
        for i in 0..n {
            k[(i, i)] = self.diag(points[i]);
            for j in 0..i {
                let v = 0.5 * (k[(i, j)] + k[(j, i)]);
                self.check(points[i], points[j], v)?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

/// K^Be(a,b) at parameter L, accurate to eps.
pub fn kernel_bessel(a: HalfInt, b: HalfInt, l: f64, eps: f64) -> Result<f64> {
    let need = a.ceil().unsigned_abs().max(b.ceil().unsigned_abs()) as usize + 1;
    DiscreteBessel::new(l, need, eps)?.kernel(a, b)
}

/// Σ_{l in Z'} σ(l) J_{a+l}(2L) J_{b+l}(2L), both tails cut where the Bessel
/// bound makes them negligible.
pub fn kernel_finite_temp(a: HalfInt, b: HalfInt, l: f64, sigma: &SigmaProfile, eps: f64) -> Result<f64> {
    let need = a.ceil().unsigned_abs().max(b.ceil().unsigned_abs()) as usize + 1;
    let db = DiscreteBessel::new(l, need, eps)?;
    let (p, q) = (a.ceil(), b.ceil());
    let j0 = -db.cut - p.min(q);
    let j1 = db.cut - p.max(q);
    Ok((j0..=j1)
        .map(|j| {
            let w = sigma.eval(HalfInt::above(j));
            if w == 0.0 {
                0.0
            } else {
                w * db.j(p + j) * db.j(q + j)
            }
        })
        .sum())
}

/// The lattice points kept for M_s and the certificates for what was dropped.
#[derive(Debug, Clone)]
pub struct Window {
    pub s: HalfInt,
    pub lo: HalfInt,
    pub hi: HalfInt,
    /// σ(a - s - 1/2) for each kept a.
    pub sigma: Vec<f64>,
    /// Bound on Σ σ(a - s - 1/2) K(a,a) over points left of `lo`.
    pub left_cert: f64,
    /// Bound on Σ K(a,a) over points right of `hi`.
    pub right_cert: f64,
}

impl Window {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn points(&self) -> Vec<HalfInt> {
        HalfInt::range(self.lo, self.hi).collect()
    }

    pub fn trunc_err(&self) -> f64 {
        self.left_cert + self.right_cert
    }

    /// Chooses [lo, hi] so each side drops at most eps/2 of trace.
    pub fn select(s: HalfInt, l: f64, sigma: &SigmaProfile, eps: f64) -> Result<Self> {
        Self::select_with(s, l, sigma, eps, 0)
    }

    /// As [`Window::select`], with `extra` points appended on both sides.
    pub fn select_with(s: HalfInt, l: f64, sigma: &SigmaProfile, eps: f64, extra: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::ParameterOutOfRange(format!("L must be positive, got {l}")));
        }
        if !(eps > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("eps must be positive, got {eps}")));
        }
        let shift = s.ceil();
        let Some(first) = sigma.first_relevant(eps / 2.0) else {
            return Ok(Window {
                s,
                lo: s.succ(),
                hi: s,
                sigma: Vec::new(),
                left_cert: 0.0,
                right_cert: 0.0,
            });
        };
        let lo = first.shift(shift - extra as i64);
        let left_cert = sigma.tail_bound(lo.shift(-shift).pred());
        let mut hi = lo.pred();
        while right_tail(l, hi) > eps / 2.0 {
            hi = hi.succ();
            if hi.minus(lo) as usize >= MAX_WINDOW {
                return Err(Error::ResourceLimit(format!(
                    "window for L={l}, s={s} needs more than {MAX_WINDOW} points"
                )));
            }
        }
        if extra > 0 {
            hi = hi.shift(extra as i64);
        }
        let right_cert = right_tail(l, hi);
        let sig = HalfInt::range(lo, hi).map(|a| sigma.eval(a.shift(-shift))).collect();
        Ok(Window {
            s,
            lo,
            hi,
            sigma: sig,
            left_cert,
            right_cert,
        })
    }
}

/// Bound on Σ_{a > hi} K^Be(a,a) through Σ_{k >= a+1/2} B(2L,k)^2, summed as
/// two geometric series; infinite while the bound is not yet decreasing.
pub fn right_tail(l: f64, hi: HalfInt) -> f64 {
    let k0 = hi.ceil() + 1;
    if k0 < 1 || (k0 as f64 + 1.0) <= l {
        return f64::INFINITY;
    }
    let rho = l / (k0 as f64 + 1.0);
    let b = specfun::bessel_tail_bound(2.0 * l, k0 as usize);
    b * b / (1.0 - rho * rho).powi(2)
}

/// A window of M_s with its truncation certificate.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub lo: HalfInt,
    pub hi: HalfInt,
    pub entries: DMatrix<f64>,
    pub trunc_err: f64,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, a: HalfInt) -> Option<usize> {
        (a >= self.lo && a <= self.hi).then(|| a.minus(self.lo) as usize)
    }

    pub fn point(&self, i: usize) -> HalfInt {
        self.lo.shift(i as i64)
    }
}

/// M_s(a,b) = √σ(a-s-1/2) K^Be(a,b) √σ(b-s-1/2) on a certified window.
pub fn build_m(s: HalfInt, l: f64, sigma: &SigmaProfile, eps: f64) -> Result<KernelMatrix> {
    let w = Window::select(s, l, sigma, eps)?;
    build_m_on(&w, l, eps)
}

pub fn build_m_on(w: &Window, l: f64, eps: f64) -> Result<KernelMatrix> {
    let points = w.points();
    let need = points
        .iter()
        .map(|a| a.ceil().unsigned_abs() as usize + 1)
        .max()
        .unwrap_or(0);
    let k = if points.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        DiscreteBessel::new(l, need, eps)?.block(&points)?
    };
    let root: Vec<f64> = w.sigma.iter().map(|v| v.sqrt()).collect();
    let n = points.len();
    let entries = DMatrix::from_fn(n, n, |i, j| root[i] * k[(i, j)] * root[j]);
    Ok(KernelMatrix {
        lo: w.lo,
        hi: w.hi,
        entries,
        trunc_err: w.trunc_err(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(t: i64) -> HalfInt {
        HalfInt::from_twice(t).unwrap()
    }

    // J_n(x) by its power series, independent of the recurrence.
    fn j_series(n: i64, x: f64) -> f64 {
        let k = n.unsigned_abs();
        let half = x / 2.0;
        let mut term = (1..=k).fold(1.0, |t, i| t * half / i as f64);
        let mut sum = term;
        for j in 1..200u64 {
            term *= -half * half / (j as f64 * (j + k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        if n < 0 && k % 2 == 1 {
            -sum
        } else {
            sum
        }
    }

    #[test]
    fn diagonal_anchor() {
        let j0 = j_series(0, 2.0);
        let v = kernel_bessel(h(1), h(1), 1.0, 1e-13).unwrap();
        assert!((v - (1.0 - j0 * j0) / 2.0).abs() < 1e-13, "{v}");
        assert!((v - 0.474936).abs() < 1e-6);
    }

    #[test]
    fn deep_negative_diagonal_tends_to_one() {
        let v = kernel_bessel(h(-41), h(-41), 1.0, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        let db = DiscreteBessel::new(1.0, 30, 1e-13).unwrap();
        let c = db.diag_complement(h(-11));
        let direct: f64 = (-40i64..=-6).map(|k| j_series(k, 2.0).powi(2)).sum();
        assert!(c > 0.0 && c < 1e-5);
        assert!((c - direct).abs() <= 1e-12 * direct, "{c} vs {direct}");
    }

    #[test]
    fn series_and_closed_form_agree_against_oracle() {
        // the alternating power series is only trustworthy for small arguments
        for &l in &[0.3, 1.0, 2.5] {
            let db = DiscreteBessel::new(l, 40, 1e-13).unwrap();
            for a2 in (-15..=15).step_by(2) {
                for b2 in (-15..=15).step_by(2) {
                    let (a, b) = (h(a2), h(b2));
                    let oracle: f64 = (0..120)
                        .map(|j| j_series(a.ceil() + j, 2.0 * l) * j_series(b.ceil() + j, 2.0 * l))
                        .sum();
                    let v = db.kernel(a, b).unwrap();
                    assert!((v - oracle).abs() < 1e-12, "L={l} a={a} b={b}: {v} vs {oracle}");
                    assert_eq!(v, db.kernel(b, a).unwrap());
                }
            }
        }
    }

    #[test]
    fn large_l_paths_agree() {
        let db = DiscreteBessel::new(40.0, 150, 1e-13).unwrap();
        for a2 in (-121..=201).step_by(16) {
            for b2 in (-121..=201).step_by(22) {
                db.kernel(h(a2), h(b2)).unwrap();
            }
        }
        let d = db.diag(h(-301));
        assert!(d <= 1.0 && (1.0 - d) < 1e-12);
    }

    #[test]
    fn block_matches_pointwise() {
        let db = DiscreteBessel::new(1.5, 30, 1e-13).unwrap();
        let pts: Vec<_> = HalfInt::range(h(-9), h(13)).collect();
        let k = db.block(&pts).unwrap();
        for (i, &a) in pts.iter().enumerate() {
            for (j, &b) in pts.iter().enumerate() {
                assert!((k[(i, j)] - db.kernel(a, b).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn finite_temp_indicator_reduces_to_bessel() {
        for a2 in (-5..=3).step_by(2) {
            for b2 in (-5..=3).step_by(2) {
                let (a, b) = (h(a2), h(b2));
                let k = kernel_bessel(a, b, 1.0, 1e-13).unwrap();
                let f = kernel_finite_temp(a, b, 1.0, &SigmaProfile::Indicator, 1e-13).unwrap();
                assert!((k - f).abs() < 2e-13);
            }
        }
        let z = kernel_finite_temp(h(1), h(3), 1.0, &SigmaProfile::zero(), 1e-13).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn finite_temp_fermi_direct_sum() {
        let s = SigmaProfile::fermi(0.5).unwrap();
        let oracle: f64 = (-60i64..60)
            .map(|j| s.eval(HalfInt::above(j)) * j_series(1 + j, 2.0).powi(2))
            .sum();
        let v = kernel_finite_temp(h(1), h(1), 1.0, &s, 1e-13).unwrap();
        assert!((v - oracle).abs() < 1e-13, "{v} vs {oracle}");
    }

    #[test]
    fn indicator_window_starts_at_s_plus_one() {
        let m = build_m(h(-1), 1.0, &SigmaProfile::Indicator, 1e-12).unwrap();
        assert_eq!(m.lo, h(1));
        assert!(m.trunc_err <= 1e-12);
        let m = build_m(h(5), 1.0, &SigmaProfile::Indicator, 1e-12).unwrap();
        assert_eq!(m.lo, h(7));
    }

    #[test]
    fn empty_filling_gives_empty_window() {
        let m = build_m(h(1), 1.0, &SigmaProfile::zero(), 1e-12).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.trunc_err, 0.0);
    }

    #[test]
    fn spectrum_in_unit_interval() {
        let s = SigmaProfile::fermi(0.5).unwrap();
        let m = build_m(h(1), 1.0, &s, 1e-12).unwrap();
        assert!(m.len() > 5);
        for i in 0..m.len() {
            assert!((0.0..=1.0).contains(&m.entries[(i, i)]));
            for j in 0..m.len() {
                assert!((m.entries[(i, j)] - m.entries[(j, i)]).abs() < 1e-14);
            }
        }
        let eig = m.entries.clone().symmetric_eigen();
        for v in eig.eigenvalues.iter() {
            assert!(*v > -1e-10 && *v < 1.0 + 1e-10, "{v}");
        }
    }

    #[test]
    fn indicator_window_is_shifted_bessel_block() {
        let s = h(3);
        let m = build_m(s, 1.2, &SigmaProfile::Indicator, 1e-12).unwrap();
        for i in 0..m.len() {
            for j in 0..m.len() {
                let k = kernel_bessel(m.point(i), m.point(j), 1.2, 1e-13).unwrap();
                assert!((m.entries[(i, j)] - k).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn right_tail_is_certified() {
        let l = 2.0;
        let db = DiscreteBessel::new(l, 60, 1e-15).unwrap();
        for hi2 in (9..=31).step_by(2) {
            let hi = h(hi2);
            let direct: f64 = (1..200).map(|k| db.diag(hi.shift(k))).sum();
            assert!(right_tail(l, hi) >= direct);
        }
        assert!(right_tail(l, h(-1)).is_infinite());
    }

    #[test]
    fn huge_window_is_a_resource_error() {
        let s = SigmaProfile::fermi(0.999999).unwrap();
        assert!(matches!(build_m(h(1), 1.0, &s, 1e-12), Err(Error::ResourceLimit(_))));
    }
}
