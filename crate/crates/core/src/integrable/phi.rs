use serde::Serialize;

use super::a_frak;
use crate::drhp::{self, RHSolution};
use crate::error::{Error, Result};
use crate::kernels::{DiscreteBessel, HalfInt, SigmaProfile};
use crate::par::{self, Execution};

/// φ(l; L, s) = √((1 + β(s+1)) / L) · [Y(w) Φ₁(w)]₂ with w = l + s + 1/2.
#[derive(Debug, Clone, Serialize)]
pub struct PhiTable {
    #[serde(rename = "L")]
    pub l: f64,
    pub s_range: (HalfInt, HalfInt),
    pub l_range: (HalfInt, HalfInt),
    /// values[s index][l index]
    pub values: Vec<Vec<f64>>,
    /// α(s) and β(s) for s in s_lo..=s_hi+1.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl PhiTable {
    pub fn get(&self, l: HalfInt, s: HalfInt) -> Option<f64> {
        let (s0, s1) = self.s_range;
        let (l0, l1) = self.l_range;
        if s < s0 || s > s1 || l < l0 || l > l1 {
            return None;
        }
        Some(self.values[s.minus(s0) as usize][l.minus(l0) as usize])
    }

    /// α(s) for s_lo <= s <= s_hi + 1.
    pub fn alpha_at(&self, s: HalfInt) -> Option<f64> {
        let k = s.minus(self.s_range.0);
        (k >= 0).then(|| self.alpha.get(k as usize).copied()).flatten()
    }

    /// 𝔟(s) = -(2/L)(α(s) - α(s-1)) for s_lo < s <= s_hi + 1.
    pub fn b_frak(&self, s: HalfInt) -> Option<f64> {
        Some(-2.0 / self.l * (self.alpha_at(s)? - self.alpha_at(s.pred())?))
    }
}

pub fn phi_table(
    l: f64,
    sigma: &SigmaProfile,
    s_range: (HalfInt, HalfInt),
    l_range: (HalfInt, HalfInt),
    n: Option<usize>,
    eps: f64,
) -> Result<PhiTable> {
    let (s0, s1) = s_range;
    let (l0, l1) = l_range;
    if s1 < s0 || l1 < l0 {
        return Err(Error::InvalidInput("empty s or l range".into()));
    }
    let ss: Vec<HalfInt> = HalfInt::range(s0, s1.succ()).collect();
    let sols: Vec<RHSolution> =
        par::try_map_collect(Execution::default(), &ss, |&s| drhp::solve_rhp(l, s, sigma, n, eps))?;
    let ls: Vec<HalfInt> = HalfInt::range(l0, l1).collect();
    let need = ss
        .iter()
        .flat_map(|&s| [l0.shift(s.ceil()), l1.shift(s.ceil())])
        .chain(sols.iter().flat_map(|x| [x.window.0, x.window.1]))
        .map(|a| a.ceil().unsigned_abs() as usize + 2)
        .max()
        .unwrap_or(0);
    let bessel = DiscreteBessel::new(l, need, eps)?;
    let values = par::map_collect(Execution::default(), &ss[..ss.len() - 1], |&s| {
        let k = s.minus(s0) as usize;
        let norm = ((1.0 + sols[k + 1].beta) / l).sqrt();
        ls.iter()
            .map(|&x| norm * sols[k].y_phi1_with(&bessel, x.shift(s.ceil()))[1])
            .collect::<Vec<f64>>()
    });
    Ok(PhiTable {
        l,
        s_range,
        l_range,
        values,
        alpha: sols.iter().map(|x| x.alpha).collect(),
        beta: sols.iter().map(|x| x.beta).collect(),
    })
}

/// |𝔞(s+1)φ(l;s+1) + 𝔞(s)φ(l;s-1) - ((l+s+1)/L + 𝔟(s+1)/2)φ(l;s)|.
pub fn recursion_residual(t: &PhiTable, l: HalfInt, s: HalfInt, a_s: f64, a_s1: f64, b_s1: f64) -> Option<f64> {
    let up = t.get(l, s.succ())?;
    let mid = t.get(l, s)?;
    let down = t.get(l, s.pred())?;
    let coef = (l.plus(s) + 1) as f64 / t.l + b_s1 / 2.0;
    Some((a_s1 * up + a_s * down - coef * mid).abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct IdpiiReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub a_frak: f64,
    pub b_frak_next: f64,
    pub res_a_sum: f64,
    pub res_b_sum: f64,
    pub res_recursion: f64,
}

/// Residuals of the two sum identities for 𝔞(s), 𝔟(s+1) and of the
/// three-term recursion in s, with the l-sums over |l| <= l_cut.
pub fn verify_idpii(
    l: f64,
    s: HalfInt,
    sigma: &SigmaProfile,
    l_cut: HalfInt,
    n: Option<usize>,
    eps: f64,
) -> Result<IdpiiReport> {
    if l_cut.twice() < 0 {
        return Err(Error::InvalidInput(format!("l_cut must be positive, got {l_cut}")));
    }
    let t = phi_table(l, sigma, (s.pred(), s.succ()), (-l_cut.succ(), l_cut.succ()), n, eps)?;
    let a_s = a_frak(l, s, sigma, eps)?;
    let a_s1 = a_frak(l, s.succ(), sigma, eps)?;
    let b_s1 = t.b_frak(s.succ()).expect("table covers s+1");

    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut worst = 0.0f64;
    for x in HalfInt::range(-l_cut, l_cut) {
        let d = sigma.delta(x);
        if d != 0.0 {
            let g = |ll: HalfInt, ss: HalfInt| t.get(ll, ss).expect("table covers range");
            sum_a += d * g(x.succ(), s.pred()) * g(x, s);
            sum_b += d * g(x.succ(), s) * g(x, s);
        }
        let r = recursion_residual(&t, x, s, a_s, a_s1, b_s1).expect("table covers range");
        worst = worst.max(r);
    }
    Ok(IdpiiReport {
        l,
        s,
        a_frak: a_s,
        b_frak_next: b_s1,
        res_a_sum: (1.0 / a_s - a_s - sum_a / l).abs(),
        res_b_sum: (b_s1 - 2.0 * sum_b / l).abs(),
        res_recursion: worst,
    })
}

/// φ(l;L,s) / (√L J_{l+s+1}(2L)) for l in the given range.
pub fn phi_large_s_ratio(
    l: f64,
    sigma: &SigmaProfile,
    s: HalfInt,
    l_range: (HalfInt, HalfInt),
    eps: f64,
) -> Result<Vec<(HalfInt, f64)>> {
    let t = phi_table(l, sigma, (s, s), l_range, None, eps)?;
    let need = l_range.1.plus(s).unsigned_abs().max(l_range.0.plus(s).unsigned_abs()) as usize + 2;
    let b = DiscreteBessel::new(l, need, eps)?;
    Ok(HalfInt::range(l_range.0, l_range.1)
        .map(|x| {
            let j = l.sqrt() * b.j(x.plus(s) + 1);
            (x, t.get(x, s).expect("in range") / j)
        })
        .collect())
}
