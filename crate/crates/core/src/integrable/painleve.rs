use serde::Serialize;

use super::{a_frak, b_frak_rh};
use crate::diff;
use crate::error::{Error, Result};
use crate::fredholm;
use crate::kernels::{HalfInt, SigmaProfile, Window};
use crate::par::{self, Execution};
use crate::specfun;

/// Forward iteration stops once the Fredholm cross-check exceeds this.
pub const HALT_THRESHOLD: f64 = 1e-6;

/// v(L,s) for s = -1/2, 1/2, ... with per-s Fredholm cross-checks.
#[derive(Debug, Clone, Serialize)]
pub struct PainleveSequence {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: Vec<HalfInt>,
    pub v: Vec<f64>,
    /// |1 - v² - Q(s+1)Q(s-1)/Q(s)²| for each stored s.
    pub cross_check: Vec<f64>,
    /// Set when iteration stopped before s_max; names the first failing s.
    pub blow_up: Option<HalfInt>,
}

impl PainleveSequence {
    pub fn get(&self, s: HalfInt) -> Option<f64> {
        let k = s.minus(HalfInt::below(0));
        (k >= 0).then(|| self.v.get(k as usize).copied()).flatten()
    }

    /// Largest s whose cross-check passed.
    pub fn horizon(&self) -> Option<HalfInt> {
        self.s.last().copied()
    }
}

fn recursion(l: f64, s_max: HalfInt) -> Result<Vec<f64>> {
    let x = 2.0 * l;
    let mut v = vec![1.0, -specfun::bessel_i(1, x)? / specfun::bessel_i(0, x)?];
    let mut s = HalfInt::above(0);
    while s < s_max {
        let k = v.len() - 1;
        let (cur, prev) = (v[k], v[k - 1]);
        let den = l * (cur * cur - 1.0);
        if den == 0.0 {
            return Err(Error::DegenerateRecursion(s.to_string()));
        }
        v.push((s.value() + 0.5) * cur / den - prev);
        s = s.succ();
    }
    let keep = (s_max.minus(HalfInt::below(0)) + 1).max(1) as usize;
    v.truncate(keep);
    Ok(v)
}

/// dPII from v(-1/2) = 1, v(1/2) = -I_1(2L)/I_0(2L), cross-checked against
/// the indicator gap probabilities.
pub fn dpii_sequence(l: f64, s_max: HalfInt, eps: f64) -> Result<PainleveSequence> {
    if !(l > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("L must be positive, got {l}")));
    }
    if s_max.twice() < -1 {
        return Err(Error::InvalidInput(format!("s_max must be >= -1/2, got {s_max}")));
    }
    let v = recursion(l, s_max)?;
    let ss: Vec<HalfInt> = HalfInt::range(HalfInt::below(-1), s_max.succ()).collect();
    let q = fredholm::gap_sweep(Execution::default(), &[l], &ss, &SigmaProfile::Indicator, eps)?;
    let mut out = PainleveSequence {
        l,
        s: Vec::new(),
        v: Vec::new(),
        cross_check: Vec::new(),
        blow_up: None,
    };
    for (k, &vk) in v.iter().enumerate() {
        let s = HalfInt::below(0).shift(k as i64);
        let (down, mid, up) = (q[k].q.max(0.0), q[k + 1].q, q[k + 2].q);
        let check = (1.0 - vk * vk - up * down / (mid * mid)).abs();
        if !(check <= HALT_THRESHOLD) {
            out.blow_up = Some(s);
            break;
        }
        out.s.push(s);
        out.v.push(vk);
        out.cross_check.push(check);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct VolterraReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    /// |∂_L v - (1 - v²)(v(s+1) - v(s-1))|
    pub residual: f64,
    /// |∂_L 𝔞(s) - (𝔞/2)(𝔟(s+1) - 𝔟(s))|, when 𝔞 is defined at s.
    pub res_a_relation: Option<f64>,
    /// |∂_L 𝔟(s) - 4(𝔞²(s) - 𝔞²(s-1)) + 𝔟(s)/L|, when defined.
    pub res_b_relation: Option<f64>,
}

/// Modified Volterra residual for the indicator dPII solution, plus the two
/// first-order relations between 𝔞 and 𝔟 for a general σ.
pub fn volterra_residual(l: f64, s: HalfInt, sigma: &SigmaProfile, h: f64, eps: f64) -> Result<VolterraReport> {
    if !(h > 0.0 && h < l) {
        return Err(Error::ParameterOutOfRange(format!("step h={h} must lie in (0, L)")));
    }
    if s.twice() < -1 {
        return Err(Error::InvalidInput(format!("s must be >= -1/2, got {s}")));
    }
    let top = s.succ();
    let dv = diff::richardson_first(
        |x| Ok::<f64, Error>(recursion(x, top)?[(top.minus(HalfInt::below(0)) - 1) as usize]),
        l,
        h,
    )?;
    let v = recursion(l, top)?;
    let k = s.minus(HalfInt::below(0)) as usize;
    let prev = if k == 0 { 0.0 } else { v[k - 1] };
    let residual = (dv - (1.0 - v[k] * v[k]) * (v[k + 1] - prev)).abs();

    let resolved = |x: HalfInt| -> Result<bool> {
        Ok(fredholm::gap_probability(l - h, x, sigma, eps)?
            .require_positive(10.0)
            .is_ok())
    };
    let res_a_relation = if resolved(s.pred())? {
        let ws: Vec<Window> = [s.pred(), s, s.succ()]
            .iter()
            .map(|&x| Window::select(x, l + h, sigma, eps))
            .collect::<Result<_>>()?;
        let a_at = |x: f64| -> Result<f64> {
            let q: Vec<f64> = ws
                .iter()
                .map(|w| fredholm::gap_probability_on(w, x, eps).map(|g| g.q))
                .collect::<Result<_>>()?;
            Ok((q[0] * q[2]).sqrt() / q[1])
        };
        let da = diff::richardson_first(a_at, l, h)?;
        let a = a_frak(l, s, sigma, eps)?;
        let b = b_frak_rh(l, s, sigma, eps)?;
        let b1 = b_frak_rh(l, s.succ(), sigma, eps)?;
        Some((da - a / 2.0 * (b1 - b)).abs())
    } else {
        None
    };
    let res_b_relation = if resolved(s.pred())? && resolved(s.pred().pred())? {
        let db = diff::richardson_first(|x| b_frak_rh(x, s, sigma, eps), l, h)?;
        let a = a_frak(l, s, sigma, eps)?;
        let a_prev = a_frak(l, s.pred(), sigma, eps)?;
        let b = b_frak_rh(l, s, sigma, eps)?;
        Some((db - 4.0 * (a * a - a_prev * a_prev) + b / l).abs())
    } else {
        None
    };
    Ok(VolterraReport {
        l,
        s,
        residual,
        res_a_relation,
        res_b_relation,
    })
}

/// Sequences for several L at once; used by sweeps and the CLI.
pub fn dpii_sweep(exec: Execution, ls: &[f64], s_max: HalfInt, eps: f64) -> Result<Vec<PainleveSequence>> {
    par::try_map_collect(exec, ls, |&l| dpii_sequence(l, s_max, eps))
}
