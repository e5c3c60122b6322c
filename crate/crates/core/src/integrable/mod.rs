//! Residuals of the integrable identities satisfied by Q_σ(L,s): the
//! cylindrical Toda equation, the small-L limit, the (𝔞, 𝔟) pair and their
//! Lax relations, and the dPII / modified Volterra reduction.

mod painleve;
mod phi;

pub use painleve::{dpii_sequence, dpii_sweep, volterra_residual, PainleveSequence, VolterraReport, HALT_THRESHOLD};
pub use phi::{phi_large_s_ratio, phi_table, recursion_residual, verify_idpii, IdpiiReport, PhiTable};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diff;
use crate::drhp;
use crate::error::{Error, Result};
use crate::fredholm::{self, GapResult};
use crate::kernels::{HalfInt, SigmaProfile, Window};

/// Q(L + k h, s) for k = -2..=2 on one window certified at L + 2h.
pub fn q_stencil(l: f64, s: HalfInt, sigma: &SigmaProfile, h: f64, eps: f64) -> Result<[GapResult; 5]> {
    if !(h > 0.0) || !(l - 2.0 * h > 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "step h={h} must satisfy 0 < 2h < L={l}"
        )));
    }
    let w = Window::select(s, l + 2.0 * h, sigma, eps)?;
    let g = |k: f64| fredholm::gap_probability_on(&w, l + k * h, eps);
    Ok([g(-2.0)?, g(-1.0)?, g(0.0)?, g(1.0)?, g(2.0)?])
}

#[derive(Debug, Clone, Serialize)]
pub struct TodaReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub h: f64,
    /// ∂²_L log Q + (1/L) ∂_L log Q + 4
    pub lhs: f64,
    /// 4 Q(s+1) Q(s-1) / Q(s)²
    pub rhs: f64,
    pub residual: f64,
}

/// |∂²_L log Q + (1/L)∂_L log Q + 4 - 4 Q(s+1)Q(s-1)/Q(s)²| by 5-point differences.
pub fn toda_residual(l: f64, s: HalfInt, sigma: &SigmaProfile, h: f64, eps: f64) -> Result<TodaReport> {
    let st = q_stencil(l, s, sigma, h, eps)?;
    for g in &st {
        g.require_positive(10.0)?;
    }
    let lq: Vec<f64> = st.iter().map(|g| g.log_q).collect();
    let d1 = diff::five_point_first(lq[0], lq[1], lq[3], lq[4], h);
    let d2 = diff::five_point_second(lq[0], lq[1], lq[2], lq[3], lq[4], h);
    let up = fredholm::gap_probability(l, s.succ(), sigma, eps)?;
    // Q(s-1) may legitimately vanish (below the support of the process)
    let down = fredholm::gap_probability(l, s.pred(), sigma, eps)?;
    let q = st[2].q;
    let lhs = d2 + d1 / l + 4.0;
    let rhs = 4.0 * up.q * down.q.max(0.0) / (q * q);
    Ok(TodaReport {
        l,
        s,
        h,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallLReport {
    pub s: HalfInt,
    pub l_list: Vec<f64>,
    /// (log Q(L) - log Q⁰) / L² at each L.
    pub ratios: Vec<f64>,
    /// Constant term of the polynomial in L² through the ratios.
    pub coefficient: f64,
    pub expected: f64,
    pub deviation: f64,
    /// |ratio - expected| at each L; should fall off like L².
    pub pointwise: Vec<f64>,
}

/// Fit of (log Q(L,s) - log Q⁰(s)) / L² as L → 0 against
/// -(σ(-s) - σ(-s-1)) / (1 - σ(-s-1)).
pub fn small_l_check(s: HalfInt, sigma: &SigmaProfile, l_list: &[f64], eps: f64) -> Result<SmallLReport> {
    if l_list.is_empty() || l_list.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidInput("L list must be non-empty and positive".into()));
    }
    let q0 = fredholm::q_zero(s, sigma, eps)?;
    if q0.exact_zero || !(q0.value > 0.0) {
        return Err(Error::UnsupportedPoint(format!("Q0(s={s}) vanishes")));
    }
    let mut ratios = Vec::with_capacity(l_list.len());
    for &l in l_list {
        let q = fredholm::gap_probability(l, s, sigma, eps)?;
        q.require_positive(10.0)?;
        ratios.push((q.log_q - q0.value.ln()) / (l * l));
    }
    let n = l_list.len();
    let v = DMatrix::from_fn(n, n, |i, j| (l_list[i] * l_list[i]).powi(j as i32));
    let c = v
        .lu()
        .solve(&DVector::from_column_slice(&ratios))
        .ok_or_else(|| Error::InvalidInput("L list has repeated entries".into()))?;
    let neg = -s;
    let expected = -sigma.delta(neg.pred()) / sigma.complement(neg.pred());
    let pointwise = ratios.iter().map(|r| (r - expected).abs()).collect();
    Ok(SmallLReport {
        s,
        l_list: l_list.to_vec(),
        coefficient: c[0],
        expected,
        deviation: (c[0] - expected).abs(),
        ratios,
        pointwise,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrakPair {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub a_frak: f64,
    /// ∂_L log(Q(s)/Q(s-1)) by Richardson-extrapolated central differences.
    pub b_frak_fd: f64,
    /// -(2/L)(α(s) - α(s-1)) from two RH solves.
    pub b_frak_rh: f64,
    pub gap: f64,
}

/// 𝔞(L,s) = √(Q(s+1)Q(s-1)) / Q(s).
pub fn a_frak(l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<f64> {
    let q = fredholm::gap_probability(l, s, sigma, eps)?;
    q.require_positive(10.0)?;
    let up = fredholm::gap_probability(l, s.succ(), sigma, eps)?;
    let down = fredholm::gap_probability(l, s.pred(), sigma, eps)?;
    Ok((up.q * down.q.max(0.0)).sqrt() / q.q)
}

/// 𝔟(L,s) = -(2/L)(α(s) - α(s-1)).
pub fn b_frak_rh(l: f64, s: HalfInt, sigma: &SigmaProfile, eps: f64) -> Result<f64> {
    let a = drhp::solve_rhp(l, s, sigma, None, eps)?;
    let b = drhp::solve_rhp(l, s.pred(), sigma, None, eps)?;
    Ok(-2.0 / l * (a.alpha - b.alpha))
}

pub fn frak_ab(l: f64, s: HalfInt, sigma: &SigmaProfile, h: f64, eps: f64) -> Result<FrakPair> {
    let a = a_frak(l, s, sigma, eps)?;
    let w = Window::select(s, l + h, sigma, eps)?;
    let wd = Window::select(s.pred(), l + h, sigma, eps)?;
    let b_fd = diff::richardson_first(
        |x| {
            let top = fredholm::gap_probability_on(&w, x, eps)?;
            let bottom = fredholm::gap_probability_on(&wd, x, eps)?;
            bottom.require_positive(10.0)?;
            Ok::<f64, Error>(top.log_q - bottom.log_q)
        },
        l,
        h,
    )?;
    let b_rh = b_frak_rh(l, s, sigma, eps)?;
    Ok(FrakPair {
        l,
        s,
        a_frak: a,
        b_frak_fd: b_fd,
        b_frak_rh: b_rh,
        gap: (b_fd - b_rh).abs(),
    })
}
