//! Scaling map (x, t, ε) -> (L, s) and a finite-difference diagnostic for the
//! bilinear KdV identity satisfied by the continuum limit of log Q.

use serde::Serialize;

use crate::diff;
use crate::error::{Error, Result};
use crate::fredholm::{self, GapResult};
use crate::integrable;
use crate::kernels::{HalfInt, SigmaProfile};
use crate::par::{self, Execution};

/// Largest L the diagnostic will build windows for (window size grows like 4L).
pub const DEFAULT_L_CAP: f64 = 1000.0;

/// Step in L for the per-node Toda check.
const TODA_H: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub t: f64,
    pub epsilon: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    /// s_exact - s, in [-1/2, 1/2).
    pub rounding_shift: f64,
    /// The x that maps exactly onto s: x + ε t · rounding_shift.
    pub x_lattice: f64,
}

pub fn scale_point(x: f64, t: f64, epsilon: f64) -> Result<ScalingPoint> {
    scale_point_capped(x, t, epsilon, DEFAULT_L_CAP)
}

pub fn scale_point_capped(x: f64, t: f64, epsilon: f64, l_cap: f64) -> Result<ScalingPoint> {
    if !(t > 0.0 && epsilon > 0.0 && x.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!(
            "need t > 0, ε > 0 and finite x (got x={x}, t={t}, ε={epsilon})"
        )));
    }
    let l = 1.0 / (epsilon.powi(3) * t * t);
    if !(l <= l_cap) {
        return Err(Error::ResourceLimit(format!("L = {l} exceeds the cap {l_cap}")));
    }
    let exact = 2.0 * l - x / (epsilon * t);
    let base = exact.floor();
    if !(base.abs() < 1e15) {
        return Err(Error::ParameterOutOfRange(format!(
            "s = {exact} is off the representable lattice"
        )));
    }
    let s = HalfInt::above(base as i64);
    let shift = exact - s.value();
    Ok(ScalingPoint {
        x,
        t,
        epsilon,
        l,
        s,
        rounding_shift: shift,
        x_lattice: x + epsilon * t * shift,
    })
}

/// Filling σ_ε for each ε.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaFamily {
    /// Fermi factor with u = exp(-ε t^{-2/3}), t taken at the stencil centre.
    Fermi,
    /// The same profile for every ε.
    Fixed(SigmaProfile),
}

impl SigmaFamily {
    pub fn at(&self, epsilon: f64, t: f64) -> Result<SigmaProfile> {
        match self {
            SigmaFamily::Fermi => SigmaProfile::fermi((-epsilon * t.powf(-2.0 / 3.0)).exp()),
            SigmaFamily::Fixed(s) => Ok(s.clone()),
        }
    }

    pub fn id(&self) -> String {
        match self {
            SigmaFamily::Fermi => "fermi-scaled".into(),
            SigmaFamily::Fixed(s) => s.id(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KdvReport {
    pub point: ScalingPoint,
    pub sigma_id: String,
    /// Q at the stencil centre.
    pub q: f64,
    pub f_tx: f64,
    pub f_xx: f64,
    pub f_xxxx: f64,
    /// ∂_t∂_x f + (x/t)∂²_x f + (∂²_x f)² + (1/6)∂⁴_x f with f = log F.
    pub residual: f64,
    /// Propagated determinant error in the residual.
    pub noise: f64,
    /// False when the noise is not well below the residual itself.
    pub resolved: bool,
    /// Largest discrete Toda residual over the stencil nodes.
    pub toda_max: f64,
}

/// Node (t_k, x_lattice + j ε t_k) with s exactly s_c + k - j.
fn t_for_s(x: f64, epsilon: f64, s: f64) -> Result<f64> {
    // (2/ε³) y² - (x/ε) y - s = 0 with y = 1/t
    let a = 2.0 / epsilon.powi(3);
    let b = -x / epsilon;
    let disc = b * b + 4.0 * a * s;
    if !(disc >= 0.0) {
        return Err(Error::UnsupportedPoint(format!("no t > 0 maps x={x} onto s={s}")));
    }
    let y = (-b + disc.sqrt()) / (2.0 * a);
    if !(y > 0.0) {
        return Err(Error::UnsupportedPoint(format!("no t > 0 maps x={x} onto s={s}")));
    }
    Ok(1.0 / y)
}

/// Residual of the bilinear KdV identity for log Q_{σ_ε}(L(x,t), s(x,t)),
/// one report per ε. x-steps are one lattice spacing ε t; t-nodes are chosen
/// so that every node lands exactly on the lattice.
pub fn kdv_residual_diagnostic(
    exec: Execution,
    x: f64,
    t: f64,
    epsilons: &[f64],
    family: &SigmaFamily,
    eps: f64,
) -> Result<Vec<KdvReport>> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(
            "ε list must be non-empty and strictly decreasing".into(),
        ));
    }
    epsilons.iter().map(|&e| kdv_at(exec, x, t, e, family, eps)).collect()
}

fn kdv_at(exec: Execution, x: f64, t: f64, epsilon: f64, family: &SigmaFamily, eps: f64) -> Result<KdvReport> {
    let p = scale_point(x, t, epsilon)?;
    let sigma = family.at(epsilon, t)?;
    let xc = p.x_lattice;
    let mut ts = Vec::with_capacity(5);
    for k in -2..=2i64 {
        let tk = if k == 0 {
            t
        } else {
            t_for_s(xc, epsilon, p.s.shift(k).value())?
        };
        let lk = 1.0 / (epsilon.powi(3) * tk * tk);
        if !(lk <= DEFAULT_L_CAP) {
            return Err(Error::ResourceLimit(format!(
                "stencil L = {lk} exceeds the cap {DEFAULT_L_CAP}"
            )));
        }
        ts.push(tk);
    }
    let nodes: Vec<(f64, HalfInt)> = (0..5)
        .flat_map(|k| {
            let lk = 1.0 / (epsilon.powi(3) * ts[k] * ts[k]);
            (0..5).map(move |j| (lk, p.s.shift(k as i64 - j as i64)))
        })
        .collect();
    let grid: Vec<GapResult> = par::try_map_collect(exec, &nodes, |&(l, s)| {
        let g = fredholm::gap_probability(l, s, &sigma, eps)?;
        g.require_positive(10.0)?;
        Ok::<_, Error>(g)
    })?;
    // row k, column j: t_k and x offset j - 2 lattice steps
    let f = |k: usize, j: usize| grid[5 * k + j].log_q;
    let fx: Vec<f64> = (0..5)
        .map(|k| diff::five_point_first(f(k, 0), f(k, 1), f(k, 3), f(k, 4), epsilon * ts[k]))
        .collect();
    let h0 = epsilon * t;
    let f_xx = diff::five_point_second(f(2, 0), f(2, 1), f(2, 2), f(2, 3), f(2, 4), h0);
    let f_xxxx = diff::five_point_fourth(f(2, 0), f(2, 1), f(2, 2), f(2, 3), f(2, 4), h0);
    let w = diff::fd_weights(t, &ts, 1);
    let f_tx: f64 = w.iter().zip(&fx).map(|(a, b)| a * b).sum();
    let residual = f_tx + xc / t * f_xx + f_xx * f_xx + f_xxxx / 6.0;

    let delta = grid.iter().map(|g| g.floor / g.q).fold(0.0f64, f64::max);
    let w_abs: f64 = w.iter().map(|a| a.abs()).sum();
    let noise = delta
        * (16.0 / (6.0 * h0.powi(4))
            + (xc.abs() / t + 2.0 * f_xx.abs()) * 64.0 / (12.0 * h0 * h0)
            + w_abs * 18.0 / (12.0 * epsilon * ts.iter().cloned().fold(f64::INFINITY, f64::min)));

    let toda = par::try_map_collect(exec, &nodes, |&(l, s)| {
        integrable::toda_residual(l, s, &sigma, TODA_H, eps).map(|r| r.residual)
    })?;
    Ok(KdvReport {
        point: p,
        sigma_id: sigma.id(),
        q: grid[12].q,
        f_tx,
        f_xx,
        f_xxxx,
        residual,
        noise,
        resolved: noise < 0.1 * residual.abs(),
        toda_max: toda.into_iter().fold(0.0, f64::max),
    })
}
