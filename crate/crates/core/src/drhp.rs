//! The discrete Riemann–Hilbert problem for Y(z) in its linear-system form.
//!
//! With f̂(a) = σ_a (J_{a-1/2}, L J_{a+1/2}) and ĝ(a) = (L J_{a+1/2}, -J_{a-1/2}) / (1 - M(a,a)),
//! the kernel ĝ(b)ᵀ f̂(a) / (a - b) equals σ_a K^Be(a,b) / (1 - M(b,b)), so D acts on
//! 2-vector fields as one scalar matrix applied to each component.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::diff;
use crate::error::{Error, Result};
use crate::fredholm;
use crate::kernels::{DiscreteBessel, HalfInt, SigmaProfile, Window};

/// Condition number of (1 - D) beyond which a solve is reported as degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// Solved RH data on one window.
#[derive(Debug, Clone, Serialize)]
pub struct RHSolution {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub sigma_id: String,
    pub eps: f64,
    pub window: (HalfInt, HalfInt),
    /// The certified window was cut by the |a| <= N restriction.
    pub clipped: bool,
    pub points: Vec<HalfInt>,
    pub fhat: Vec<[f64; 2]>,
    pub ghat: Vec<[f64; 2]>,
    pub r: Vec<[f64; 2]>,
    /// 1 - M(a,a) on the window.
    pub one_minus_m: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// (Σ R_b)_{22}; traceless means alpha + delta = 0.
    pub delta: f64,
    pub solver_residual: f64,
    pub condition: f64,
}

/// Window, kernel block and diagonal data shared by `build_d` and `solve_rhp`.
struct Setup {
    window: Window,
    clipped: bool,
    points: Vec<HalfInt>,
    sigma: Vec<f64>,
    one_minus_m: Vec<f64>,
    bessel: DiscreteBessel,
    k: DMatrix<f64>,
}

fn setup(l: f64, s: HalfInt, sigma: &SigmaProfile, n: Option<usize>, eps: f64) -> Result<Setup> {
    let mut window = Window::select(s, l, sigma, eps)?;
    let mut clipped = false;
    if let Some(n) = n {
        let (lo, hi) = (HalfInt::below(-(n as i64)), HalfInt::above(n as i64));
        let new_lo = window.lo.max(lo);
        let new_hi = window.hi.min(hi);
        if new_lo != window.lo || new_hi != window.hi {
            clipped = true;
            let skip = new_lo.minus(window.lo).max(0) as usize;
            let keep = if new_hi < new_lo {
                0
            } else {
                new_hi.minus(new_lo) as usize + 1
            };
            window.sigma = window.sigma.iter().skip(skip).take(keep).copied().collect();
            window.lo = new_lo;
            window.hi = if keep == 0 { new_lo.pred() } else { new_hi };
        }
    }
    let points = window.points();
    let need = points
        .iter()
        .map(|a| a.ceil().unsigned_abs() as usize + 1)
        .max()
        .unwrap_or(0);
    let bessel = DiscreteBessel::new(l, need, eps)?;
    let k = bessel.block(&points)?;
    let shift = s.ceil();
    let one_minus_m = points
        .iter()
        .zip(&window.sigma)
        .map(|(&a, &sg)| sigma.complement(a.shift(-shift)) + sg * bessel.diag_complement(a))
        .collect::<Vec<_>>();
    if let Some((i, v)) = one_minus_m.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "1 - M(a,a) = {v} at a = {} is not positive",
            points[i]
        )));
    }
    let sigma_w = window.sigma.clone();
    Ok(Setup {
        window,
        clipped,
        points,
        sigma: sigma_w,
        one_minus_m,
        bessel,
        k,
    })
}

fn scalar_d(st: &Setup) -> DMatrix<f64> {
    let n = st.points.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            st.sigma[i] * st.k[(i, j)] / st.one_minus_m[j]
        }
    })
}

/// The scalar matrix of D on the window; D on 2-vector fields is this ⊗ I₂.
pub fn build_d_scalar(l: f64, s: HalfInt, sigma: &SigmaProfile, n: Option<usize>, eps: f64) -> Result<DMatrix<f64>> {
    Ok(scalar_d(&setup(l, s, sigma, n, eps)?))
}

/// D as a (2n)×(2n) matrix acting on fields stacked as (r(a₀)₁, r(a₀)₂, r(a₁)₁, ...).
pub fn build_d(l: f64, s: HalfInt, sigma: &SigmaProfile, n: Option<usize>, eps: f64) -> Result<DMatrix<f64>> {
    let d = build_d_scalar(l, s, sigma, n, eps)?;
    let m = d.nrows();
    Ok(DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        if i % 2 == j % 2 {
            d[(i / 2, j / 2)]
        } else {
            0.0
        }
    }))
}

/// Spectral norm of D.
pub fn operator_norm(d: &DMatrix<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    d.clone().singular_values().max()
}

/// Hilbert–Schmidt (Frobenius) norm of D.
pub fn hs_norm(d: &DMatrix<f64>) -> f64 {
    d.norm()
}

pub fn solve_rhp(l: f64, s: HalfInt, sigma: &SigmaProfile, n: Option<usize>, eps: f64) -> Result<RHSolution> {
    let st = setup(l, s, sigma, n, eps)?;
    let m = st.points.len();
    let b = &st.bessel;
    let fhat: Vec<[f64; 2]> = st
        .points
        .iter()
        .zip(&st.sigma)
        .map(|(a, &sg)| [sg * b.j(a.floor()), sg * l * b.j(a.ceil())])
        .collect();
    let ghat: Vec<[f64; 2]> = st
        .points
        .iter()
        .zip(&st.one_minus_m)
        .map(|(a, &om)| [l * b.j(a.ceil()) / om, -b.j(a.floor()) / om])
        .collect();

    let mut r = vec![[0.0; 2]; m];
    let mut residual = 0.0f64;
    let mut condition = 1.0;
    if m > 0 {
        let a = DMatrix::identity(m, m) - scalar_d(&st);
        let sv = a.clone().singular_values();
        condition = sv.max() / sv.min();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateDeterminant {
                l,
                s: s.to_string(),
                value: 1.0 / condition,
                floor: 1.0 / MAX_CONDITION,
            });
        }
        let rhs = DMatrix::from_fn(m, 2, |i, c| fhat[i][c]);
        let lu = a.clone().lu();
        let x = lu.solve(&rhs).ok_or_else(|| Error::DegenerateDeterminant {
            l,
            s: s.to_string(),
            value: 0.0,
            floor: 1.0 / MAX_CONDITION,
        })?;
        residual = (&a * &x - &rhs).abs().max();
        for i in 0..m {
            r[i] = [x[(i, 0)], x[(i, 1)]];
        }
    }
    let sum = |p: usize, q: usize| -> f64 { r.iter().zip(&ghat).map(|(ri, gi)| ri[p] * gi[q]).sum() };
    Ok(RHSolution {
        l,
        s,
        sigma_id: sigma.id(),
        eps,
        window: (st.window.lo, st.window.hi),
        clipped: st.clipped,
        alpha: sum(0, 0),
        beta: sum(0, 1),
        gamma: sum(1, 0),
        delta: sum(1, 1),
        points: st.points,
        fhat,
        ghat,
        r,
        one_minus_m: st.one_minus_m,
        solver_residual: residual,
        condition,
    })
}

pub type Mat2c = [[Complex<f64>; 2]; 2];

pub fn det2(m: &Mat2c) -> Complex<f64> {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

impl RHSolution {
    /// Residue R_b = r(b) ĝ(b)ᵀ at the i-th window point.
    pub fn residue(&self, i: usize) -> [[f64; 2]; 2] {
        let (r, g) = (self.r[i], self.ghat[i]);
        [[r[0] * g[0], r[0] * g[1]], [r[1] * g[0], r[1] * g[1]]]
    }

    pub fn index_of(&self, a: HalfInt) -> Option<usize> {
        self.points.iter().position(|&p| p == a)
    }

    /// Y(z) = I + Σ_b R_b / (z - b).
    pub fn eval_y(&self, z: Complex<f64>) -> Result<Mat2c> {
        if z.im == 0.0 && (2.0 * z.re).fract() == 0.0 && ((2.0 * z.re) as i64).rem_euclid(2) == 1 {
            let a = HalfInt::from_twice((2.0 * z.re) as i64)?;
            if a >= self.window.0 && a <= self.window.1 {
                return Err(Error::PoleEvaluation(a.to_string()));
            }
        }
        Ok(self.accumulate(z, None))
    }

    /// Y with the pole at the i-th point removed: I + Σ_{b≠a} R_b / (a - b).
    pub fn y_regular(&self, i: usize) -> Mat2c {
        self.accumulate(Complex::new(self.points[i].value(), 0.0), Some(i))
    }

    fn accumulate(&self, z: Complex<f64>, skip: Option<usize>) -> Mat2c {
        let one = Complex::new(1.0, 0.0);
        let zero = Complex::new(0.0, 0.0);
        let mut y = [[one, zero], [zero, one]];
        for (i, b) in self.points.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let w = one / (z - b.value());
            let res = self.residue(i);
            for p in 0..2 {
                for q in 0..2 {
                    y[p][q] += w * res[p][q];
                }
            }
        }
        y
    }

    /// max over window points of |R_a - Y_reg(a) f̂(a) ĝ(a)ᵀ|, the residue condition.
    pub fn residue_condition_residual(&self, indices: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for &i in indices {
            let y = self.y_regular(i);
            let (f, g) = (self.fhat[i], self.ghat[i]);
            let yf = [
                y[0][0].re * f[0] + y[0][1].re * f[1],
                y[1][0].re * f[0] + y[1][1].re * f[1],
            ];
            let res = self.residue(i);
            for p in 0..2 {
                for q in 0..2 {
                    worst = worst.max((res[p][q] - yf[p] * g[q]).abs());
                }
            }
        }
        worst
    }

    /// Y(w) Φ₁(w) with Φ₁(w) = (J_{w-1/2}, L J_{w+1/2}); every residue of
    /// this product cancels, so lattice points w are allowed.
    pub fn y_phi1(&self, w: HalfInt) -> Result<[f64; 2]> {
        let need = self
            .points
            .iter()
            .chain(std::iter::once(&w))
            .map(|a| a.ceil().unsigned_abs() as usize + 1)
            .max()
            .unwrap_or(0);
        let b = DiscreteBessel::new(self.l, need, self.eps)?;
        Ok(self.y_phi1_with(&b, w))
    }

    pub(crate) fn y_phi1_with(&self, b: &DiscreteBessel, w: HalfInt) -> [f64; 2] {
        let mut out = [b.j(w.floor()), self.l * b.j(w.ceil())];
        for (i, &p) in self.points.iter().enumerate() {
            let k = if p == w { b.diag(w) } else { b.series(w, p) };
            let c = k / self.one_minus_m[i];
            out[0] += self.r[i][0] * c;
            out[1] += self.r[i][1] * c;
        }
        out
    }

    /// Solve by Neumann iteration r = Σ D^k f̂; `None` if it fails to
    /// converge in `max_iter` steps.
    pub fn neumann_check(&self, sigma: &SigmaProfile, max_iter: usize) -> Result<Option<(usize, f64)>> {
        let st = setup(self.l, self.s, sigma, None, self.eps)?;
        if st.points != self.points {
            return Err(Error::InvalidInput("solution was built on a clipped window".into()));
        }
        let d = scalar_d(&st);
        let m = self.points.len();
        let f = DMatrix::from_fn(m, 2, |i, c| self.fhat[i][c]);
        let mut term = f.clone();
        let mut acc = f;
        for it in 1..=max_iter {
            term = &d * term;
            acc += &term;
            if term.abs().max() < 1e-16 {
                let direct = DMatrix::from_fn(m, 2, |i, c| self.r[i][c]);
                return Ok(Some((it, (acc - direct).abs().max())));
            }
        }
        Ok(None)
    }
}

/// Residuals of the variational formulas and of the β–γ relation at (L,s).
#[derive(Debug, Clone, Serialize)]
pub struct VariationalReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub res_beta: f64,
    pub res_alpha: f64,
    pub res_det_relation: f64,
}

/// |Q(s-1)/Q(s) - 1 - β|, |∂_L log Q + 2α/L| and |(1+β(s+1))(L²+γ(s)) - L²|.
pub fn verify_variational(
    l: f64,
    s: HalfInt,
    sigma: &SigmaProfile,
    n: Option<usize>,
    h: f64,
    eps: f64,
) -> Result<VariationalReport> {
    let sol = solve_rhp(l, s, sigma, n, eps)?;
    let next = solve_rhp(l, s.succ(), sigma, n, eps)?;
    let q = fredholm::gap_probability(l, s, sigma, eps)?;
    q.require_positive(10.0)?;
    let q_prev = fredholm::gap_probability(l, s.pred(), sigma, eps)?;
    let res_beta = (q_prev.q / q.q - 1.0 - sol.beta).abs();

    let w = Window::select(s, l + h, sigma, eps)?;
    let dlog = diff::richardson_first(|x| fredholm::gap_probability_on(&w, x, eps).map(|g| g.log_q), l, h)?;
    let res_alpha = (dlog + 2.0 * sol.alpha / l).abs();
    let res_det_relation = ((1.0 + next.beta) * (l * l + sol.gamma) - l * l).abs();
    Ok(VariationalReport {
        l,
        s,
        res_beta,
        res_alpha,
        res_det_relation,
    })
}
