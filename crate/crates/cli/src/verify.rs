//! The `verify` checks. Every parameter point becomes one report; errors at a
//! point fail that report instead of aborting the run.

use serde::Serialize;
use serde_json::{json, Value};

use tbl_core::continuum::{kdv_residual_diagnostic, SigmaFamily};
use tbl_core::drhp::verify_variational;
use tbl_core::fredholm::{gap_probability, ratio_identity_residual, toeplitz_gap};
use tbl_core::integrable::{
    dpii_sequence, phi_large_s_ratio, small_l_check, toda_residual, verify_idpii, volterra_residual,
};
use tbl_core::par::{self, Execution};
use tbl_core::plancherel::compare_with_fredholm;
use tbl_core::specfun::bessel_i;
use tbl_core::{Error, HalfInt, Result, SigmaProfile};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub params: Value,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub resource_limited: bool,
}

impl CheckReport {
    fn new(check: &str, params: Value, residual: f64, tolerance: f64) -> Self {
        CheckReport {
            check: check.into(),
            params,
            residual,
            tolerance,
            pass: residual <= tolerance,
            error: None,
            resource_limited: false,
        }
    }

    fn failed(check: &str, params: Value, tolerance: f64, e: &Error) -> Self {
        CheckReport {
            check: check.into(),
            params,
            residual: f64::NAN,
            tolerance,
            pass: false,
            error: Some(e.to_string()),
            resource_limited: matches!(e, Error::ResourceLimit(_)),
        }
    }
}

/// Flat row for CSV output.
#[derive(Debug, Serialize)]
pub struct CheckRow {
    check: String,
    params: String,
    residual: f64,
    tolerance: f64,
    pass: bool,
    error: String,
}

impl From<&CheckReport> for CheckRow {
    fn from(r: &CheckReport) -> Self {
        CheckRow {
            check: r.check.clone(),
            params: r.params.to_string(),
            residual: r.residual,
            tolerance: r.tolerance,
            pass: r.pass,
            error: r.error.clone().unwrap_or_default(),
        }
    }
}

/// Parameters shared by all checks, already defaulted per check by the caller.
#[derive(Debug, Clone)]
pub struct Plan {
    pub sigma: SigmaProfile,
    pub ls: Vec<f64>,
    pub ss: Vec<HalfInt>,
    pub s_max: HalfInt,
    pub h: f64,
    pub tol: Option<f64>,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
}

fn grid(p: &Plan) -> Vec<(f64, HalfInt)> {
    p.ls.iter().flat_map(|&l| p.ss.iter().map(move |&s| (l, s))).collect()
}

fn base(p: &Plan, l: f64, s: HalfInt) -> Value {
    json!({"sigma": p.sigma.id(), "L": l, "s": s})
}

/// Runs `f` at every point in parallel and keeps the input order.
fn per_point<T, F>(items: &[T], f: F) -> Vec<CheckReport>
where
    T: Sync,
    F: Fn(&T) -> Vec<CheckReport> + Sync + Send,
{
    par::map_collect(Execution::default(), items, f)
        .into_iter()
        .flatten()
        .collect()
}

fn single(check: &str, params: Value, tol: f64, r: Result<f64>) -> Vec<CheckReport> {
    vec![match r {
        Ok(x) => CheckReport::new(check, params, x, tol),
        Err(e) => CheckReport::failed(check, params, tol, &e),
    }]
}

pub fn anchors(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-10);
    per_point(&p.ls, |&l| {
        let r = (|| {
            let e = (-l * l).exp();
            let a = gap_probability(l, HalfInt::below(0), &SigmaProfile::Indicator, p.eps)?;
            let b = gap_probability(l, HalfInt::above(0), &SigmaProfile::Indicator, p.eps)?;
            Ok((a.q - e).abs().max((b.q - e * bessel_i(0, 2.0 * l)?).abs()))
        })();
        single("anchors", json!({"sigma": "indicator", "L": l}), tol, r)
    })
}

pub fn toeplitz(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-11);
    per_point(&grid(p), |&(l, s)| {
        let r = (|| Ok((gap_probability(l, s, &SigmaProfile::Indicator, p.eps)?.q - toeplitz_gap(l, s)?).abs()))();
        single("toeplitz", json!({"sigma": "indicator", "L": l, "s": s}), tol, r)
    })
}

pub fn toda(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-6);
    per_point(&grid(p), |&(l, s)| {
        let mut params = base(p, l, s);
        params["h"] = json!(p.h);
        single(
            "toda",
            params,
            tol,
            toda_residual(l, s, &p.sigma, p.h, p.eps).map(|r| r.residual),
        )
    })
}

pub fn variational(p: &Plan) -> Vec<CheckReport> {
    per_point(&grid(p), |&(l, s)| {
        let mut params = base(p, l, s);
        params["h"] = json!(p.h);
        let names = ["variational-beta", "variational-alpha", "variational-det"];
        let tols = p.tol.map_or([1e-9, 1e-6, 1e-9], |t| [t; 3]);
        match verify_variational(l, s, &p.sigma, None, p.h, p.eps) {
            Ok(r) => [r.res_beta, r.res_alpha, r.res_det_relation]
                .iter()
                .zip(names.iter().zip(tols))
                .map(|(&x, (n, t))| CheckReport::new(n, params.clone(), x, t))
                .collect(),
            Err(e) => names
                .iter()
                .zip(tols)
                .map(|(n, t)| CheckReport::failed(n, params.clone(), t, &e))
                .collect(),
        }
    })
}

pub fn ratio(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-9);
    per_point(&grid(p), |&(l, s)| {
        single(
            "ratio",
            base(p, l, s),
            tol,
            ratio_identity_residual(l, s, &p.sigma, p.eps),
        )
    })
}

pub fn idpii(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-7);
    let l_cut = HalfInt::above(20);
    let mut out = per_point(&grid(p), |&(l, s)| {
        let mut params = base(p, l, s);
        params["l_cut"] = json!(l_cut);
        let names = ["idpii-a-sum", "idpii-b-sum", "idpii-recursion"];
        match verify_idpii(l, s, &p.sigma, l_cut, None, p.eps) {
            Ok(r) => [r.res_a_sum, r.res_b_sum, r.res_recursion]
                .iter()
                .zip(names)
                .map(|(&x, n)| CheckReport::new(n, params.clone(), x, tol))
                .collect(),
            Err(e) => names
                .iter()
                .map(|n| CheckReport::failed(n, params.clone(), tol, &e))
                .collect(),
        }
    });
    out.extend(per_point(&p.ls, |&l| {
        let s = HalfInt::above(2 * (2.0 * l).ceil() as i64 + 10);
        let range = (HalfInt::below(-5), HalfInt::above(5));
        let r = phi_large_s_ratio(l, &p.sigma, s, range, p.eps)
            .map(|v| v.iter().map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max));
        single("phi-large-s", base(p, l, s), 1e-3, r)
    }));
    out
}

pub fn dpii(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-8);
    per_point(&p.ls, |&l| {
        let mut params = json!({"sigma": "indicator", "L": l, "s_max": p.s_max});
        match dpii_sequence(l, p.s_max, p.eps) {
            Ok(seq) => {
                params["horizon"] = json!(seq.horizon());
                params["blow_up"] = json!(seq.blow_up);
                params["cross_check"] = json!(seq.cross_check);
                let worst = seq.cross_check.iter().cloned().fold(0.0, f64::max);
                vec![CheckReport::new("dpii", params, worst, tol)]
            }
            Err(e) => vec![CheckReport::failed("dpii", params, tol, &e)],
        }
    })
}

pub fn volterra(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-6);
    per_point(&grid(p), |&(l, s)| {
        let mut params = base(p, l, s);
        params["h"] = json!(p.h);
        let r = volterra_residual(l, s, &p.sigma, p.h, p.eps).map(|r| {
            params["a_relation"] = json!(r.res_a_relation);
            params["b_relation"] = json!(r.res_b_relation);
            [Some(r.residual), r.res_a_relation, r.res_b_relation]
                .iter()
                .flatten()
                .cloned()
                .fold(0.0, f64::max)
        });
        single("volterra", params, tol, r)
    })
}

pub fn small_l(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(1e-4);
    per_point(&p.ss, |&s| {
        let mut params = json!({"sigma": p.sigma.id(), "s": s, "L": p.ls});
        let r = small_l_check(s, &p.sigma, &p.ls, p.eps).map(|r| {
            params["coefficient"] = json!(r.coefficient);
            params["expected"] = json!(r.expected);
            r.deviation
        });
        single("small-l", params, tol, r)
    })
}

pub fn monte_carlo(p: &Plan) -> Vec<CheckReport> {
    let tol = p.tol.unwrap_or(3.0);
    // the sampler already spreads over workers; run L values one after another
    p.ls.iter()
        .enumerate()
        .flat_map(|(k, &l)| {
            let seed = p.seed.wrapping_add(k as u64);
            match compare_with_fredholm(&p.sigma, l, &p.ss, p.samples, seed, p.eps) {
                Ok(rows) => rows
                    .iter()
                    .map(|c| {
                        let params = json!({
                            "sigma": c.sigma_id, "L": l, "s": c.s, "samples": p.samples, "seed": seed,
                            "mc_mean": c.mc_mean, "mc_stderr": c.mc_stderr, "fredholm_q": c.fredholm_q,
                        });
                        CheckReport::new("mc", params, c.z_score.abs(), tol)
                    })
                    .collect::<Vec<_>>(),
                Err(e) => vec![CheckReport::failed(
                    "mc",
                    json!({"sigma": p.sigma.id(), "L": l, "seed": seed}),
                    tol,
                    &e,
                )],
            }
        })
        .collect()
}

/// Trend check: the residual ratio between consecutive ε must stay below 1.
pub fn kdv(p: &Plan, family: &SigmaFamily, x: f64, t: f64, epsilons: &[f64]) -> Vec<CheckReport> {
    let params = json!({"family": family.id(), "x": x, "t": t, "epsilon": epsilons});
    match kdv_residual_diagnostic(Execution::default(), x, t, epsilons, family, p.eps) {
        Ok(r) => {
            let res: Vec<f64> = r.iter().map(|k| k.residual.abs()).collect();
            let worst_ratio = res.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let mut tp = params.clone();
            tp["residuals"] = json!(res);
            tp["resolved"] = json!(r.iter().all(|k| k.resolved));
            let mut trend = CheckReport::new("kdv-trend", tp, worst_ratio, 1.0);
            trend.pass = trend.pass && worst_ratio < 1.0 && r.iter().all(|k| k.resolved || k.residual == 0.0);
            if res.iter().all(|&x| x == 0.0) {
                trend.residual = 0.0;
                trend.pass = true;
            }
            let toda = r.iter().map(|k| k.toda_max).fold(0.0, f64::max);
            vec![
                trend,
                CheckReport::new("kdv-node-toda", params, toda, p.tol.unwrap_or(1e-6)),
            ]
        }
        Err(e) => vec![CheckReport::failed("kdv-trend", params, 1.0, &e)],
    }
}
