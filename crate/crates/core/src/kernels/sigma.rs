use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HalfInt;
use crate::error::{Error, Result};

/// Filling function σ: Z' → [0,1].
///
/// Tables hold their last value to the right of the largest key and follow
/// `left_tail` to the left of the smallest key. An empty table is σ ≡ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SigmaProfile {
    /// σ = 1 on positive points, 0 on negative ones.
    Indicator,
    /// σ(l) = 1 / (1 + u^l), u ∈ [0,1).
    Fermi { u: f64 },
    Table {
        values: BTreeMap<HalfInt, f64>,
        left_tail: LeftTail,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LeftTail {
    Zero,
    /// σ(k0 - m) = σ(k0) ratio^m for the smallest key k0.
    Geometric {
        ratio: f64,
    },
}

impl SigmaProfile {
    pub fn fermi(u: f64) -> Result<Self> {
        let p = SigmaProfile::Fermi { u };
        p.validate()?;
        Ok(p)
    }

    /// σ ≡ 0.
    pub fn zero() -> Self {
        SigmaProfile::Table {
            values: BTreeMap::new(),
            left_tail: LeftTail::Zero,
        }
    }

    pub fn table(values: BTreeMap<HalfInt, f64>, left_tail: LeftTail) -> Result<Self> {
        let p = SigmaProfile::Table { values, left_tail };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: SigmaProfile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("sigma JSON: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    /// Short CLI form: `indicator`, `zero`, `fermi:<u>`.
    pub fn from_spec(text: &str) -> Result<Self> {
        let t = text.trim();
        match t {
            "indicator" => Ok(SigmaProfile::Indicator),
            "zero" => Ok(SigmaProfile::zero()),
            _ => {
                if let Some(u) = t.strip_prefix("fermi:") {
                    let u: f64 = u
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad fermi parameter in {t:?}")))?;
                    SigmaProfile::fermi(u)
                } else {
                    Err(Error::InvalidInput(format!("unknown sigma profile {t:?}")))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaProfile::Indicator => Ok(()),
            SigmaProfile::Fermi { u } => {
                if (0.0..1.0).contains(u) {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("fermi u must lie in [0,1), got {u}")))
                }
            }
            SigmaProfile::Table { values, left_tail } => {
                if let Some((k, v)) = values.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidInput(format!("sigma({k}) = {v} outside [0,1]")));
                }
                if let LeftTail::Geometric { ratio } = left_tail {
                    if !(*ratio > 0.0 && *ratio < 1.0) {
                        return Err(Error::InvalidInput(format!(
                            "geometric tail ratio must lie in (0,1), got {ratio}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Stable identifier used in reports and cache keys.
    pub fn id(&self) -> String {
        match self {
            SigmaProfile::Indicator => "indicator".into(),
            SigmaProfile::Fermi { u } => format!("fermi:{u}"),
            SigmaProfile::Table { .. } if self.is_zero() => "zero".into(),
            SigmaProfile::Table { .. } => {
                let json = serde_json::to_string(self).unwrap_or_default();
                format!("table:{:016x}", fnv1a(json.as_bytes()))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SigmaProfile::Table { values, .. } => values.values().all(|&v| v == 0.0),
            _ => false,
        }
    }

    pub fn eval(&self, l: HalfInt) -> f64 {
        match self {
            SigmaProfile::Indicator => indicator(l),
            SigmaProfile::Fermi { u } => fermi(*u, l),
            SigmaProfile::Table { values, left_tail } => {
                let Some((&k0, &v0)) = values.iter().next() else {
                    return 0.0;
                };
                if l < k0 {
                    return match left_tail {
                        LeftTail::Zero => 0.0,
                        LeftTail::Geometric { ratio } => v0 * ratio.powi(k0.minus(l) as i32),
                    };
                }
                values.range(..=l).next_back().map(|(_, &v)| v).unwrap_or(0.0)
            }
        }
    }

    /// 1 - σ(l), evaluated without cancellation where the profile allows.
    pub fn complement(&self, l: HalfInt) -> f64 {
        match self {
            SigmaProfile::Fermi { u } if *u > 0.0 => fermi(*u, -l),
            _ => 1.0 - self.eval(l),
        }
    }

    /// σ(l+1) - σ(l).
    pub fn delta(&self, l: HalfInt) -> f64 {
        self.eval(l.succ()) - self.eval(l)
    }

    /// Certified upper bound on Σ_{l <= cut} σ(l).
    pub fn tail_bound(&self, cut: HalfInt) -> f64 {
        match self {
            SigmaProfile::Indicator => indicator_tail(cut),
            SigmaProfile::Fermi { u } if *u == 0.0 => indicator_tail(cut),
            SigmaProfile::Fermi { u } => {
                if cut.twice() < 0 {
                    u.powf(-cut.value()) / (1.0 - u)
                } else {
                    u.sqrt() / (1.0 - u) + cut.ceil() as f64
                }
            }
            SigmaProfile::Table { values, left_tail } => {
                let Some((&k0, &v0)) = values.iter().next() else {
                    return 0.0;
                };
                // each key's value holds up to the next key (or up to cut)
                let mut sum = 0.0;
                let mut prev: Option<(HalfInt, f64)> = None;
                for (&k, &v) in values.range(..=cut) {
                    if let Some((pk, pv)) = prev {
                        sum += pv * k.minus(pk) as f64;
                    }
                    prev = Some((k, v));
                }
                if let Some((pk, pv)) = prev {
                    sum += pv * (cut.minus(pk) + 1) as f64;
                }
                if let LeftTail::Geometric { ratio } = left_tail {
                    let m = if cut < k0 { k0.minus(cut) } else { 1 };
                    sum += v0 * ratio.powi(m as i32) / (1.0 - ratio);
                }
                sum
            }
        }
    }

    /// Smallest point l such that Σ_{l' < l} σ(l') <= tol, or `None` when σ ≡ 0.
    pub fn first_relevant(&self, tol: f64) -> Option<HalfInt> {
        match self {
            SigmaProfile::Indicator => Some(HalfInt::above(0)),
            SigmaProfile::Fermi { u } if *u == 0.0 => Some(HalfInt::above(0)),
            SigmaProfile::Fermi { u } => {
                // u^T / (1-u) <= tol for T = -cut
                let t = ((tol * (1.0 - u)).ln() / u.ln()).max(0.5);
                let cut = -HalfInt::above((t - 0.5).ceil() as i64);
                Some(cut.succ())
            }
            SigmaProfile::Table { values, left_tail } => {
                let first_pos = values.iter().find(|(_, &v)| v > 0.0).map(|(&k, _)| k)?;
                let (&k0, &v0) = values.iter().next().expect("non-empty");
                match left_tail {
                    LeftTail::Geometric { ratio } if v0 > 0.0 => {
                        let m = ((tol * (1.0 - ratio) / v0).ln() / ratio.ln()).ceil().max(1.0);
                        Some(k0.shift(1 - m as i64))
                    }
                    _ => Some(first_pos),
                }
            }
        }
    }
}

fn indicator(l: HalfInt) -> f64 {
    if l.twice() > 0 {
        1.0
    } else {
        0.0
    }
}

fn indicator_tail(cut: HalfInt) -> f64 {
    if cut.twice() < 0 {
        0.0
    } else {
        cut.ceil() as f64
    }
}

fn fermi(u: f64, l: HalfInt) -> f64 {
    if u == 0.0 {
        return indicator(l);
    }
    let t = l.value() * u.ln();
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
