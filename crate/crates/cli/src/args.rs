use std::path::PathBuf;

use clap::{Args, ValueEnum};
use tbl_core::{Error, HalfInt, Result, SigmaProfile};

#[derive(Debug, Clone, Args)]
pub struct SigmaArgs {
    /// Filling profile: indicator, zero, fermi:<u>, or fermi together with --u.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Fermi parameter u in [0, 1).
    #[arg(long)]
    pub u: Option<f64>,
    /// JSON profile description (overrides --sigma).
    #[arg(long, value_name = "JSON")]
    pub sigma_file: Option<PathBuf>,
}

impl SigmaArgs {
    pub fn given(&self) -> bool {
        self.sigma.is_some() || self.u.is_some() || self.sigma_file.is_some()
    }

    pub fn resolve(&self) -> Result<SigmaProfile> {
        if let Some(path) = &self.sigma_file {
            if self.sigma.is_some() || self.u.is_some() {
                return Err(Error::InvalidInput("--sigma-file excludes --sigma and --u".into()));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
            return SigmaProfile::from_json(&text);
        }
        match (self.sigma.as_deref(), self.u) {
            (None, None) => Ok(SigmaProfile::Indicator),
            (None | Some("fermi"), Some(u)) => SigmaProfile::fermi(u),
            (Some(s), None) => SigmaProfile::from_spec(s),
            (Some(s), Some(_)) => Err(Error::InvalidInput(format!(
                "--u only applies to fermi, got --sigma {s}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Comma-separated reals.
pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number {t:?} in {text:?}")))
        })
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::InvalidInput("empty list".into()));
    }
    Ok(v)
}

/// "a..b" (inclusive, step 1) or a comma list of p/2 values.
pub fn parse_half_ints(text: &str) -> Result<Vec<HalfInt>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (HalfInt, HalfInt) = (a.parse()?, b.parse()?);
        if b < a {
            return Err(Error::InvalidInput(format!("empty range {text:?}")));
        }
        return Ok(HalfInt::range(a, b).collect());
    }
    text.split(',').map(|t| t.parse()).collect()
}

pub fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_int_syntax() {
        let r = parse_half_ints("-1/2..5/2").unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r[0].to_string(), "-1/2");
        assert_eq!(parse_half_ints("3/2,7/2").unwrap().len(), 2);
        assert!(parse_half_ints("1/2..-1/2").is_err());
        assert!(parse_half_ints("1").is_err());
        assert!(parse_half_ints("2/2").is_err());
    }

    #[test]
    fn sigma_resolution() {
        let a = |sigma: Option<&str>, u: Option<f64>| SigmaArgs {
            sigma: sigma.map(String::from),
            u,
            sigma_file: None,
        };
        assert_eq!(a(None, None).resolve().unwrap(), SigmaProfile::Indicator);
        assert_eq!(
            a(Some("fermi"), Some(0.5)).resolve().unwrap(),
            SigmaProfile::fermi(0.5).unwrap()
        );
        assert_eq!(a(None, Some(0.5)).resolve().unwrap(), SigmaProfile::fermi(0.5).unwrap());
        assert!(a(Some("indicator"), Some(0.5)).resolve().is_err());
        assert!(a(Some("fermi:2"), None).resolve().is_err());
    }
}
