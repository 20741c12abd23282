//! Text snapshots of solution records.
//!
//! Line one is `normsolve-v1 N R n mu lambda energy kind`, optionally
//! followed by the exponent when it is not critical. The `n` node values
//! follow, one per line, with 17 significant digits so that reading a
//! snapshot reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::energy::{critical_exponent, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::minimizer::{SolutionKind, SolutionRecord};

pub const MAGIC: &str = "normsolve-v1";

/// Parsed snapshot contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub radius: f64,
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    pub energy: f64,
    pub kind: SolutionKind,
    pub exponent: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_record(g: &RadialGrid, rec: &SolutionRecord) -> Result<Self> {
        g.check(&rec.u)?;
        Ok(Self {
            dim: g.dim(),
            radius: g.radius(),
            n: g.n(),
            mu: rec.mu,
            lambda: rec.lambda,
            energy: rec.energy,
            kind: rec.kind,
            exponent: rec.exponent,
            values: rec.u.values().to_vec(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MAGIC} {} {:.16e} {} {:.16e} {:.16e} {:.16e} {}",
            self.dim,
            self.radius,
            self.n,
            self.mu,
            self.lambda,
            self.energy,
            self.kind.as_str()
        );
        if self.exponent != critical_exponent(self.dim) {
            let _ = write!(s, " {:.16e}", self.exponent);
        }
        s.push('\n');
        for v in &self.values {
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| bad("empty snapshot"))??;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 8 && tok.len() != 9 {
            return Err(bad(format!("header has {} fields", tok.len())));
        }
        if tok[0] != MAGIC {
            return Err(bad(format!("unknown format tag {:?}", tok[0])));
        }
        let dim: usize = num(tok[1], "N")?;
        let radius: f64 = num(tok[2], "R")?;
        let n: usize = num(tok[3], "n")?;
        let mu: f64 = num(tok[4], "mu")?;
        let lambda: f64 = num(tok[5], "lambda")?;
        let energy: f64 = num(tok[6], "energy")?;
        let kind =
            SolutionKind::parse(tok[7]).ok_or_else(|| bad(format!("unknown kind {:?}", tok[7])))?;
        let exponent = match tok.get(8) {
            Some(t) => num(t, "exponent")?,
            None => critical_exponent(dim),
        };
        let mut values = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(num(t, "node value")?);
        }
        if values.len() != n {
            return Err(bad(format!(
                "header announces {n} values, found {}",
                values.len()
            )));
        }
        Ok(Self {
            dim,
            radius,
            n,
            mu,
            lambda,
            energy,
            kind,
            exponent,
            values,
        })
    }

    /// Rebuilds the grid and the record; derived quantities are recomputed
    /// from the stored field, the stored `λ` is kept.
    pub fn into_record(self) -> Result<(RadialGrid, SolutionRecord)> {
        let g = RadialGrid::new(self.dim, self.radius, self.n)?;
        let params = EnergyParams::with_exponent(self.dim, self.mu, self.exponent)?;
        let u = Field::new(g.id(), self.values);
        let rec = SolutionRecord::assemble(&g, u, self.lambda, &params, self.kind, f64::NAN, 0)?;
        Ok((g, rec))
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| bad(format!("cannot parse {what} from {s:?}")))
}

pub fn save(path: impl AsRef<Path>, g: &RadialGrid, rec: &SolutionRecord) -> Result<()> {
    let text = Snapshot::from_record(g, rec)?.to_text();
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Snapshot> {
    Snapshot::read(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::principal_eigenpair;

    fn record() -> (RadialGrid, SolutionRecord) {
        let g = RadialGrid::new(3, 1.0, 64).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        let p = EnergyParams::critical(3, 0.1).unwrap();
        let rec =
            SolutionRecord::assemble(&g, e.phi1, e.lambda1, &p, SolutionKind::LocalMin, 0.0, 0)
                .unwrap();
        (g, rec)
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (g, rec) = record();
        let s = Snapshot::from_record(&g, &rec).unwrap();
        let back = Snapshot::parse(&s.to_text()).unwrap();
        assert_eq!(s, back);
        assert!(s.to_text().starts_with("normsolve-v1 3 "));
    }

    #[test]
    fn rejects_malformed_input() {
        let (g, rec) = record();
        let text = Snapshot::from_record(&g, &rec).unwrap().to_text();
        assert!(Snapshot::parse("").is_err());
        assert!(Snapshot::parse(&text.replacen("normsolve-v1", "other", 1)).is_err());
        assert!(Snapshot::parse(&text.replacen("local_min", "saddle", 1)).is_err());
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(Snapshot::parse(&truncated).is_err());
    }

    #[test]
    fn subcritical_exponent_is_kept() {
        let (g, mut rec) = record();
        rec.exponent = 5.0;
        let s = Snapshot::from_record(&g, &rec).unwrap();
        assert_eq!(s.to_text().lines().next().unwrap().split(' ').count(), 9);
        assert_eq!(Snapshot::parse(&s.to_text()).unwrap().exponent, 5.0);
    }
}
