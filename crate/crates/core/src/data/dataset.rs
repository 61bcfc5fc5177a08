//! Double-labelled datasets and the canonical text format.
//!
//! The format is a header line `m |Y| |Z| n` followed by `n` sample lines,
//! each holding `m` reals, then `y`, then `z`, separated by single spaces.
//! Reals are written in shortest round-trip form, so save/load is lossless.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{input, Error, Result};
use crate::nn::Matrix;
use crate::objectives::EmpiricalDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One row per sample.
    pub x: Matrix,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    pub n_regular: usize,
    pub n_private: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, z: Vec<usize>, n_regular: usize, n_private: usize) -> Result<Self> {
        let d = Self {
            x,
            y,
            z,
            n_regular,
            n_private,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.y.len() != n || self.z.len() != n {
            return Err(input(format!(
                "{n} feature rows but {} regular and {} private labels",
                self.y.len(),
                self.z.len()
            )));
        }
        if self.n_regular == 0 || self.n_private == 0 {
            return Err(input("label alphabets must be non-empty"));
        }
        if let Some(&bad) = self.y.iter().find(|&&v| v >= self.n_regular) {
            return Err(input(format!("regular label {bad} outside [0, {})", self.n_regular)));
        }
        if let Some(&bad) = self.z.iter().find(|&&v| v >= self.n_private) {
            return Err(input(format!("private label {bad} outside [0, {})", self.n_private)));
        }
        if !self.x.is_finite() {
            return Err(input("features contain non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn p_hat_y(&self) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::from_labels(&self.y, self.n_regular)
    }

    pub fn p_hat_z(&self) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::from_labels(&self.z, self.n_private)
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            z: indices.iter().map(|&i| self.z[i]).collect(),
            n_regular: self.n_regular,
            n_private: self.n_private,
        }
    }

    pub fn to_canonical_string(&self) -> String {
        let mut s = String::with_capacity(self.len() * (self.dim() * 4 + 8) + 32);
        let _ = writeln!(s, "{} {} {} {}", self.dim(), self.n_regular, self.n_private, self.len());
        for (i, row) in self.x.row_iter().enumerate() {
            for v in row {
                let _ = write!(s, "{v:?} ");
            }
            let _ = writeln!(s, "{} {}", self.y[i], self.z[i]);
        }
        s
    }

    pub fn write_canonical<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_canonical_string().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_canonical_string())?;
        Ok(())
    }

    pub fn read_canonical<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(parse(1, "missing header")),
                Some((i, l)) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break (i + 1, l);
                    }
                }
            }
        };
        let fields: Vec<usize> = header
            .1
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse(header.0, format!("header: {e}")))?;
        let [m, ny, nz, n] = fields[..] else {
            return Err(parse(header.0, "header must be `m |Y| |Z| n`"));
        };
        if ny == 0 || nz == 0 {
            return Err(parse(header.0, "alphabet sizes must be ≥ 1"));
        }
        let mut data = Vec::with_capacity(n * m);
        let (mut y, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, l) in lines {
            let l = l?;
            let lineno = i + 1;
            if l.trim().is_empty() {
                continue;
            }
            if y.len() == n {
                return Err(parse(lineno, format!("more than the {n} samples declared")));
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != m + 2 {
                return Err(parse(
                    lineno,
                    format!("expected {} fields, found {}", m + 2, toks.len()),
                ));
            }
            for t in &toks[..m] {
                let v: f64 = t.parse().map_err(|_| parse(lineno, format!("bad real `{t}`")))?;
                if !v.is_finite() {
                    return Err(parse(lineno, format!("non-finite feature `{t}`")));
                }
                data.push(v);
            }
            let label = |t: &str, k: usize, what: &str| -> Result<usize> {
                let v: usize = t
                    .parse()
                    .map_err(|_| parse(lineno, format!("bad {what} label `{t}`")))?;
                if v >= k {
                    return Err(parse(lineno, format!("{what} label {v} outside [0, {k})")));
                }
                Ok(v)
            };
            y.push(label(toks[m], ny, "regular")?);
            z.push(label(toks[m + 1], nz, "private")?);
        }
        if y.len() != n {
            return Err(parse(
                header.0,
                format!("header declares {n} samples, found {}", y.len()),
            ));
        }
        Dataset::new(Matrix::from_vec(n, m, data)?, y, z, ny, nz)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_canonical(std::io::BufReader::new(f))
    }
}

impl std::str::FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::read_canonical(s.as_bytes())
    }
}

fn parse(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: &str = "2 2 3 3\n0.5 -1 0 2\n1e-3 4 1 2\n0 0 1 0\n";

    #[test]
    fn hand_written_file() {
        let d: Dataset = HAND.parse().unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.y, vec![0, 1, 1]);
        assert_eq!(d.z, vec![2, 2, 0]);
        assert_eq!(d.p_hat_z().unwrap().probs, vec![1.0 / 3.0, 0.0, 2.0 / 3.0]);
        assert_eq!(d.x.get(1, 0), 1e-3);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let x = Matrix::from_vec(2, 3, vec![0.1, 1.0 / 3.0, -2.5e-300, f64::MIN_POSITIVE, 7.0, -0.0]).unwrap();
        let d = Dataset::new(x, vec![1, 0], vec![0, 3], 2, 4).unwrap();
        let back: Dataset = d.to_canonical_string().parse().unwrap();
        assert_eq!(
            back.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            d.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back, d);
    }

    #[test]
    fn malformed_rows_report_line() {
        let cases = [
            ("2 2 3 2\n0 0 0 0\n0 0 0\n", 3),
            ("2 2 3 1\n0 x 0 0\n", 2),
            ("2 2 3 1\n0 0 2 0\n", 2),
            ("2 2 3 1\n0 0 0 3\n", 2),
            ("2 2 3 2\n0 0 0 0\n", 1),
            ("2 2 3\n", 1),
        ];
        for (text, line) in cases {
            match text.parse::<Dataset>() {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }
}
