//! File formats.
//!
//! * complete data: CSV `x1,…,xd,y`
//! * grid data: CSV `x1,…,xd,bin` plus cuts CSV `rho,cut`, whose `rho = 0` and
//!   `rho = 1` rows carry the response minimum and maximum
//! * weighted grid: CSV `x1,…,xd,weight,cut_1,…,cut_{c-1}`, levels from the config
//! * curves: CSV `x1,…,xd,tau,q_hat`
//! * config: TOML with optional `x` and `y` transforms and `rho` levels
//! * fit: plain text holding transforms, criterion values and tensors

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RawData, RawGrid, RawObservations, RawWeightedGrid, Transform, Transforms};
use crate::coeff::CoefficientTensor;
use crate::error::{Error, Result};
use crate::inference::{CurveRow, FitResult};
use crate::likelihood::WeightedGridRow;
use crate::sampler::ChainOutput;

const FIT_MAGIC: &str = "npqr-fit 1";

fn parse_record(record: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|v| {
            v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("`{v}`: {e}"),
            })
        })
        .collect()
}

fn read_table(path: &Path) -> Result<(csv::StringRecord, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        rows.push(parse_record(&rec?, i + 2)?);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

fn x_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_complete_csv(path: &Path) -> Result<RawData> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(Error::Config("complete data needs at least one covariate and a response".into()));
    }
    let d = header.len() - 1;
    let mut x = Vec::with_capacity(rows.len() * d);
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        x.extend_from_slice(&r[..d]);
        y.push(r[d]);
    }
    RawData::new(d, x, y)
}

pub fn write_complete_csv(path: &Path, data: &RawData) -> Result<()> {
    let mut header = x_header(data.d());
    header.push("y".into());
    write_rows(
        path,
        header,
        (0..data.len()).map(|i| {
            let mut r: Vec<String> = data.x(i).iter().map(f64::to_string).collect();
            r.push(data.y(i).to_string());
            r
        }),
    )
}

pub fn read_grid(obs_path: &Path, cuts_path: &Path) -> Result<RawGrid> {
    let (header, rows) = read_table(obs_path)?;
    if header.len() < 2 {
        return Err(Error::Config("grid data needs at least one covariate and a bin".into()));
    }
    let d = header.len() - 1;
    let mut x = Vec::with_capacity(rows.len() * d);
    let mut bins = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        x.extend_from_slice(&r[..d]);
        let b = r[d];
        if b.fract() != 0.0 || b < 1.0 {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("bin `{b}` is not a positive integer"),
            });
        }
        bins.push(b as usize);
    }
    let (_, cut_rows) = read_table(cuts_path)?;
    if cut_rows.iter().any(|r| r.len() != 2) || cut_rows.len() < 2 {
        return Err(Error::Config("cuts file needs `rho,cut` rows including rho = 0 and rho = 1".into()));
    }
    let rho: Vec<f64> = cut_rows.iter().map(|r| r[0]).collect();
    let values: Vec<f64> = cut_rows.iter().map(|r| r[1]).collect();
    let c = rho.len() - 1;
    RawGrid::new(d, x, bins, rho, values[1..c].to_vec(), values[0], values[c])
}

pub fn write_grid(obs_path: &Path, cuts_path: &Path, grid: &RawGrid) -> Result<()> {
    let mut header = x_header(grid.d());
    header.push("bin".into());
    write_rows(
        obs_path,
        header,
        (0..grid.len()).map(|i| {
            let mut r: Vec<String> = grid.x(i).iter().map(f64::to_string).collect();
            r.push(grid.bin(i).to_string());
            r
        }),
    )?;
    let (lo, hi) = grid.y_bounds();
    let mut values = vec![lo];
    values.extend_from_slice(grid.cuts());
    values.push(hi);
    write_rows(
        cuts_path,
        vec!["rho".into(), "cut".into()],
        grid.rho()
            .iter()
            .zip(values)
            .map(|(r, v)| vec![r.to_string(), v.to_string()]),
    )
}

pub fn read_weighted_csv(path: &Path, rho: Vec<f64>) -> Result<RawWeightedGrid> {
    let (header, rows) = read_table(path)?;
    let d = header
        .iter()
        .position(|h| h.trim() == "weight")
        .ok_or(Error::Config("weighted grid CSV needs a `weight` column".into()))?;
    let rows = rows
        .into_iter()
        .map(|r| WeightedGridRow {
            x: r[..d].to_vec(),
            weight: r[d],
            cuts: r[d + 1..].to_vec(),
        })
        .collect();
    RawWeightedGrid::new(d, rho, rows)
}

pub fn write_weighted_csv(path: &Path, data: &RawWeightedGrid) -> Result<()> {
    let mut header = x_header(data.d());
    header.push("weight".into());
    header.extend((1..data.rho().len() - 1).map(|l| format!("cut_{l}")));
    write_rows(
        path,
        header,
        data.rows().iter().map(|r| {
            let mut out: Vec<String> = r.x.iter().map(f64::to_string).collect();
            out.push(r.weight.to_string());
            out.extend(r.cuts.iter().map(f64::to_string));
            out
        }),
    )
}

pub fn write_curves_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let d = rows.first().map_or(1, |r| r.x.len());
    let mut header = x_header(d);
    header.push("tau".into());
    header.push("q_hat".into());
    write_rows(
        path,
        header,
        rows.iter().map(|r| {
            let mut out: Vec<String> = r.x.iter().map(f64::to_string).collect();
            out.push(r.tau.to_string());
            out.push(r.q.to_string());
            out
        }),
    )
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let (header, rows) = read_table(path)?;
    let d = header.len().saturating_sub(2);
    Ok(rows
        .into_iter()
        .map(|r| CurveRow {
            x: r[..d].to_vec(),
            tau: r[d],
            q: r[d + 1],
        })
        .collect())
}

/// Optional user settings; missing transforms are fitted from the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub x: Option<Vec<Transform>>,
    pub y: Option<Transform>,
    pub rho: Option<Vec<f64>>,
}

impl DataConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, toml::to_string(self)?)?;
        Ok(())
    }

    /// Configured transforms, filling gaps with ones fitted to `data`.
    pub fn transforms_for(&self, data: &RawObservations) -> Result<Transforms> {
        let fitted = data.fit_transforms()?;
        let tr = Transforms {
            x: self.x.clone().unwrap_or(fitted.x),
            y: self.y.unwrap_or(fitted.y),
        };
        tr.validate()?;
        Ok(tr)
    }
}

/// A fit together with the transforms that map its data to the unit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct FitFile {
    pub fit: FitResult,
    pub transforms: Transforms,
}

impl FitFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let tr = toml::to_string(&self.transforms)?;
        writeln!(w, "{FIT_MAGIC}")?;
        writeln!(w, "aic {}", self.fit.aic)?;
        writeln!(w, "loglik {}", self.fit.loglik)?;
        writeln!(w, "transforms {}", tr.lines().count())?;
        w.write_all(tr.as_bytes())?;
        writeln!(w, "mle")?;
        w.write_all(self.fit.mle.to_text().as_bytes())?;
        writeln!(w, "samples {}", self.fit.chain.samples.len())?;
        for s in &self.fit.chain.samples {
            w.write_all(s.to_text().as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        take_key(&mut lines, FIT_MAGIC)?;
        let aic = parse_value(take_key(&mut lines, "aic")?)?;
        let loglik = parse_value(take_key(&mut lines, "loglik")?)?;
        let tr_lines: usize = parse_value(take_key(&mut lines, "transforms")?)?;
        let tr_text: Vec<&str> = lines.by_ref().take(tr_lines).map(|(_, l)| l).collect();
        if tr_text.len() != tr_lines {
            return Err(Error::Parse {
                line: 0,
                message: "fit file ended inside transforms".into(),
            });
        }
        let transforms: Transforms = toml::from_str(&tr_text.join("\n"))?;
        transforms.validate()?;
        take_key(&mut lines, "mle")?;
        let mle = CoefficientTensor::read_lines(&mut lines)?;
        if transforms.d() != mle.spec().d {
            return Err(Error::Shape {
                what: "covariate transforms",
                expected: mle.spec().d,
                found: transforms.d(),
            });
        }
        let n_samples: usize = parse_value(take_key(&mut lines, "samples")?)?;
        let mut samples = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let t = CoefficientTensor::read_lines(&mut lines)?;
            if t.spec() != mle.spec() {
                return Err(Error::Contract("sample spec differs from the fitted spec".into()));
            }
            samples.push(t);
        }
        Ok(Self {
            fit: FitResult {
                spec: *mle.spec(),
                mle,
                loglik,
                aic,
                chain: ChainOutput {
                    samples,
                    ..ChainOutput::default()
                },
            },
            transforms,
        })
    }
}

/// Next line, which must start with `key`; returns its one-based number and the remainder.
fn take_key<'a, I>(lines: &mut I, key: &str) -> Result<(usize, String)>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (n, line) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: format!("file ended before `{key}`"),
    })?;
    let rest = line.strip_prefix(key).ok_or(Error::Parse {
        line: n + 1,
        message: format!("expected `{key}`"),
    })?;
    Ok((n + 1, rest.trim().to_string()))
}

fn parse_value<T: std::str::FromStr>((line, v): (usize, String)) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{Method, ModelSpec};
    use crate::datakit::{coarsen_to_grid, simulate_study1, SkewNoise};

    #[test]
    fn complete_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let data = simulate_study1(25, 3, SkewNoise::Standard).unwrap();
        write_complete_csv(&p, &data).unwrap();
        assert_eq!(read_complete_csv(&p).unwrap(), data);
    }

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (o, c) = (dir.path().join("o.csv"), dir.path().join("c.csv"));
        let grid = coarsen_to_grid(&simulate_study1(80, 4, SkewNoise::Standard).unwrap(), 10).unwrap();
        write_grid(&o, &c, &grid).unwrap();
        assert_eq!(read_grid(&o, &c).unwrap(), grid);
    }

    #[test]
    fn weighted_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        let rho = vec![0.0, 0.5, 1.0];
        let data = RawWeightedGrid::new(
            1,
            rho.clone(),
            vec![WeightedGridRow {
                x: vec![1990.0],
                weight: 321.5,
                cuts: vec![41000.0],
            }],
        )
        .unwrap();
        write_weighted_csv(&p, &data).unwrap();
        assert_eq!(read_weighted_csv(&p, rho).unwrap(), data);
    }

    #[test]
    fn config_parses_partial_settings() {
        let cfg: DataConfig = toml::from_str(
            "rho = [0.0, 0.2, 1.0]\n[y]\nkind = \"log_linear\"\nlower = 7.47\nupper = 12.55\n",
        )
        .unwrap();
        assert_eq!(cfg.rho.as_deref(), Some(&[0.0, 0.2, 1.0][..]));
        assert!(cfg.x.is_none());
        assert_eq!(
            cfg.y,
            Some(Transform::LogLinear {
                lower: 7.47,
                upper: 12.55
            })
        );
    }

    #[test]
    fn fit_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fit.txt");
        let spec = ModelSpec::quadratic(Method::Npdfsqr, 2, 3).unwrap();
        let t = CoefficientTensor::identity(spec);
        let file = FitFile {
            fit: FitResult {
                spec,
                mle: t.clone(),
                loglik: -12.5,
                aic: 99.0,
                chain: ChainOutput {
                    samples: vec![t.clone(), CoefficientTensor::uniform(spec)],
                    ..ChainOutput::default()
                },
            },
            transforms: Transforms {
                x: vec![Transform::Linear { a: 0.0, b: 5.0 }, Transform::Linear { a: -1.0, b: 1.0 }],
                y: Transform::PowerPareto {
                    a: 0.45,
                    sigma: 52.0,
                    k: 4.9,
                },
            },
        };
        file.write(&p).unwrap();
        assert_eq!(FitFile::read(&p).unwrap(), file);
    }
}
