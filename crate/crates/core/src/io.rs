//! CSV readers and writers for the pipeline's file interfaces.
//!
//! | file          | header                                                          |
//! |---------------|-----------------------------------------------------------------|
//! | parcels       | `parcel_id,year,crop_code,wkt`                                  |
//! | env           | `cell_id,year,ws,ppt,q,def,srad,tmin,tmax,soilm,soile`          |
//! | outcome       | `cell_id,year,npp`                                              |
//! | dataset       | `cell_id,x_center,y_center,<covariates...>,treatment,outcome`   |

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use csv::StringRecord;

use crate::data::{FeatureMatrix, LabeledDataset, YearRecord, COVARIATES};
use crate::error::{Error, Result};
use crate::geo::{EnvTable, ParcelRecord};

struct Table {
    file: String,
    headers: StringRecord,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(handle);
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                file: file.clone(),
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse {
                file: file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            file,
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                file: Some(self.file.clone()),
            })
    }

    fn field<T: FromStr>(&self, line: u64, rec: &StringRecord, col: usize) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse().map_err(|_| Error::Parse {
            file: self.file.clone(),
            line,
            message: format!("column `{}`: cannot parse `{raw}`", &self.headers[col]),
        })
    }

    fn finite(&self, line: u64, rec: &StringRecord, col: usize) -> Result<f64> {
        let v: f64 = self.field(line, rec, col)?;
        if !v.is_finite() {
            return Err(Error::Parse {
                file: self.file.clone(),
                line,
                message: format!("column `{}`: non-finite value", &self.headers[col]),
            });
        }
        Ok(v)
    }
}

pub fn read_parcels(path: &Path) -> Result<Vec<ParcelRecord>> {
    let t = Table::read(path)?;
    let (id, year, crop, wkt) = (
        t.column("parcel_id")?,
        t.column("year")?,
        t.column("crop_code")?,
        t.column("wkt")?,
    );
    t.rows
        .iter()
        .map(|(line, rec)| {
            let pid: String = t.field(*line, rec, id)?;
            let yr: i32 = t.field(*line, rec, year)?;
            let code: String = t.field(*line, rec, crop)?;
            ParcelRecord::from_wkt(&pid, yr, &code, &rec[wkt])
        })
        .collect()
}

pub fn read_env(path: &Path) -> Result<EnvTable> {
    let t = Table::read(path)?;
    let cell = t.column("cell_id")?;
    let year = t.column("year")?;
    let cols: Vec<usize> = COVARIATES.iter().map(|c| t.column(c)).collect::<Result<_>>()?;
    let records = t
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(YearRecord {
                cell_id: t.field(*line, rec, cell)?,
                year: t.field(*line, rec, year)?,
                values: cols
                    .iter()
                    .map(|&c| t.finite(*line, rec, c))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EnvTable {
        columns: COVARIATES.iter().map(|s| s.to_string()).collect(),
        records,
    })
}

pub fn read_outcome(path: &Path) -> Result<Vec<YearRecord>> {
    let t = Table::read(path)?;
    let (cell, year, npp) = (t.column("cell_id")?, t.column("year")?, t.column("npp")?);
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(YearRecord {
                cell_id: t.field(*line, rec, cell)?,
                year: t.field(*line, rec, year)?,
                values: vec![t.finite(*line, rec, npp)?],
            })
        })
        .collect()
}

/// Location of one dataset row on the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLocation {
    pub cell_id: u64,
    pub x_center: f64,
    pub y_center: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub locations: Vec<CellLocation>,
    pub dataset: LabeledDataset,
}

pub fn write_dataset(path: &Path, locations: &[CellLocation], ds: &LabeledDataset) -> Result<()> {
    if locations.len() != ds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} locations for {} dataset rows",
            locations.len(),
            ds.len()
        )));
    }
    let mut out = String::new();
    out.push_str("cell_id,x_center,y_center");
    for name in ds.x.column_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",treatment,outcome\n");
    for (i, loc) in locations.iter().enumerate() {
        out.push_str(&format!("{},{},{}", loc.cell_id, loc.x_center, loc.y_center));
        for v in ds.x.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{},{}\n", ds.t[i], ds.y[i]));
    }
    write_string(path, &out)
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let t = Table::read(path)?;
    let names: Vec<&str> = t.headers.iter().collect();
    let expected_head = ["cell_id", "x_center", "y_center"];
    for (k, name) in expected_head.iter().enumerate() {
        if names.get(k) != Some(name) {
            return Err(Error::MissingColumn {
                column: name.to_string(),
                file: Some(t.file.clone()),
            });
        }
    }
    let n = names.len();
    if n < 6 || names[n - 2] != "treatment" || names[n - 1] != "outcome" {
        return Err(Error::Parse {
            file: t.file.clone(),
            line: 1,
            message: "dataset header must end with `treatment,outcome` after at least one covariate"
                .into(),
        });
    }
    let covariates: Vec<String> = names[3..n - 2].iter().map(|s| s.to_string()).collect();
    let p = covariates.len();
    let mut locations = Vec::with_capacity(t.rows.len());
    let mut values = Vec::with_capacity(t.rows.len() * p);
    let mut y = Vec::with_capacity(t.rows.len());
    let mut treat = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        locations.push(CellLocation {
            cell_id: t.field(*line, rec, 0)?,
            x_center: t.finite(*line, rec, 1)?,
            y_center: t.finite(*line, rec, 2)?,
        });
        for c in 3..3 + p {
            values.push(t.finite(*line, rec, c)?);
        }
        let tv: u8 = t.field(*line, rec, n - 2)?;
        if tv > 1 {
            return Err(Error::Parse {
                file: t.file.clone(),
                line: *line,
                message: format!("column `treatment`: expected 0 or 1, found {tv}"),
            });
        }
        treat.push(tv);
        y.push(t.finite(*line, rec, n - 1)?);
    }
    let ids = locations.iter().map(|l| l.cell_id).collect();
    let x = FeatureMatrix::new(covariates, values, ids)?;
    Ok(DatasetFile {
        locations,
        dataset: LabeledDataset::new(x, y, treat)?,
    })
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_string(path, &s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = read_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}
