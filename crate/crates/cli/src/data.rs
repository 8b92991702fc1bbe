//! CSV loading for `minbo estimate`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use minbo::model::{
    default_basis, CrossSectionalData, Link, LongitudinalData, MainDataset, SecondaryDataset,
    WorkingModelSpec,
};
use minbo::numerics::Matrix;

use crate::config::{AnalysisConfig, MainFile, SecondaryFile, SecondaryKind};
use crate::error::CliError;

/// Header plus string cells of one CSV file.
struct Table {
    file: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            file: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!("{}: no column named {name:?}", self.file.display()))
        })
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let cell = &self.rows[row][col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Parse {
                file: self.file.clone(),
                row: row + 1,
                column: self.headers[col].clone(),
                message: format!("expected a finite number, found {cell:?}"),
            })
    }

    /// Design row: optional intercept, then the named columns.
    fn design_row(&self, row: usize, cols: &[usize], intercept: bool) -> Result<Vec<f64>, CliError> {
        let mut v = Vec::with_capacity(cols.len() + 1);
        if intercept {
            v.push(1.0);
        }
        for &c in cols {
            v.push(self.number(row, c)?);
        }
        Ok(v)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map_or(0, |p| p.record() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        _ => CliError::Parse {
            file: path.to_path_buf(),
            row,
            column: String::new(),
            message: e.to_string(),
        },
    }
}

fn columns(table: &Table, names: &[String]) -> Result<Vec<usize>, CliError> {
    names.iter().map(|n| table.column(n)).collect()
}

/// Main and secondary datasets with working-model specifications.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub ids: Vec<String>,
    pub coefficient_names: Vec<String>,
    pub main: MainDataset,
    pub secondaries: Vec<SecondaryDataset>,
    pub specs: Vec<WorkingModelSpec>,
}

pub fn load_datasets(cfg: &AnalysisConfig) -> Result<Loaded, CliError> {
    let (ids, main) = load_main(&cfg.main)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut secondaries = Vec::with_capacity(cfg.secondary.len());
    let mut specs = Vec::with_capacity(cfg.secondary.len());
    for s in &cfg.secondary {
        let (data, spec) = match s.kind {
            SecondaryKind::Longitudinal => load_longitudinal(s, &index)?,
            SecondaryKind::CrossSectional => load_cross_sectional(s, &index)?,
        };
        secondaries.push(data);
        specs.push(spec);
    }
    let coefficient_names = std::iter::once("(Intercept)".to_string())
        .chain(cfg.main.covariates.iter().cloned())
        .collect();
    Ok(Loaded {
        ids,
        coefficient_names,
        main,
        secondaries,
        specs,
    })
}

fn load_main(spec: &MainFile) -> Result<(Vec<String>, MainDataset), CliError> {
    let t = Table::read(&spec.file)?;
    let id_col = t.column(&spec.id)?;
    let y_col = t.column(&spec.outcome)?;
    let x_cols = columns(&t, &spec.covariates)?;
    let n = t.rows.len();
    let mut ids = Vec::with_capacity(n);
    let mut seen = HashMap::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, x_cols.len() + 1);
    for r in 0..n {
        let id = t.rows[r][id_col].clone();
        if seen.insert(id.clone(), r).is_some() {
            return Err(CliError::Parse {
                file: t.file.clone(),
                row: r + 1,
                column: spec.id.clone(),
                message: format!("duplicate subject {id:?}"),
            });
        }
        ids.push(id);
        y.push(t.number(r, y_col)?);
        x.row_mut(r).copy_from_slice(&t.design_row(r, &x_cols, true)?);
    }
    Ok((ids, MainDataset::new(y, x)?))
}

fn subject(
    t: &Table,
    row: usize,
    id_col: usize,
    index: &HashMap<&str, usize>,
) -> Result<usize, CliError> {
    let id = &t.rows[row][id_col];
    index.get(id.as_str()).copied().ok_or_else(|| CliError::UnknownSubject {
        file: t.file.clone(),
        id: id.clone(),
    })
}

fn load_longitudinal(
    s: &SecondaryFile,
    index: &HashMap<&str, usize>,
) -> Result<(SecondaryDataset, WorkingModelSpec), CliError> {
    if s.link != Link::Identity {
        return Err(CliError::Config(format!(
            "{}: longitudinal working models use the identity link",
            s.file.display()
        )));
    }
    let time = s.time.as_ref().ok_or_else(|| {
        CliError::Config(format!("{}: longitudinal files need a time column", s.file.display()))
    })?;
    let t = Table::read(&s.file)?;
    let id_col = t.column(&s.id)?;
    let time_col = t.column(time)?;
    let y_col = t.column(&s.outcome)?;
    let x_cols = columns(&t, &s.covariates)?;
    let r = x_cols.len() + usize::from(s.intercept);
    let n = index.len();

    // (time, y, design row) per subject, in file order.
    let mut blocks: Vec<Vec<(f64, f64, Vec<f64>)>> = vec![Vec::new(); n];
    for row in 0..t.rows.len() {
        let i = subject(&t, row, id_col, index)?;
        blocks[i].push((
            t.number(row, time_col)?,
            t.number(row, y_col)?,
            t.design_row(row, &x_cols, s.intercept)?,
        ));
    }
    let m = blocks.iter().map(Vec::len).max().unwrap_or(0);
    if m == 0 {
        return Err(CliError::Config(format!("{}: no visits", s.file.display())));
    }
    let mut ids = vec![""; n];
    for (id, &i) in index {
        ids[i] = id;
    }
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for (i, mut block) in blocks.into_iter().enumerate() {
        if block.is_empty() {
            y.push(vec![0.0; m]);
            x.push(Matrix::zeros(m, r));
            observed.push(false);
            continue;
        }
        if block.len() != m {
            return Err(CliError::UnbalancedLongitudinal {
                file: s.file.clone(),
                id: ids[i].to_string(),
                rows: block.len(),
                expected: m,
            });
        }
        block.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xi = Matrix::zeros(m, r);
        for (v, (_, _, row)) in block.iter().enumerate() {
            xi.row_mut(v).copy_from_slice(row);
        }
        y.push(block.iter().map(|b| b.1).collect());
        x.push(xi);
        observed.push(true);
    }
    let all = default_basis(m);
    let spec = WorkingModelSpec {
        link: Link::Identity,
        basis: s.basis.iter().map(|b| all[b.index()].clone()).collect(),
        variance_mode: s.variance_mode,
        theta_dim: r,
    };
    let data = LongitudinalData::new(y, x, observed)?;
    Ok((SecondaryDataset::Longitudinal(data), spec))
}

fn load_cross_sectional(
    s: &SecondaryFile,
    index: &HashMap<&str, usize>,
) -> Result<(SecondaryDataset, WorkingModelSpec), CliError> {
    let t = Table::read(&s.file)?;
    let id_col = t.column(&s.id)?;
    let y_col = t.column(&s.outcome)?;
    let x_cols = columns(&t, &s.covariates)?;
    let z_cols = columns(&t, &s.redundant)?;
    let r = x_cols.len() + usize::from(s.intercept);
    let n = index.len();
    let mut y = vec![0.0; n];
    let mut x = Matrix::zeros(n, r);
    let mut z = Matrix::zeros(n, z_cols.len());
    let mut observed = vec![false; n];
    for row in 0..t.rows.len() {
        let i = subject(&t, row, id_col, index)?;
        if observed[i] {
            return Err(CliError::Parse {
                file: t.file.clone(),
                row: row + 1,
                column: s.id.clone(),
                message: format!("duplicate subject {:?}", t.rows[row][id_col]),
            });
        }
        observed[i] = true;
        y[i] = t.number(row, y_col)?;
        x.row_mut(i).copy_from_slice(&t.design_row(row, &x_cols, s.intercept)?);
        z.row_mut(i).copy_from_slice(&t.design_row(row, &z_cols, false)?);
    }
    let data = CrossSectionalData::new(y, x, z, observed)?;
    Ok((
        SecondaryDataset::CrossSectional(data),
        WorkingModelSpec::cross_sectional(s.link, r),
    ))
}
