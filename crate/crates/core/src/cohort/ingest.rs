//! Long-format CSV ingestion.
//!
//! Three files describe a cohort:
//!
//! * timeseries: `patient_id,variable,hour,value`, hours in `1..=T`
//! * static: `patient_id,<columns...>`, some columns declared categorical
//! * labels: `patient_id,label`, label in `{0, 1}`
//!
//! Categorical static columns are one-hot encoded as `<column>=<level>`,
//! levels sorted. Missing numeric statics are filled with the column median.

use super::impute::impute_in_place;
use super::ClinicalBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array2, Array3};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub hours: usize,
    /// Expected variable names. When set, any other name is a schema error and
    /// the order is taken from here; otherwise names are collected and sorted.
    pub variables: Option<Vec<String>>,
    /// Static columns holding categories rather than numbers.
    pub categorical: Vec<String>,
}

/// One patient's raw series (`D × T`, `None` where unmeasured), statics and label.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPatient {
    pub id: String,
    pub series: Vec<Vec<Option<f64>>>,
    pub statics: Vec<f64>,
    pub label: u8,
}

/// An ingested, not yet imputed cohort in raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCohort {
    pub hours: usize,
    pub variable_names: Vec<String>,
    pub static_names: Vec<String>,
    pub patients: Vec<RawPatient>,
}

impl RawCohort {
    /// Median of measured values per variable, over `rows` (all patients when `None`).
    /// Variables never measured get 0.
    pub fn measured_medians(&self, rows: Option<&[usize]>) -> Vec<f64> {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..self.patients.len()).collect();
                &all
            }
        };
        (0..self.variable_names.len())
            .map(|d| {
                let mut vals: Vec<f64> = rows
                    .iter()
                    .flat_map(|&n| self.patients[n].series[d].iter().flatten().copied())
                    .collect();
                median(&mut vals).unwrap_or(0.0)
            })
            .collect()
    }

    /// Carry-forward imputation into a batch in raw units.
    pub fn impute<T: Scalar>(&self, population_median: &[f64]) -> Result<ClinicalBatch<T>> {
        let n = self.patients.len();
        let d = self.variable_names.len();
        let t = self.hours;
        let p = self.static_names.len();
        let mut values = Array3::<T>::zeros((n, d, t));
        let mut mask = Array3::<T>::zeros((n, d, t));
        let mut statics = Array2::<T>::zeros((n, p));
        for (i, patient) in self.patients.iter().enumerate() {
            for (dv, series) in patient.series.iter().enumerate() {
                for (h, v) in series.iter().enumerate() {
                    if let Some(v) = v {
                        values[[i, dv, h]] = T::lit(*v);
                        mask[[i, dv, h]] = T::one();
                    }
                }
            }
            for (j, &s) in patient.statics.iter().enumerate() {
                statics[[i, j]] = T::lit(s);
            }
        }
        let median: Vec<T> = population_median.iter().map(|&m| T::lit(m)).collect();
        impute_in_place(&mut values, mask.view(), &median)?;
        ClinicalBatch::new(
            values,
            mask,
            statics,
            self.patients.iter().map(|p| p.label).collect(),
            self.patients.iter().map(|p| p.id.clone()).collect(),
            self.variable_names.clone(),
            self.static_names.clone(),
        )
    }

    /// Reorders static columns to `names`. Columns absent here (e.g. a category
    /// level never observed in this cohort) are zero; columns present here but
    /// not in `names` are a schema error.
    pub fn align_statics(&mut self, names: &[String]) -> Result<()> {
        let index: HashMap<&str, usize> = self
            .static_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if let Some(extra) = self.static_names.iter().find(|s| !names.contains(s)) {
            return Err(Error::Schema(format!("unexpected static column '{extra}'")));
        }
        for patient in &mut self.patients {
            patient.statics = names
                .iter()
                .map(|name| index.get(name.as_str()).map_or(0.0, |&i| patient.statics[i]))
                .collect();
        }
        self.static_names = names.to_vec();
        Ok(())
    }
}

fn median(vals: &mut [f64]) -> Option<f64> {
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let k = vals.len();
    Some(if k % 2 == 1 {
        vals[k / 2]
    } else {
        0.5 * (vals[k / 2 - 1] + vals[k / 2])
    })
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<Vec<String>> {
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            file: file_label(path),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            file: file_label(path),
            line: 1,
            message: format!("expected header starting with {}", expected.join(",")),
        });
    }
    Ok(headers)
}

fn records<'a>(
    reader: &'a mut csv::Reader<File>,
    path: &Path,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    let file = file_label(path);
    reader.records().map(move |r| {
        r.map(|rec| (rec.position().map_or(0, |p| p.line()), rec))
            .map_err(|e| Error::Parse {
                file: file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
    })
}

fn parse_field<F: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    path: &Path,
    line: u64,
    what: &str,
) -> Result<F> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        file: file_label(path),
        line,
        message: format!("cannot parse {what} from '{raw}'"),
    })
}

/// Reads a three-file cohort. `static_path` may be `None` for cohorts without statics.
pub fn ingest_csv(
    timeseries_path: &Path,
    static_path: Option<&Path>,
    labels_path: &Path,
    options: &IngestOptions,
) -> Result<RawCohort> {
    let hours = options.hours;
    if hours == 0 {
        return Err(Error::InvalidArgument("hours must be positive".into()));
    }

    // Labels define the patient set and its order.
    let mut reader = open_reader(labels_path)?;
    check_header(&mut reader, labels_path, &["patient_id", "label"])?;
    let mut label_of: BTreeMap<String, (u8, u64)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for rec in records(&mut reader, labels_path) {
        let (line, rec) = rec?;
        let id = rec.get(0).unwrap_or("").to_owned();
        let label: u8 = parse_field(&rec, 1, labels_path, line, "label")?;
        if label > 1 {
            return Err(Error::Range {
                file: file_label(labels_path),
                line,
                message: format!("label {label} not in {{0, 1}}"),
            });
        }
        if let Some(&(_, first)) = label_of.get(&id) {
            return Err(Error::Conflict {
                file: file_label(labels_path),
                key: format!("({id})"),
                first_line: first,
                second_line: line,
            });
        }
        label_of.insert(id.clone(), (label, line));
        order.push(id);
    }

    // Series rows.
    let mut reader = open_reader(timeseries_path)?;
    check_header(
        &mut reader,
        timeseries_path,
        &["patient_id", "variable", "hour", "value"],
    )?;
    let known: Option<BTreeSet<&str>> = options
        .variables
        .as_ref()
        .map(|v| v.iter().map(String::as_str).collect());
    let mut seen: HashMap<(String, String, usize), u64> = HashMap::new();
    let mut rows: Vec<(String, String, usize, f64)> = Vec::new();
    for rec in records(&mut reader, timeseries_path) {
        let (line, rec) = rec?;
        let id = rec.get(0).unwrap_or("").to_owned();
        let variable = rec.get(1).unwrap_or("").to_owned();
        let hour: usize = parse_field(&rec, 2, timeseries_path, line, "hour")?;
        let value: f64 = parse_field(&rec, 3, timeseries_path, line, "value")?;
        if !value.is_finite() {
            return Err(Error::Parse {
                file: file_label(timeseries_path),
                line,
                message: "value must be finite".into(),
            });
        }
        if hour < 1 || hour > hours {
            return Err(Error::Range {
                file: file_label(timeseries_path),
                line,
                message: format!("hour {hour} outside [1, {hours}]"),
            });
        }
        if let Some(known) = &known {
            if !known.contains(variable.as_str()) {
                return Err(Error::Schema(format!(
                    "{}:{line}: unknown variable '{variable}'",
                    file_label(timeseries_path)
                )));
            }
        }
        if !label_of.contains_key(&id) {
            return Err(Error::Schema(format!(
                "{}:{line}: patient '{id}' has no label",
                file_label(timeseries_path)
            )));
        }
        let key = (id.clone(), variable.clone(), hour);
        if let Some(&first) = seen.get(&key) {
            return Err(Error::Conflict {
                file: file_label(timeseries_path),
                key: format!("({id}, {variable}, {hour})"),
                first_line: first,
                second_line: line,
            });
        }
        seen.insert(key, line);
        rows.push((id, variable, hour, value));
    }

    let variable_names: Vec<String> = match &options.variables {
        Some(v) => v.clone(),
        None => rows
            .iter()
            .map(|r| r.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let var_index: HashMap<&str, usize> = variable_names
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let patient_index: HashMap<&str, usize> = order.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();

    let mut patients: Vec<RawPatient> = order
        .iter()
        .map(|id| RawPatient {
            id: id.clone(),
            series: vec![vec![None; hours]; variable_names.len()],
            statics: Vec::new(),
            label: label_of[id].0,
        })
        .collect();
    let mut has_rows = vec![false; patients.len()];
    for (id, variable, hour, value) in &rows {
        let n = patient_index[id.as_str()];
        patients[n].series[var_index[variable.as_str()]][hour - 1] = Some(*value);
        has_rows[n] = true;
    }
    if let Some(n) = has_rows.iter().position(|&h| !h) {
        return Err(Error::Schema(format!(
            "patient '{}' has a label but no series rows",
            patients[n].id
        )));
    }

    let static_names = match static_path {
        Some(path) => read_statics(path, &options.categorical, &patient_index, &mut patients)?,
        None => Vec::new(),
    };

    Ok(RawCohort {
        hours,
        variable_names,
        static_names,
        patients,
    })
}

fn read_statics(
    path: &Path,
    categorical: &[String],
    patient_index: &HashMap<&str, usize>,
    patients: &mut [RawPatient],
) -> Result<Vec<String>> {
    let mut reader = open_reader(path)?;
    let headers = check_header(&mut reader, path, &["patient_id"])?;
    let columns: Vec<String> = headers[1..].to_vec();
    let mut cells: Vec<Option<Vec<String>>> = vec![None; patients.len()];
    let mut line_of: HashMap<String, u64> = HashMap::new();
    for rec in records(&mut reader, path) {
        let (line, rec) = rec?;
        let id = rec.get(0).unwrap_or("").to_owned();
        let Some(&n) = patient_index.get(id.as_str()) else {
            return Err(Error::Schema(format!(
                "{}:{line}: patient '{id}' has no label",
                file_label(path)
            )));
        };
        if let Some(&first) = line_of.get(&id) {
            return Err(Error::Conflict {
                file: file_label(path),
                key: format!("({id})"),
                first_line: first,
                second_line: line,
            });
        }
        line_of.insert(id, line);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                file: file_label(path),
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        cells[n] = Some(rec.iter().skip(1).map(str::to_owned).collect());
    }
    if let Some(n) = cells.iter().position(Option::is_none) {
        return Err(Error::Schema(format!("patient '{}' has no static row", patients[n].id)));
    }
    let cells: Vec<Vec<String>> = cells.into_iter().map(Option::unwrap).collect();

    let mut names = Vec::new();
    let mut encoded: Vec<Vec<f64>> = vec![Vec::new(); patients.len()];
    for (j, column) in columns.iter().enumerate() {
        if categorical.contains(column) {
            let levels: BTreeSet<&str> = cells
                .iter()
                .map(|row| row[j].as_str())
                .filter(|s| !s.is_empty())
                .collect();
            for level in &levels {
                names.push(format!("{column}={level}"));
                for (row, enc) in cells.iter().zip(encoded.iter_mut()) {
                    enc.push(if row[j] == *level { 1.0 } else { 0.0 });
                }
            }
        } else {
            let mut parsed: Vec<Option<f64>> = Vec::with_capacity(cells.len());
            for (n, row) in cells.iter().enumerate() {
                let raw = row[j].as_str();
                if raw.is_empty() {
                    parsed.push(None);
                } else {
                    let v: f64 = raw.parse().map_err(|_| Error::Parse {
                        file: file_label(path),
                        line: line_of[&patients[n].id],
                        message: format!("cannot parse numeric static '{column}' from '{raw}'"),
                    })?;
                    parsed.push(Some(v));
                }
            }
            let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
            let fill = median(&mut present).unwrap_or(0.0);
            names.push(column.clone());
            for (v, enc) in parsed.iter().zip(encoded.iter_mut()) {
                enc.push(v.unwrap_or(fill));
            }
        }
    }
    for (patient, enc) in patients.iter_mut().zip(encoded) {
        patient.statics = enc;
    }
    Ok(names)
}

/// Writes a raw cohort as the three CSV files. Statics are written as numbers
/// (one-hot columns keep their `column=level` names).
pub fn write_csv(cohort: &RawCohort, timeseries: &Path, statics: &Path, labels: &Path) -> Result<()> {
    let mut ts = String::from("patient_id,variable,hour,value\n");
    let mut st = String::from("patient_id");
    for name in &cohort.static_names {
        st.push(',');
        st.push_str(name);
    }
    st.push('\n');
    let mut lb = String::from("patient_id,label\n");
    for p in &cohort.patients {
        for (d, series) in p.series.iter().enumerate() {
            for (h, v) in series.iter().enumerate() {
                if let Some(v) = v {
                    ts.push_str(&format!("{},{},{},{}\n", p.id, cohort.variable_names[d], h + 1, v));
                }
            }
        }
        st.push_str(&p.id);
        for v in &p.statics {
            st.push_str(&format!(",{v}"));
        }
        st.push('\n');
        lb.push_str(&format!("{},{}\n", p.id, p.label));
    }
    for (path, body) in [(timeseries, ts), (statics, st), (labels, lb)] {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
