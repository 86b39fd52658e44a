//! Reader and writer for the standard dataset CSV schema.
//!
//! Columns: `id` (required); one column per protected attribute holding a
//! lowercase category token; optional `views` and `transcript`; features
//! `f_*`; raw rating counts `r_<label>`; binary labels `l_<label>`. Lines
//! starting with `#` before the header are provenance comments. Records end
//! in `\n` and fields are `"`-quoted only when needed.
//!
//! Columns are written in the order id, protected (by name), views,
//! transcript, features, raw ratings, labels. Floats use Rust's shortest
//! round-trip formatting, so write-then-read reproduces a dataset exactly.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dataset::{DatasetParts, GroupSpec, ProtectedColumn, TabularDataset};
use crate::error::{Error, Result};
use crate::labels::known_categories;

enum Column {
    Id,
    Views,
    Transcript,
    Feature,
    Raw(String),
    Label(String),
    Protected(String),
}

fn classify(header: &str) -> Column {
    match header {
        "id" => Column::Id,
        "views" => Column::Views,
        "transcript" => Column::Transcript,
        h if h.starts_with("f_") => Column::Feature,
        h if h.starts_with("r_") => Column::Raw(h[2..].to_string()),
        h if h.starts_with("l_") => Column::Label(h[2..].to_string()),
        h => Column::Protected(h.to_string()),
    }
}

fn parse_finite(token: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| {
        Error::InvalidData(format!("row {row}, column `{column}`: `{token}` is not a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidData(format!(
            "row {row}, column `{column}`: non-finite value `{token}`"
        )));
    }
    Ok(v)
}

/// Category order for an attribute: the known vocabulary order restricted to
/// observed tokens, then any other observed tokens sorted.
fn group_spec_for(attribute: &str, observed: &BTreeSet<String>) -> Result<GroupSpec> {
    let mut categories: Vec<String> = Vec::new();
    if let Some(known) = known_categories(attribute) {
        for k in known {
            if observed.contains(*k) {
                categories.push(k.to_string());
            }
        }
    }
    for o in observed {
        if !categories.contains(o) {
            categories.push(o.clone());
        }
    }
    GroupSpec::new(attribute, categories, 0)
}

pub fn read_csv<R: Read>(reader: R) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let kinds: Vec<Column> = headers.iter().map(|h| classify(h)).collect();
    let id_col = kinds
        .iter()
        .position(|k| matches!(k, Column::Id))
        .ok_or_else(|| Error::UnknownColumn("id".into()))?;

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let n = records.len();

    let mut feature_cols = Vec::new();
    let mut raw_cols = Vec::new();
    let mut label_cols = Vec::new();
    let mut protected_cols = Vec::new();
    let mut views_col = None;
    let mut transcript_col = None;
    for (i, kind) in kinds.iter().enumerate() {
        match kind {
            Column::Id => {}
            Column::Views => views_col = Some(i),
            Column::Transcript => transcript_col = Some(i),
            Column::Feature => feature_cols.push(i),
            Column::Raw(name) => raw_cols.push((i, name.clone())),
            Column::Label(name) => label_cols.push((i, name.clone())),
            Column::Protected(name) => protected_cols.push((i, name.clone())),
        }
    }

    let raw_names: Vec<String> = raw_cols.iter().map(|(_, n)| n.clone()).collect();
    let label_names: Vec<String> = label_cols.iter().map(|(_, n)| n.clone()).collect();
    if !raw_names.is_empty() && !label_names.is_empty() && raw_names != label_names {
        return Err(Error::InvalidData(
            "r_* and l_* columns name different labels".into(),
        ));
    }
    let names = if label_names.is_empty() { raw_names } else { label_names };

    let ids: Vec<String> = records.iter().map(|r| r[id_col].to_string()).collect();

    let mut features = Array2::zeros((n, feature_cols.len()));
    for (row, rec) in records.iter().enumerate() {
        for (j, &c) in feature_cols.iter().enumerate() {
            features[[row, j]] = parse_finite(&rec[c], &headers[c], row)?;
        }
    }

    let raw_ratings = if raw_cols.is_empty() {
        None
    } else {
        let mut m = Array2::zeros((n, raw_cols.len()));
        for (row, rec) in records.iter().enumerate() {
            for (j, (c, _)) in raw_cols.iter().enumerate() {
                m[[row, j]] = parse_finite(&rec[*c], &headers[*c], row)?;
            }
        }
        Some(m)
    };

    let labels = if label_cols.is_empty() {
        None
    } else {
        let mut m = Array2::zeros((n, label_cols.len()));
        for (row, rec) in records.iter().enumerate() {
            for (j, (c, _)) in label_cols.iter().enumerate() {
                m[[row, j]] = match rec[*c].trim() {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::InvalidData(format!(
                            "row {row}, column `{}`: label must be 0 or 1, got `{other}`",
                            headers[*c]
                        )))
                    }
                };
            }
        }
        Some(m)
    };

    let views = match views_col {
        Some(c) => Some(
            records
                .iter()
                .enumerate()
                .map(|(row, rec)| parse_finite(&rec[c], "views", row))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let transcripts =
        transcript_col.map(|c| records.iter().map(|rec| rec[c].to_string()).collect());

    let mut protected = Vec::new();
    for (c, name) in &protected_cols {
        let tokens: Vec<String> = records
            .iter()
            .map(|rec| rec[*c].trim().to_lowercase())
            .collect();
        if let Some(row) = tokens.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidData(format!(
                "row {row}: empty value for protected attribute `{name}`"
            )));
        }
        let observed: BTreeSet<String> = tokens.iter().cloned().collect();
        let spec = group_spec_for(name, &observed)?;
        let codes = tokens
            .iter()
            .map(|t| spec.index_of(t).expect("observed token"))
            .collect();
        protected.push(ProtectedColumn::new(spec, codes)?);
    }

    TabularDataset::new(DatasetParts {
        ids,
        feature_names: feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        features,
        protected,
        label_names: names,
        raw_ratings,
        labels,
        views,
        transcripts,
    })
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<TabularDataset> {
    read_csv(File::open(path)?)
}

/// Writes `ds` with optional `# `-prefixed comment lines above the header.
pub fn write_csv<W: Write>(ds: &TabularDataset, mut out: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);

    let mut header = vec!["id".to_string()];
    for col in ds.protected_columns() {
        header.push(col.spec().attribute().to_string());
    }
    if ds.views().is_some() {
        header.push("views".into());
    }
    if ds.transcripts().is_some() {
        header.push("transcript".into());
    }
    header.extend(ds.feature_names().iter().cloned());
    if ds.raw_ratings().is_some() {
        header.extend(ds.label_names().iter().map(|l| format!("r_{l}")));
    }
    if ds.labels().is_some() {
        header.extend(ds.label_names().iter().map(|l| format!("l_{l}")));
    }
    w.write_record(&header)?;

    let protected: Vec<_> = ds.protected_columns().collect();
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for row in 0..ds.n_rows() {
        record.clear();
        record.push(ds.ids()[row].clone());
        for col in &protected {
            record.push(col.category_of(row).to_string());
        }
        if let Some(v) = ds.views() {
            record.push(v[row].to_string());
        }
        if let Some(t) = ds.transcripts() {
            record.push(t[row].clone());
        }
        record.extend(ds.features().row(row).iter().map(f64::to_string));
        if let Some(raw) = ds.raw_ratings() {
            record.extend(raw.row(row).iter().map(f64::to_string));
        }
        if let Some(labels) = ds.labels() {
            record.extend(labels.row(row).iter().map(u8::to_string));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(
    ds: &TabularDataset,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    let file = std::io::BufWriter::new(File::create(path)?);
    write_csv(ds, file, comments)
}
