use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    CaseRecord, DatasetError, FeatureRow, FeatureTable, Laterality, View, FEATURE_DIM,
};

/// Magic prefix of the flat binary feature format.
pub const FEATURE_MAGIC: &[u8; 4] = b"MMFV";

const METADATA_COLUMNS: [&str; 7] = [
    "patient_id",
    "image_id",
    "laterality",
    "view",
    "age",
    "implant",
    "cancer",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(row: usize, column: &str, value: &str) -> DatasetError {
    DatasetError::BadValue {
        row,
        column: column.to_string(),
        value: value.to_string(),
    }
}

fn parse_flag(row: usize, column: &str, value: &str) -> Result<bool, DatasetError> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(bad(row, column, value)),
    }
}

/// Reads the per-image metadata CSV. Extra columns are ignored; `row` in
/// errors counts data rows from 1.
pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_metadata(file)
}

pub(crate) fn read_metadata(reader: impl Read) -> Result<Vec<CaseRecord>, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(METADATA_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))?;
    }
    let mut out = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let patient_id = field(0);
        let image_id = field(1);
        if patient_id.is_empty() {
            return Err(bad(row, "patient_id", patient_id));
        }
        if image_id.is_empty() {
            return Err(bad(row, "image_id", image_id));
        }
        let laterality = match field(2) {
            "L" => Laterality::L,
            "R" => Laterality::R,
            other => return Err(bad(row, "laterality", other)),
        };
        let view = match field(3) {
            "MLO" => View::Mlo,
            "CC" => View::Cc,
            other => return Err(bad(row, "view", other)),
        };
        let age = match field(4) {
            "" => None,
            text => {
                let age: f64 = text.parse().map_err(|_| bad(row, "age", text))?;
                if !(age > 0.0 && age < 130.0) {
                    return Err(bad(row, "age", text));
                }
                Some(age)
            }
        };
        out.push(CaseRecord {
            patient_id: patient_id.to_string(),
            image_id: image_id.to_string(),
            laterality,
            view,
            age,
            implant: parse_flag(row, "implant", field(5))?,
            cancer: parse_flag(row, "cancer", field(6))?,
        });
    }
    Ok(out)
}

pub fn write_metadata(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut csv = csv::Writer::from_writer(BufWriter::new(file));
    csv.write_record(METADATA_COLUMNS)?;
    for r in records {
        let age = r.age.map(|a| a.to_string()).unwrap_or_default();
        csv.write_record([
            r.patient_id.as_str(),
            r.image_id.as_str(),
            r.laterality.as_str(),
            r.view.as_str(),
            age.as_str(),
            if r.implant { "1" } else { "0" },
            if r.cancer { "1" } else { "0" },
        ])?;
    }
    csv.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads a feature table, either CSV (`image_id,f0..f999`) or the `MMFV`
/// binary layout, chosen by the first four bytes.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable, DatasetError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        read_features_bin(&bytes)
    } else {
        read_features_csv(bytes.as_slice())
    }
}

pub(crate) fn read_features_csv(reader: impl Read) -> Result<FeatureTable, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.get(0) != Some("image_id") {
        return Err(DatasetError::MissingColumn("image_id".into()));
    }
    for i in 0..FEATURE_DIM {
        if headers.get(i + 1) != Some(format!("f{i}").as_str()) {
            return Err(DatasetError::MissingColumn(format!("f{i}")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let image_id = record.get(0).unwrap_or("").to_string();
        if image_id.is_empty() {
            return Err(bad(i + 1, "image_id", ""));
        }
        if record.len() != FEATURE_DIM + 1 {
            return Err(DatasetError::WidthMismatch {
                image_id,
                width: record.len().saturating_sub(1),
            });
        }
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, v)| {
                v.trim()
                    .parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(i + 1, &format!("f{j}"), v))
            })
            .collect::<Result<Vec<f32>, _>>()?;
        rows.push(FeatureRow { image_id, values });
    }
    FeatureTable::new(rows)
}

fn read_features_bin(bytes: &[u8]) -> Result<FeatureTable, DatasetError> {
    let truncated = || DatasetError::BadFeatureFile("truncated".into());
    let mut pos = FEATURE_MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8], DatasetError> {
        let out = bytes.get(pos..pos + n).ok_or_else(truncated)?;
        pos += n;
        Ok(out)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
    let count = u32_at(take(4)?);
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id_len = u32_at(take(4)?);
        let image_id = std::str::from_utf8(take(id_len)?)
            .map_err(|_| DatasetError::BadFeatureFile("image id is not UTF-8".into()))?
            .to_string();
        let values = take(FEATURE_DIM * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        rows.push(FeatureRow { image_id, values });
    }
    if pos != bytes.len() {
        return Err(DatasetError::BadFeatureFile(format!(
            "{} trailing bytes",
            bytes.len() - pos
        )));
    }
    FeatureTable::new(rows)
}

pub fn write_features_csv(path: impl AsRef<Path>, table: &FeatureTable) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut line = String::from("image_id");
    for i in 0..FEATURE_DIM {
        line.push_str(&format!(",f{i}"));
    }
    writeln!(out, "{line}").map_err(io_err(path))?;
    for row in table.rows() {
        line.clear();
        line.push_str(&row.image_id);
        for v in &row.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn write_features_bin(path: impl AsRef<Path>, table: &FeatureTable) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(io_err(path));
    write(FEATURE_MAGIC)?;
    write(&(table.len() as u32).to_le_bytes())?;
    for row in table.rows() {
        write(&(row.image_id.len() as u32).to_le_bytes())?;
        write(row.image_id.as_bytes())?;
        let floats: Vec<u8> = row.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        write(&floats)?;
    }
    out.flush().map_err(io_err(path))
}
