//! Result rows and the versioned CSV schema.

use std::io::{Read, Write};
use std::path::Path;

use crate::simgen::{fmt_f64, MechanismKind};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";

pub const HEADER: [&str; 14] = [
    "schema=1",
    "mechanism",
    "n",
    "d",
    "method",
    "capacity",
    "seed",
    "r2_train",
    "r2_val",
    "r2_test",
    "bayes_rate",
    "delta",
    "wall_time_s",
    "error",
];

/// One fitted model on one cell. `seed` is the repetition index.
///
/// `delta` is `r2_test − bayes_rate` when the Bayes rate is known and
/// `r2_test` minus the best score of the same repetition otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub mechanism: MechanismKind,
    pub n: usize,
    pub d: usize,
    pub method: String,
    pub capacity: Option<usize>,
    pub seed: usize,
    pub r2_train: Option<f64>,
    pub r2_val: Option<f64>,
    pub r2_test: Option<f64>,
    pub bayes_rate: Option<f64>,
    pub delta: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// Identifies the cell a record belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub mechanism: MechanismKind,
    pub n: usize,
    pub d: usize,
    pub method: String,
    pub rep: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(s: &str, field: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::SchemaMismatch(format!("cannot parse {field} value {s:?}")))
}

fn parse_req<T: std::str::FromStr>(s: &str, field: &str) -> Result<T> {
    parse_opt(s, field)?.ok_or_else(|| Error::SchemaMismatch(format!("{field} is empty")))
}

impl ExperimentRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            mechanism: self.mechanism,
            n: self.n,
            d: self.d,
            method: self.method.clone(),
            rep: self.seed,
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// `delta` when present, otherwise `r2_test`.
    pub fn score(&self) -> Option<f64> {
        self.delta.or(self.r2_test)
    }

    pub fn to_fields(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.mechanism.name().to_string(),
            self.n.to_string(),
            self.d.to_string(),
            self.method.clone(),
            self.capacity.map(|c| c.to_string()).unwrap_or_default(),
            self.seed.to_string(),
            opt(self.r2_train),
            opt(self.r2_val),
            opt(self.r2_test),
            opt(self.bayes_rate),
            opt(self.delta),
            fmt_f64(self.wall_time_s),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn from_fields(f: &csv::StringRecord) -> Result<Self> {
        if f.len() != HEADER.len() {
            return Err(Error::SchemaMismatch(format!("expected {} fields, found {}", HEADER.len(), f.len())));
        }
        if &f[0] != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!("unsupported schema version {:?}", &f[0])));
        }
        let mechanism =
            MechanismKind::parse(&f[1]).ok_or_else(|| Error::SchemaMismatch(format!("unknown mechanism {:?}", &f[1])))?;
        Ok(ExperimentRecord {
            mechanism,
            n: parse_req(&f[2], "n")?,
            d: parse_req(&f[3], "d")?,
            method: f[4].to_string(),
            capacity: parse_opt(&f[5], "capacity")?,
            seed: parse_req(&f[6], "seed")?,
            r2_train: parse_opt(&f[7], "r2_train")?,
            r2_val: parse_opt(&f[8], "r2_val")?,
            r2_test: parse_opt(&f[9], "r2_test")?,
            bayes_rate: parse_opt(&f[10], "bayes_rate")?,
            delta: parse_opt(&f[11], "delta")?,
            wall_time_s: parse_req(&f[12], "wall_time_s")?,
            error: Some(f[13].to_string()).filter(|s| !s.is_empty()),
        })
    }
}

pub fn write_header<W: Write>(w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER)?;
    wr.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

/// Serializes rows without a header.
pub fn encode_rows(records: &[ExperimentRecord]) -> Result<Vec<u8>> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        wr.write_record(r.to_fields())?;
    }
    wr.into_inner().map_err(|e| Error::SchemaMismatch(e.to_string()))
}

pub fn write_records<W: Write>(mut w: W, records: &[ExperimentRecord]) -> Result<()> {
    write_header(&mut w)?;
    w.write_all(&encode_rows(records)?).map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

/// Parses a results file. With `lenient`, unparseable rows are dropped
/// instead of failing, which is how a partially written tail is discarded.
pub fn read_records<R: Read>(r: R, lenient: bool) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::SchemaMismatch(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        match row.map_err(Error::from).and_then(|r| ExperimentRecord::from_fields(&r)) {
            Ok(rec) => out.push(rec),
            Err(_) if lenient => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(std::io::BufReader::new(f), false)
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn save_records_atomic(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = std::io::BufWriter::new(f);
        write_records(&mut w, records)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
