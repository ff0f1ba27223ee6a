//! CSV ingestion (Stooq and two-column layouts) and the derived-data
//! artifact written by `volregime ingest`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volregime_core::marketdata::{
    build_windows, compute_returns, split_chronological, training_quantile, Date, MarketDataError,
    PricePoint, PriceSeries, ReturnObservation, SplitSpec, WindowSample,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("line {line}: {source}")]
    Validation {
        line: usize,
        #[source]
        source: MarketDataError,
    },
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error("unrecognized header {0:?}; expected Stooq or Date,Close layout")]
    UnknownLayout(String),
    #[error("artifact missing at {0}; run `volregime ingest` first")]
    MissingArtifact(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    /// Pick the layout from the header row.
    Auto,
    /// `Date,Open,High,Low,Close,Volume`; only Date and Close are used.
    Stooq,
    /// `Date,Close`.
    TwoColumn,
}

fn parse_date(text: &str, line: usize) -> Result<Date, IngestError> {
    let mut parts = text.trim().splitn(3, '-');
    let mut next = |name: &str| {
        parts
            .next()
            .and_then(|p| p.parse::<i32>().ok())
            .ok_or_else(|| IngestError::Malformed {
                line,
                detail: format!("bad {name} in date {text:?} (expected YYYY-MM-DD)"),
            })
    };
    let year = next("year")?;
    let month = next("month")?;
    let day = next("day")?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(IngestError::Malformed {
            line,
            detail: format!("date {text:?} out of range"),
        });
    }
    Ok(Date::new(year, month as u8, day as u8))
}

/// Loads daily closing prices. Unsorted rows are sorted with a warning flag
/// on the returned series; duplicate dates and non-positive closes fail.
pub fn load_prices(path: &Path, format: SourceFormat) -> Result<PriceSeries, IngestError> {
    let file = std::fs::File::open(path)
        .map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
    load_prices_from_reader_with_format(file, format)
}

/// As `load_prices`, over any reader, with layout auto-detection.
pub fn load_prices_from_reader<R: std::io::Read>(input: R) -> Result<PriceSeries, IngestError> {
    load_prices_from_reader_with_format(input, SourceFormat::Auto)
}

fn load_prices_from_reader_with_format<R: std::io::Read>(
    input: R,
    format: SourceFormat,
) -> Result<PriceSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Malformed { line: 1, detail: e.to_string() })?
        .clone();
    let lower: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    let close_col = match format {
        SourceFormat::Stooq => 4,
        SourceFormat::TwoColumn => 1,
        SourceFormat::Auto => match lower.iter().position(|h| h == "close") {
            Some(i) if lower.first().map(String::as_str) == Some("date") => i,
            _ => return Err(IngestError::UnknownLayout(headers.iter().collect::<Vec<_>>().join(","))),
        },
    };

    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.map_err(|e| IngestError::Malformed { line, detail: e.to_string() })?;
        let date_text = record
            .get(0)
            .ok_or_else(|| IngestError::Malformed { line, detail: "missing date column".into() })?;
        let close_text = record.get(close_col).ok_or_else(|| IngestError::Malformed {
            line,
            detail: format!("missing close column {close_col}"),
        })?;
        let close: f64 = close_text.parse().map_err(|_| IngestError::Malformed {
            line,
            detail: format!("unparseable close {close_text:?}"),
        })?;
        points.push(PricePoint { date: parse_date(date_text, line)?, close });
    }
    PriceSeries::new(points).map_err(|e| match e {
        MarketDataError::NonPositivePrice { row, close } => IngestError::Validation {
            line: row + 2,
            source: MarketDataError::NonPositivePrice { row, close },
        },
        other => IngestError::MarketData(other),
    })
}

/// Everything `ingest` derives from one price file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedData {
    pub dataset_id: String,
    pub window: usize,
    pub quantile: f64,
    pub returns: Vec<ReturnObservation>,
    pub split: SplitSpec,
    pub tau: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub source_was_unsorted: bool,
}

impl DerivedData {
    pub fn derive(
        prices: &PriceSeries,
        dataset_id: &str,
        window: usize,
        train_fraction: f64,
        quantile: f64,
    ) -> Result<Self, MarketDataError> {
        let returns = compute_returns(prices)?;
        let samples = build_windows(&returns, window)?;
        let (train, test, split) = split_chronological(&samples, train_fraction)?;
        let tau = training_quantile(&train, quantile)?;
        Ok(Self {
            dataset_id: dataset_id.to_string(),
            window,
            quantile,
            returns,
            split,
            tau,
            n_train: train.len(),
            n_test: test.len(),
            source_was_unsorted: prices.was_unsorted,
        })
    }

    pub fn windows(&self) -> Vec<WindowSample> {
        build_windows(&self.returns, self.window).expect("derived data was validated")
    }

    pub fn split_windows(&self) -> (Vec<WindowSample>, Vec<WindowSample>) {
        let samples = self.windows();
        let (train, test, _) = split_chronological(&samples, self.split.train_fraction)
            .expect("derived data was validated");
        (train, test)
    }

    pub fn variances(&self) -> Vec<f64> {
        self.returns.iter().map(|o| o.realized_variance).collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Writes returns/windows/split plus a checksum manifest under `dir`.
pub fn write_artifact(dir: &Path, derived: &DerivedData) -> Result<(), IngestError> {
    fs::create_dir_all(dir)
        .map_err(|e| IngestError::Io { path: dir.to_path_buf(), source: e })?;

    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

    let mut returns_csv = String::from("date,log_return,realized_variance\n");
    for obs in &derived.returns {
        returns_csv.push_str(&format!(
            "{},{:e},{:e}\n",
            obs.date, obs.log_return, obs.realized_variance
        ));
    }
    files.push(("returns.csv", returns_csv.into_bytes()));

    let mut windows_jsonl = String::new();
    for sample in derived.windows() {
        let line = serde_json::json!({
            "end_index": sample.end_index,
            "target": sample.target,
        });
        windows_jsonl.push_str(&line.to_string());
        windows_jsonl.push('\n');
    }
    files.push(("windows.jsonl", windows_jsonl.into_bytes()));

    let meta = serde_json::to_vec_pretty(derived).expect("derived data serializes");
    files.push(("derived.json", meta));

    let mut manifest = String::new();
    for (name, bytes) in &files {
        manifest.push_str(&format!("{}  {}\n", sha256_hex(bytes), name));
    }
    files.push(("checksums.txt", manifest.into_bytes()));

    for (name, bytes) in &files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path)
            .map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
        f.write_all(bytes)
            .map_err(|e| IngestError::Io { path, source: e })?;
    }
    Ok(())
}

/// Loads the artifact back; everything downstream of `ingest` starts here.
pub fn read_artifact(dir: &Path) -> Result<DerivedData, IngestError> {
    let path = dir.join("derived.json");
    if !path.exists() {
        return Err(IngestError::MissingArtifact(path));
    }
    let bytes = fs::read(&path).map_err(|e| IngestError::Io { path, source: e })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| IngestError::Malformed { line: 0, detail: e.to_string() })
}
