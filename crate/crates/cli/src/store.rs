//! The intermediate store written by `ingest`.
//!
//! ```text
//! <store>/manifest.json        instruments, markets, date ranges, row counts
//! <store>/calendar.csv         session calendar
//! <store>/meta.csv             accepted metadata rows
//! <store>/bars/<code>.csv      validated bars on the ingest schema
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use fluxscale::ingest::{parse_bars, parse_calendar, parse_metadata, IngestReport, MetadataReport, ParseOptions, PrefixMap};
use fluxscale::{InstrumentId, InstrumentMeta, Market, MinuteBar, SessionCalendar};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub code: InstrumentId,
    /// From metadata, else from the code prefix; `None` if neither applies.
    pub market: Option<Market>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub instruments: Vec<ManifestEntry>,
    pub ingest: IngestReport,
    pub metadata: MetadataReport,
}

pub struct Store {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub calendar: SessionCalendar,
    pub meta: Vec<InstrumentMeta>,
}

impl Store {
    pub fn open(root: &Path) -> Result<Store, CliError> {
        let manifest_path = root.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| CliError::Generic(format!("cannot read {}: {e}", manifest_path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Schema(format!("{}: {e}", manifest_path.display())))?;
        let calendar = parse_calendar(open(&root.join("calendar.csv"))?)?;
        let (meta, _) = parse_metadata(open(&root.join("meta.csv"))?, &PrefixMap::default())?;
        Ok(Store {
            root: root.to_path_buf(),
            manifest,
            calendar,
            meta,
        })
    }

    pub fn bar_path(&self, code: InstrumentId) -> PathBuf {
        self.root.join("bars").join(format!("{code}.csv"))
    }

    pub fn load_bars(&self, code: InstrumentId) -> Result<Vec<MinuteBar>, CliError> {
        let (mut bars, _) = parse_bars(open(&self.bar_path(code))?, &self.calendar, &ParseOptions::default())?;
        Ok(bars.remove(&code).unwrap_or_default())
    }

    /// Metadata for grouping: stored rows, plus market-only rows for
    /// instruments that had no metadata but a known market.
    pub fn grouping_meta(&self) -> Vec<InstrumentMeta> {
        let mut by_code: BTreeMap<InstrumentId, InstrumentMeta> = self.meta.iter().map(|m| (m.code, m.clone())).collect();
        for entry in &self.manifest.instruments {
            if let Some(market) = entry.market {
                by_code.entry(entry.code).or_insert_with(|| InstrumentMeta::new(entry.code, market));
            }
        }
        by_code.into_values().collect()
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 16, f))
        .map_err(|e| CliError::Generic(format!("cannot open {}: {e}", path.display())))
}
