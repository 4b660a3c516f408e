//! JSON input schemas: count tables (`raw_phase` or `counts`) and binary
//! game definitions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{reconstruct_counts, Angles, CountsTable, RawPhaseMatrix, OUTCOMES, SETTINGS};
use crate::witness::{BinaryGame, GameInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    RawPhase,
    Counts,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_phase" => Ok(TableFormat::RawPhase),
            "counts" => Ok(TableFormat::Counts),
            other => Err(Error::invalid(format!("unknown table format {other:?}"))),
        }
    }
}

/// Phase-scan matrix with rows `alpha_1, alpha_1+pi, alpha_2, alpha_2+pi`
/// and columns `beta_1, beta_1+pi, beta_2, beta_2+pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPhaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration_time_s: Option<f64>,
    pub row_labels: [String; 4],
    pub col_labels: [String; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Angles>,
    pub matrix: [[u64; 4]; 4],
}

/// Explicit 16-cell map keyed `"x,y,a,b"` with `a, b` in `{"+", "-"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TableFile {
    RawPhase(RawPhaseFile),
    Counts(CountsFile),
}

/// A parsed table together with its raw matrix when one was given.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub format: TableFormat,
    pub counts: CountsTable,
    pub raw: Option<RawPhaseMatrix>,
    pub angles: Angles,
}

pub fn cell_key(x: usize, y: usize, a: i8, b: i8) -> String {
    let sign = |v: i8| if v > 0 { '+' } else { '-' };
    format!("{x},{y},{},{}", sign(a), sign(b))
}

impl CountsFile {
    pub fn from_table(c: &CountsTable, source: Option<String>) -> Self {
        let mut counts = BTreeMap::new();
        for &(x, y) in &SETTINGS {
            for &(a, b) in &OUTCOMES {
                counts.insert(cell_key(x, y, a, b), c.get(x, y, a, b));
            }
        }
        Self { source, counts }
    }

    pub fn to_table(&self) -> Result<CountsTable> {
        for key in self.counts.keys() {
            let valid = SETTINGS
                .iter()
                .any(|&(x, y)| OUTCOMES.iter().any(|&(a, b)| cell_key(x, y, a, b) == *key));
            if !valid {
                return Err(Error::invalid(format!("unknown counts key {key:?}")));
            }
        }
        let mut missing = Vec::new();
        let table = CountsTable::from_fn(|x, y, a, b| {
            let key = cell_key(x, y, a, b);
            match self.counts.get(&key) {
                Some(&v) => v,
                None => {
                    missing.push(key);
                    0
                }
            }
        });
        if !missing.is_empty() {
            return Err(Error::invalid(format!("missing counts keys {missing:?}")));
        }
        CountsTable::new(*table.as_array())
    }
}

impl RawPhaseFile {
    pub fn to_matrix(&self) -> RawPhaseMatrix {
        RawPhaseMatrix {
            n: self.matrix,
            angles: self.angles.unwrap_or_default(),
        }
    }
}

impl TableFile {
    pub fn load(self) -> Result<LoadedTable> {
        match self {
            TableFile::RawPhase(f) => {
                let raw = f.to_matrix();
                let counts = reconstruct_counts(&raw);
                if counts.total() == 0 {
                    return Err(Error::invalid("raw phase matrix is all zero"));
                }
                Ok(LoadedTable {
                    format: TableFormat::RawPhase,
                    counts,
                    angles: raw.angles,
                    raw: Some(raw),
                })
            }
            TableFile::Counts(f) => Ok(LoadedTable {
                format: TableFormat::Counts,
                counts: f.to_table()?,
                raw: None,
                angles: Angles::wang(),
            }),
        }
    }
}

/// Parses a table file; with `format` given the `"format"` tag may be
/// omitted from the document.
pub fn parse_table(text: &str, format: Option<TableFormat>) -> Result<LoadedTable> {
    #[derive(Deserialize)]
    struct Tag {
        format: TableFormat,
    }
    // Read the tag first, then the body directly, so errors keep line numbers.
    let format = match format {
        Some(f) => f,
        None => serde_json::from_str::<Tag>(text)?.format,
    };
    let file = match format {
        TableFormat::RawPhase => TableFile::RawPhase(serde_json::from_str(text)?),
        TableFormat::Counts => TableFile::Counts(serde_json::from_str(text)?),
    };
    file.load()
}

pub fn read_table(path: &Path, format: Option<TableFormat>) -> Result<LoadedTable> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, format).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInputSpec {
    pub x: Vec<u8>,
    pub weight: f64,
    /// One 0/1 entry per output tuple, party 0 most significant.
    pub wins: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(default)]
    pub name: String,
    pub parties: usize,
    pub inputs: Vec<GameInputSpec>,
}

impl GameFile {
    pub fn to_game(&self) -> Result<BinaryGame> {
        let total: f64 = self.inputs.iter().map(|i| i.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(
                "game input weights must have positive total",
            ));
        }
        let support = self
            .inputs
            .iter()
            .map(|i| {
                if i.wins.iter().any(|&w| w > 1) {
                    return Err(Error::invalid("win table entries must be 0 or 1"));
                }
                Ok(GameInput {
                    inputs: i.x.clone(),
                    prob: i.weight / total,
                    wins: i.wins.iter().map(|&w| w == 1).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryGame::from_truth_table(self.parties, support)
    }
}

pub fn read_game(path: &Path) -> Result<BinaryGame> {
    let text = std::fs::read_to_string(path)?;
    let file: GameFile = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    file.to_game()
}

/// Bundled phase-scan table, byte-for-byte as shipped in `data/`.
pub const WANG_PHASE_SCAN_JSON: &str = include_str!("../data/wang_phase_scan.json");

/// Bundled three-party GHZ game definition.
pub const GHZ_GAME_JSON: &str = include_str!("../data/ghz_game.json");
