//! Cross-year risk alignment.
//!
//! Risks are renamed, merged and split between report years. A mapping table
//! assigns every `(year, per-year index)` a cross-year code such as `14a`;
//! codes sharing the numeric stem (`14`) describe the same underlying risk
//! family. Alignment compares the code families present in two snapshots.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::catalog::Risk;
use crate::error::{CarpError, Result};

const BUNDLED_MAPPING: &str = include_str!("../../data/wef_risk_mapping.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub numeric_code: String,
    pub year: String,
    pub year_index: String,
}

#[derive(Debug, Clone, Default)]
pub struct CrossYearMapping {
    entries: Vec<MappingEntry>,
    by_index: HashMap<(String, String), String>,
}

impl CrossYearMapping {
    pub fn from_entries(entries: Vec<MappingEntry>) -> Result<Self> {
        let mut by_index: HashMap<(String, String), String> = HashMap::new();
        for e in &entries {
            let key = (e.year.clone(), e.year_index.clone());
            if let Some(prev) = by_index.insert(key, e.numeric_code.clone()) {
                if prev != e.numeric_code {
                    return Err(CarpError::InvalidMapping(format!(
                        "{} index {} mapped to both {} and {}",
                        e.year, e.year_index, prev, e.numeric_code
                    )));
                }
            }
        }
        Ok(CrossYearMapping { entries, by_index })
    }

    /// Parses `numeric_code,year,year_index`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let entries = rdr
            .deserialize::<MappingEntry>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_entries(entries)
    }

    /// Risk index table for the 2013–2017 report networks.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_MAPPING.as_bytes()).expect("bundled mapping is valid")
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn code_for(&self, year: &str, year_index: &str) -> Option<&str> {
        self.by_index
            .get(&(year.to_string(), year_index.to_string()))
            .map(String::as_str)
    }

    /// Per-year indices present in `year`, sorted.
    pub fn indices_for_year(&self, year: &str) -> Vec<String> {
        let mut v: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.year == year)
            .map(|e| e.year_index.clone())
            .collect();
        v.sort();
        v
    }
}

/// Leading digits of a code: `14b` → `14`.
pub fn code_stem(code: &str) -> &str {
    let end = code
        .char_indices()
        .find(|(_, c)| !c.is_ascii_digit())
        .map_or(code.len(), |(i, _)| i);
    &code[..end]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodedRisk {
    pub code: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FamilyChange {
    pub from: Vec<CodedRisk>,
    pub to: Vec<CodedRisk>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    pub year_a: String,
    pub year_b: String,
    /// Same code in both years: `(year-a risk, year-b risk)`.
    pub matched: Vec<(CodedRisk, CodedRisk)>,
    /// Family present in year a only.
    pub vanished: Vec<CodedRisk>,
    /// Family present in year b only.
    pub emerged: Vec<CodedRisk>,
    /// Several year-a codes collapsed into one year-b code.
    pub merged: Vec<FamilyChange>,
    /// One year-a code divided into several year-b codes.
    pub split: Vec<FamilyChange>,
    /// One year-a code superseded by one differently lettered year-b code.
    pub replaced: Vec<FamilyChange>,
    /// Many-to-many re-organisation of a family.
    pub regrouped: Vec<FamilyChange>,
}

fn coded(year: &str, risks: &[Risk], mapping: &CrossYearMapping) -> Result<Vec<CodedRisk>> {
    let mut seen = BTreeSet::new();
    risks
        .iter()
        .map(|r| {
            let code = mapping
                .code_for(year, &r.id)
                .unwrap_or(r.numeric_code.as_str())
                .to_string();
            if !seen.insert(code.clone()) {
                return Err(CarpError::InvalidMapping(format!(
                    "code {code} used by two risks in {year}"
                )));
            }
            Ok(CodedRisk {
                code,
                id: r.id.clone(),
            })
        })
        .collect()
}

fn families(items: Vec<CodedRisk>) -> BTreeMap<String, Vec<CodedRisk>> {
    let mut out: BTreeMap<String, Vec<CodedRisk>> = BTreeMap::new();
    for c in items {
        out.entry(code_stem(&c.code).to_string()).or_default().push(c);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.code.cmp(&b.code));
    }
    out
}

/// Aligns two yearly catalogs. A risk's code comes from the mapping
/// (`year`, risk id as per-year index) and falls back to its catalog
/// `numeric_code`.
pub fn map_cross_year(
    year_a: &str,
    risks_a: &[Risk],
    year_b: &str,
    risks_b: &[Risk],
    mapping: &CrossYearMapping,
) -> Result<AlignmentReport> {
    let fam_a = families(coded(year_a, risks_a, mapping)?);
    let fam_b = families(coded(year_b, risks_b, mapping)?);
    let stems: BTreeSet<&String> = fam_a.keys().chain(fam_b.keys()).collect();

    let mut report = AlignmentReport {
        year_a: year_a.to_string(),
        year_b: year_b.to_string(),
        ..Default::default()
    };
    let empty = Vec::new();
    for stem in stems {
        let a = fam_a.get(stem).unwrap_or(&empty);
        let b = fam_b.get(stem).unwrap_or(&empty);
        let mut only_a = Vec::new();
        for ra in a {
            match b.iter().find(|rb| rb.code == ra.code) {
                Some(rb) => report.matched.push((ra.clone(), rb.clone())),
                None => only_a.push(ra.clone()),
            }
        }
        let only_b: Vec<CodedRisk> = b
            .iter()
            .filter(|rb| !a.iter().any(|ra| ra.code == rb.code))
            .cloned()
            .collect();
        match (only_a.len(), only_b.len()) {
            (0, 0) => {}
            (_, 0) => report.vanished.extend(only_a),
            (0, _) => report.emerged.extend(only_b),
            (1, 1) => report.replaced.push(FamilyChange { from: only_a, to: only_b }),
            (_, 1) => report.merged.push(FamilyChange { from: only_a, to: only_b }),
            (1, _) => report.split.push(FamilyChange { from: only_a, to: only_b }),
            _ => report.regrouped.push(FamilyChange { from: only_a, to: only_b }),
        }
    }
    Ok(report)
}
