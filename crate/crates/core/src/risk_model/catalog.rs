//! Risk catalogs, expert pair counts and the per-year risk network.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CarpError, Result};
use crate::graph::Graph;

/// The five report categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Economic,
    Environmental,
    Geopolitical,
    Societal,
    Technological,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Economic,
        Category::Environmental,
        Category::Geopolitical,
        Category::Societal,
        Category::Technological,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Economic => "economic",
            Category::Environmental => "environmental",
            Category::Geopolitical => "geopolitical",
            Category::Societal => "societal",
            Category::Technological => "technological",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CarpError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| CarpError::UnknownCategory(s.to_string()))
    }
}

/// How raw survey likelihoods become normalized likelihoods in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LikelihoodScale {
    /// `L = l / (scale_max + epsilon)`.
    Survey { scale_max: f64, epsilon: f64 },
    /// The catalog already carries values in (0, 1).
    PreNormalized,
}

impl Default for LikelihoodScale {
    fn default() -> Self {
        LikelihoodScale::Survey {
            scale_max: 5.0,
            epsilon: 0.5,
        }
    }
}

impl LikelihoodScale {
    pub fn normalize(&self, id: &str, raw: f64) -> Result<f64> {
        let invalid = |reason: String| CarpError::InvalidLikelihood {
            id: id.to_string(),
            reason,
        };
        match *self {
            LikelihoodScale::Survey { scale_max, epsilon } => {
                normalize_likelihood(raw, scale_max, epsilon).map_err(|e| match e {
                    CarpError::InvalidLikelihood { reason, .. } => invalid(reason),
                    other => other,
                })
            }
            LikelihoodScale::PreNormalized => {
                if raw.is_finite() && raw > 0.0 && raw < 1.0 {
                    Ok(raw)
                } else {
                    Err(invalid(format!("pre-normalized value {raw} outside (0, 1)")))
                }
            }
        }
    }
}

/// Maps a survey score onto the open unit interval.
///
/// The margin `epsilon` keeps the top of the scale strictly below one so
/// that `(1 - L)^x` and `ln(1 - L)` stay finite.
pub fn normalize_likelihood(raw: f64, scale_max: f64, epsilon: f64) -> Result<f64> {
    let invalid = |reason: String| CarpError::InvalidLikelihood {
        id: String::new(),
        reason,
    };
    if !(scale_max.is_finite() && scale_max > 0.0) {
        return Err(invalid(format!("scale maximum {scale_max} must be positive")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid(format!("epsilon {epsilon} must be positive")));
    }
    if !(raw.is_finite() && raw > 0.0 && raw <= scale_max) {
        return Err(invalid(format!("score {raw} outside (0, {scale_max}]")));
    }
    Ok(raw / (scale_max + epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Risk {
    pub id: String,
    /// Cross-year code such as `14a`.
    pub numeric_code: String,
    pub name: String,
    pub category: Category,
    pub raw_likelihood: f64,
    pub likelihood: f64,
    /// Ingested when present, not used by the dynamics.
    pub impact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertPairCount {
    pub risk_a: String,
    pub risk_b: String,
    pub count: u32,
}

#[derive(Debug, Deserialize)]
struct RiskRecord {
    id: String,
    numeric_code: String,
    name: String,
    category: String,
    likelihood: f64,
    #[serde(default)]
    impact: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct PairRecord {
    risk_a: String,
    risk_b: String,
    count: u32,
}

/// One year's risk network.
///
/// Dynamics use the unweighted `graph`; `weights` are kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskNetwork {
    pub year: String,
    pub risks: Vec<Risk>,
    pub graph: Graph,
    /// Canonical pair counts: `risk_a` precedes `risk_b` in catalog order,
    /// sorted by that order, zero counts dropped.
    pub pair_counts: Vec<ExpertPairCount>,
    weights: Vec<f64>,
}

impl RiskNetwork {
    /// Assembles a network from parsed risks and pair counts.
    pub fn from_parts(
        year: impl Into<String>,
        risks: Vec<Risk>,
        pairs: Vec<ExpertPairCount>,
    ) -> Result<Self> {
        if risks.is_empty() {
            return Err(CarpError::EmptyCatalog);
        }
        let mut index = HashMap::with_capacity(risks.len());
        for (i, r) in risks.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(CarpError::DuplicateRisk(r.id.clone()));
            }
        }
        let n = risks.len();
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for p in &pairs {
            let a = *index
                .get(&p.risk_a)
                .ok_or_else(|| CarpError::UnknownRisk(p.risk_a.clone()))?;
            let b = *index
                .get(&p.risk_b)
                .ok_or_else(|| CarpError::UnknownRisk(p.risk_b.clone()))?;
            if a == b {
                return Err(CarpError::InvalidPair(format!(
                    "risk `{}` paired with itself",
                    p.risk_a
                )));
            }
            let key = (a.min(b), a.max(b));
            match counts.insert(key, p.count) {
                Some(prev) if prev != p.count => {
                    return Err(CarpError::InvalidPair(format!(
                        "conflicting counts {prev} and {} for `{}`-`{}`",
                        p.count, p.risk_a, p.risk_b
                    )));
                }
                _ => {}
            }
        }
        counts.retain(|_, c| *c > 0);
        let pair_max = counts.values().copied().max().unwrap_or(0);
        let mut weights = vec![0.0; n * n];
        let mut edges = Vec::with_capacity(counts.len());
        let mut canonical = Vec::with_capacity(counts.len());
        for (&(a, b), &c) in &counts {
            let w = (f64::from(c) / f64::from(pair_max)).sqrt();
            weights[a * n + b] = w;
            weights[b * n + a] = w;
            edges.push((a, b));
            canonical.push(ExpertPairCount {
                risk_a: risks[a].id.clone(),
                risk_b: risks[b].id.clone(),
                count: c,
            });
        }
        let graph = Graph::from_edges(n, &edges)?;
        Ok(RiskNetwork {
            year: year.into(),
            risks,
            graph,
            pair_counts: canonical,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.risks.iter().position(|r| r.id == id)
    }

    pub fn likelihoods(&self) -> Vec<f64> {
        self.risks.iter().map(|r| r.likelihood).collect()
    }

    pub fn categories(&self) -> Vec<Category> {
        self.risks.iter().map(|r| r.category).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.risks.iter().map(|r| r.id.clone()).collect()
    }

    /// Normalized edge weight `sqrt(count / pair_max)`, zero off-edge.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.risks.len() + b]
    }

    pub fn pair_max(&self) -> u32 {
        self.pair_counts.iter().map(|p| p.count).max().unwrap_or(0)
    }

    /// Same risks with a replaced likelihood vector (graph and weights kept).
    pub fn with_likelihoods(&self, likelihoods: &[f64]) -> Result<Self> {
        if likelihoods.len() != self.len() {
            return Err(CarpError::DimensionMismatch {
                expected: self.len(),
                actual: likelihoods.len(),
            });
        }
        let mut out = self.clone();
        for (r, &l) in out.risks.iter_mut().zip(likelihoods) {
            r.likelihood = l;
        }
        Ok(out)
    }

    pub fn write_risks_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "numeric_code", "name", "category", "likelihood"])?;
        for r in &self.risks {
            w.write_record([
                r.id.as_str(),
                r.numeric_code.as_str(),
                r.name.as_str(),
                r.category.as_str(),
                &format!("{}", r.raw_likelihood),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pairs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["risk_a", "risk_b", "count"])?;
        for p in &self.pair_counts {
            w.write_record([p.risk_a.as_str(), p.risk_b.as_str(), &p.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses a `id,numeric_code,name,category,likelihood` catalog.
pub fn load_risk_catalog<R: Read>(reader: R, scale: LikelihoodScale) -> Result<Vec<Risk>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut risks = Vec::new();
    for rec in rdr.deserialize::<RiskRecord>() {
        let rec = rec?;
        let category = rec.category.parse()?;
        let likelihood = scale.normalize(&rec.id, rec.likelihood)?;
        risks.push(Risk {
            id: rec.id,
            numeric_code: rec.numeric_code,
            name: rec.name,
            category,
            raw_likelihood: rec.likelihood,
            likelihood,
            impact: rec.impact,
        });
    }
    if risks.is_empty() {
        return Err(CarpError::EmptyCatalog);
    }
    Ok(risks)
}

pub fn load_pair_counts<R: Read>(reader: R) -> Result<Vec<ExpertPairCount>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<PairRecord>()
        .map(|rec| {
            let rec = rec?;
            Ok(ExpertPairCount {
                risk_a: rec.risk_a,
                risk_b: rec.risk_b,
                count: rec.count,
            })
        })
        .collect()
}

/// Reads a risk catalog and its pair counts into a network.
pub fn load_network<R1: Read, R2: Read>(
    year: &str,
    catalog: R1,
    pairs: R2,
    scale: LikelihoodScale,
) -> Result<RiskNetwork> {
    let risks = load_risk_catalog(catalog, scale)?;
    let pairs = load_pair_counts(pairs)?;
    RiskNetwork::from_parts(year, risks, pairs)
}

pub fn load_network_files(
    year: &str,
    catalog: &Path,
    pairs: &Path,
    scale: LikelihoodScale,
) -> Result<RiskNetwork> {
    load_network(
        year,
        std::fs::File::open(catalog)?,
        std::fs::File::open(pairs)?,
        scale,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CATALOG: &str = "id,numeric_code,name,category,likelihood\n\
        A,01,Fiscal crises,economic,4\n\
        B,11,Extreme weather,Environmental,5\n\
        C,17,State collapse,geopolitical,3\n";

    fn net(pairs: &str) -> Result<RiskNetwork> {
        load_network(
            "2013",
            CATALOG.as_bytes(),
            pairs.as_bytes(),
            LikelihoodScale::default(),
        )
    }

    #[test]
    fn weights_follow_square_root_of_count_ratio() {
        let n = net("risk_a,risk_b,count\nA,B,4\nB,C,1\n").unwrap();
        assert_eq!(n.weight(0, 1), 1.0);
        assert_eq!(n.weight(1, 2), 0.5);
        assert_eq!(n.weight(2, 1), 0.5);
        assert_eq!(n.weight(0, 2), 0.0);
        assert!(!n.graph.has_edge(0, 2));
        assert_eq!(n.pair_max(), 4);
    }

    #[test]
    fn zero_count_is_not_an_edge() {
        let n = net("risk_a,risk_b,count\nA,B,0\nB,C,3\n").unwrap();
        assert_eq!(n.graph.edge_count(), 1);
        assert_eq!(n.weight(0, 1), 0.0);
        assert_eq!(n.weight(1, 2), 1.0);
    }

    #[test]
    fn unknown_pair_id_rejected() {
        let err = net("risk_a,risk_b,count\nA,Z,1\n").unwrap_err();
        assert!(matches!(err, CarpError::UnknownRisk(id) if id == "Z"));
    }

    #[test]
    fn conflicting_symmetric_counts_rejected() {
        assert!(net("risk_a,risk_b,count\nA,B,2\nB,A,3\n").is_err());
        assert!(net("risk_a,risk_b,count\nA,B,2\nB,A,2\n").is_ok());
    }

    #[test]
    fn duplicate_and_empty_catalogs_rejected() {
        let dup = "id,numeric_code,name,category,likelihood\nA,1,x,economic,1\nA,2,y,economic,2\n";
        let err = load_network("y", dup.as_bytes(), "risk_a,risk_b,count\n".as_bytes(), LikelihoodScale::default())
            .unwrap_err();
        assert!(matches!(err, CarpError::DuplicateRisk(_)));
        let empty = "id,numeric_code,name,category,likelihood\n";
        let err = load_network("y", empty.as_bytes(), "risk_a,risk_b,count\n".as_bytes(), LikelihoodScale::default())
            .unwrap_err();
        assert!(matches!(err, CarpError::EmptyCatalog));
    }

    #[test]
    fn bad_category_rejected() {
        let cat = "id,numeric_code,name,category,likelihood\nA,1,x,financial,1\n";
        assert!(matches!(
            load_risk_catalog(cat.as_bytes(), LikelihoodScale::default()),
            Err(CarpError::UnknownCategory(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        let l = normalize_likelihood(5.0, 5.0, 0.5).unwrap();
        assert!((l - 5.0 / 5.5).abs() < 1e-15);
        assert!((l - 0.9091).abs() < 1e-4);
        assert!(normalize_likelihood(0.0, 5.0, 0.5).is_err());
        assert!(normalize_likelihood(5.1, 5.0, 0.5).is_err());
        assert!(normalize_likelihood(1.0, 5.0, 0.0).is_err());
        assert!(normalize_likelihood(1e-300, 5.0, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn pre_normalized_scale_passes_through() {
        let cat = "id,numeric_code,name,category,likelihood\nA,1,x,economic,0.25\n";
        let risks = load_risk_catalog(cat.as_bytes(), LikelihoodScale::PreNormalized).unwrap();
        assert_eq!(risks[0].likelihood, 0.25);
        let bad = "id,numeric_code,name,category,likelihood\nA,1,x,economic,1.0\n";
        assert!(load_risk_catalog(bad.as_bytes(), LikelihoodScale::PreNormalized).is_err());
    }

    #[test]
    fn impact_column_is_optional() {
        let cat = "id,numeric_code,name,category,likelihood,impact\nA,1,x,economic,3,4.5\n";
        let risks = load_risk_catalog(cat.as_bytes(), LikelihoodScale::default()).unwrap();
        assert_eq!(risks[0].impact, Some(4.5));
    }

    proptest! {
        #[test]
        fn normalized_likelihood_strictly_inside_unit_interval(
            scale_max in 1e-3f64..1e3,
            frac in 0.0f64..=1.0,
            epsilon in 1e-9f64..10.0,
        ) {
            let raw = (frac * scale_max).max(f64::MIN_POSITIVE);
            let l = normalize_likelihood(raw, scale_max, epsilon).unwrap();
            prop_assert!(l > 0.0 && l < 1.0);
        }

        #[test]
        fn normalization_is_monotone(a in 1e-6f64..7.0, b in 1e-6f64..7.0) {
            let la = normalize_likelihood(a, 7.0, 0.5).unwrap();
            let lb = normalize_likelihood(b, 7.0, 0.5).unwrap();
            if a < b { prop_assert!(la < lb); }
            if a > b { prop_assert!(la > lb); }
        }

        #[test]
        fn csv_round_trip_and_degree_sequence(
            counts in proptest::collection::vec(0u32..6, 10),
            scores in proptest::collection::vec(1u32..=5, 5),
        ) {
            let ids = ["r1", "r2", "r3", "r4", "r5"];
            let mut catalog = String::from("id,numeric_code,name,category,likelihood\n");
            for (i, id) in ids.iter().enumerate() {
                let cat = Category::ALL[i % 5];
                catalog.push_str(&format!("{id},{i:02},risk {i},{cat},{}\n", scores[i]));
            }
            let mut pairs = String::from("risk_a,risk_b,count\n");
            let mut expected_degree = [0usize; 5];
            let mut k = 0;
            for a in 0..5 {
                for b in (a + 1)..5 {
                    pairs.push_str(&format!("{},{},{}\n", ids[a], ids[b], counts[k]));
                    if counts[k] > 0 {
                        expected_degree[a] += 1;
                        expected_degree[b] += 1;
                    }
                    k += 1;
                }
            }
            let n = load_network("y", catalog.as_bytes(), pairs.as_bytes(), LikelihoodScale::default()).unwrap();
            prop_assert_eq!(n.graph.degrees(), expected_degree.to_vec());

            let mut risks_out = Vec::new();
            let mut pairs_out = Vec::new();
            n.write_risks_csv(&mut risks_out).unwrap();
            n.write_pairs_csv(&mut pairs_out).unwrap();
            let back = load_network("y", risks_out.as_slice(), pairs_out.as_slice(), LikelihoodScale::default()).unwrap();
            prop_assert_eq!(&back.risks, &n.risks);
            prop_assert_eq!(&back.graph, &n.graph);
            for a in 0..5 {
                for b in 0..5 {
                    prop_assert_eq!(back.weight(a, b), n.weight(a, b));
                }
            }
        }
    }
}
