//! Parallel corpus ingestion, per-pair feature tables, and score
//! normalization.
//!
//! A [`ScoredCorpus`] is the central data structure of the crate: sentence
//! pairs, a column per feature, and (once computed) a per-pair aggregate
//! score `f = V · F` plus its offline percentile normalization. Scores are
//! aggregated over *raw* feature values — features are never rescaled before
//! weighting — and percentiles are assigned by global rank so that selecting
//! "percentile ≥ τ" is a deterministic top-slice of the corpus.
//!
//! Two ingestion formats are supported:
//!
//! * TSV: one pair per line, `source<TAB>target`, UTF-8, LF line endings
//!   (a trailing CR is tolerated);
//! * JSONL: one JSON object per line with string fields `src` and `tgt`.
//!
//! Both sides are whitespace-tokenized; a pair with an empty side is a data
//! error reported with its line number. Ids are assigned by input order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One aligned sentence pair, whitespace-tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    /// Unique id, assigned by input order on ingestion.
    pub id: u64,
    /// Source-side tokens; never empty.
    pub source: Vec<String>,
    /// Target-side tokens; never empty.
    pub target: Vec<String>,
}

impl SentencePair {
    /// Build a pair from raw text sides, tokenizing on whitespace.
    pub fn from_text(id: u64, source: &str, target: &str) -> Result<Self> {
        let source: Vec<String> = source.split_whitespace().map(str::to_owned).collect();
        let target: Vec<String> = target.split_whitespace().map(str::to_owned).collect();
        if source.is_empty() {
            return Err(Error::invalid(format!("pair {id}: empty source side")));
        }
        if target.is_empty() {
            return Err(Error::invalid(format!("pair {id}: empty target side")));
        }
        Ok(SentencePair { id, source, target })
    }

    /// Source side re-joined with single spaces (used for character-level
    /// features).
    pub fn source_text(&self) -> String {
        self.source.join(" ")
    }

    /// Target side re-joined with single spaces.
    pub fn target_text(&self) -> String {
        self.target.join(" ")
    }
}

/// Ordered per-pair feature values, materialized on demand from the corpus
/// feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// `(feature name, value)` in corpus column order.
    pub values: Vec<(String, f64)>,
}

/// Named feature weights `V`, kept sorted by feature name so that every
/// serialization and comparison is canonical.
///
/// Weighting is order-insensitive: scores are matched to corpus columns by
/// name, never by position.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Vec<(String, f64)>,
}

impl WeightVector {
    /// Build a weight vector; names must be distinct and values finite.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate weight name '{}'", w[0].0)));
            }
        }
        for (name, v) in &entries {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("weight '{name}'"),
                });
            }
        }
        Ok(WeightVector { entries })
    }

    /// The same value for every named feature.
    pub fn constant<S: AsRef<str>>(names: &[S], value: f64) -> Result<Self> {
        WeightVector::new(
            names
                .iter()
                .map(|n| (n.as_ref().to_owned(), value))
                .collect(),
        )
    }

    /// Weight 1 on `hot`, 0 elsewhere.
    pub fn basis<S: AsRef<str>>(names: &[S], hot: &str) -> Result<Self> {
        if !names.iter().any(|n| n.as_ref() == hot) {
            return Err(Error::invalid(format!("unknown feature '{hot}'")));
        }
        WeightVector::new(
            names
                .iter()
                .map(|n| {
                    let n = n.as_ref();
                    (n.to_owned(), if n == hot { 1.0 } else { 0.0 })
                })
                .collect(),
        )
    }

    /// Entries in canonical (name-sorted) order.
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// Number of weights.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when there are no weights.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The weight for `name`, if present.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Names in canonical order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (name, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}: {v}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = self
            .entries
            .iter()
            .map(|(n, v)| (n.as_str(), *v))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(d)?;
        WeightVector::new(map.into_iter().collect()).map_err(serde::de::Error::custom)
    }
}

/// Supported corpus file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `source<TAB>target` per line.
    Tsv,
    /// One `{"src": ..., "tgt": ...}` object per line.
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::invalid(format!(
                "unknown corpus format '{other}' (expected 'tsv' or 'jsonl')"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct JsonlPair {
    src: String,
    tgt: String,
}

/// Sentence pairs plus a per-pair feature table and (optionally) aggregate
/// scores with their percentile normalization.
///
/// The pair list and feature columns are shared behind [`Arc`]s, so cloning a
/// corpus to re-score it under a different weight vector is cheap and the
/// original is never disturbed — concurrent evaluations can each clone and
/// score independently.
#[derive(Debug, Clone)]
pub struct ScoredCorpus {
    pairs: Arc<Vec<SentencePair>>,
    feature_names: Arc<Vec<String>>,
    feature_cols: Arc<Vec<Vec<f64>>>,
    f: Option<Vec<f64>>,
    percentile: Option<Vec<f64>>,
    /// Pair positions sorted ascending by `(f, id)`; rebuilt with the
    /// percentiles.
    ranked: Option<Vec<usize>>,
}

impl ScoredCorpus {
    /// Wrap an in-memory pair list (ids must be distinct, sides non-empty).
    pub fn from_pairs(pairs: Vec<SentencePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("corpus must contain at least one pair"));
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if p.source.is_empty() || p.target.is_empty() {
                return Err(Error::invalid(format!("pair {}: empty side", p.id)));
            }
            if !seen.insert(p.id) {
                return Err(Error::invalid(format!("duplicate pair id {}", p.id)));
            }
        }
        Ok(ScoredCorpus {
            pairs: Arc::new(pairs),
            feature_names: Arc::new(Vec::new()),
            feature_cols: Arc::new(Vec::new()),
            f: None,
            percentile: None,
            ranked: None,
        })
    }

    /// Read a parallel corpus from disk. Ids are assigned by line order,
    /// starting at 0; blank trailing lines are not allowed mid-file.
    pub fn ingest_parallel(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(&shown, e))?;
        let reader = BufReader::new(file);

        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(&shown, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let id = pairs.len() as u64;
            let (src, tgt) = match format {
                CorpusFormat::Tsv => match line.split_once('\t') {
                    Some((s, t)) => (s.to_owned(), t.to_owned()),
                    None => {
                        return Err(Error::Parse {
                            path: shown,
                            line: lineno,
                            message: "expected 'source<TAB>target'".into(),
                        })
                    }
                },
                CorpusFormat::Jsonl => {
                    let rec: JsonlPair =
                        serde_json::from_str(line).map_err(|e| Error::Parse {
                            path: shown.clone(),
                            line: lineno,
                            message: format!("invalid JSON pair: {e}"),
                        })?;
                    (rec.src, rec.tgt)
                }
            };
            let pair = SentencePair::from_text(id, &src, &tgt).map_err(|_| Error::Parse {
                path: shown.clone(),
                line: lineno,
                message: "pair has an empty source or target side".into(),
            })?;
            pairs.push(pair);
        }
        if pairs.is_empty() {
            return Err(Error::EmptyInput { path: shown });
        }
        ScoredCorpus::from_pairs(pairs)
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// True when the corpus holds no pairs (never constructible via the
    /// public API; kept for clippy's sake).
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All pairs, in id order.
    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    /// The pair at `position` (positions follow input order, ids coincide
    /// with positions for ingested corpora).
    pub fn pair(&self, position: usize) -> &SentencePair {
        &self.pairs[position]
    }

    /// Feature column names, in the order columns were added.
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// One feature column, if present.
    pub fn feature_column(&self, name: &str) -> Option<&[f64]> {
        let idx = self.feature_names.iter().position(|n| n == name)?;
        Some(&self.feature_cols[idx])
    }

    /// The materialized feature vector of one pair.
    pub fn feature_vector(&self, position: usize) -> FeatureVector {
        FeatureVector {
            values: self
                .feature_names
                .iter()
                .zip(self.feature_cols.iter())
                .map(|(n, col)| (n.clone(), col[position]))
                .collect(),
        }
    }

    /// Aggregate scores `f`, if [`ScoredCorpus::aggregate`] has run.
    pub fn f(&self) -> Option<&[f64]> {
        self.f.as_deref()
    }

    /// Per-pair percentiles, if [`ScoredCorpus::percentile_normalize`] has run.
    pub fn percentile(&self) -> Option<&[f64]> {
        self.percentile.as_deref()
    }

    /// Pair positions sorted ascending by `(f, id)`, if normalized.
    pub fn ranked(&self) -> Option<&[usize]> {
        self.ranked.as_deref()
    }

    /// Add a computed feature column. The column must align with the pair
    /// list, contain only finite values, and use a fresh name.
    pub fn add_feature(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if self.feature_names.iter().any(|n| n == name) {
            return Err(Error::invalid(format!("feature '{name}' already present")));
        }
        if values.len() != self.pairs.len() {
            return Err(Error::invalid(format!(
                "feature '{name}' has {} values for {} pairs",
                values.len(),
                self.pairs.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature '{name}' at id {}", self.pairs[i].id),
            });
        }
        Arc::make_mut(&mut self.feature_names).push(name.to_owned());
        Arc::make_mut(&mut self.feature_cols).push(values);
        self.invalidate_scores();
        Ok(())
    }

    /// Join one externally computed feature from a TSV file of
    /// `id<TAB>value` lines. The feature name comes from the file stem unless
    /// `name` overrides it. Every corpus id must appear exactly once; unknown
    /// ids, duplicates, and non-finite values are data errors.
    pub fn join_external_features(
        &mut self,
        path: impl AsRef<Path>,
        name: Option<&str>,
    ) -> Result<()> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let feature = match name {
            Some(n) => n.to_owned(),
            None => path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_owned)
                .ok_or_else(|| {
                    Error::invalid(format!("cannot derive a feature name from '{shown}'"))
                })?,
        };

        let file = std::fs::File::open(path).map_err(|e| Error::io(&shown, e))?;
        let reader = BufReader::new(file);

        // Corpus position per id, so file order is irrelevant.
        let pos_of: std::collections::HashMap<u64, usize> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id, i))
            .collect();

        let mut values = vec![f64::NAN; self.pairs.len()];
        let mut filled = vec![false; self.pairs.len()];
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(&shown, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let (id_s, val_s) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: shown.clone(),
                line: lineno,
                message: "expected 'id<TAB>value'".into(),
            })?;
            let id: u64 = id_s.trim().parse().map_err(|_| Error::Parse {
                path: shown.clone(),
                line: lineno,
                message: format!("invalid id '{id_s}'"),
            })?;
            let value: f64 = val_s.trim().parse().map_err(|_| Error::Parse {
                path: shown.clone(),
                line: lineno,
                message: format!("invalid value '{val_s}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("feature '{feature}' at id {id}"),
                });
            }
            let &pos = pos_of.get(&id).ok_or_else(|| Error::UnknownId {
                feature: feature.clone(),
                id,
            })?;
            if filled[pos] {
                return Err(Error::DuplicateId {
                    feature: feature.clone(),
                    id,
                });
            }
            filled[pos] = true;
            values[pos] = value;
        }
        if let Some(pos) = filled.iter().position(|&b| !b) {
            return Err(Error::MissingFeature {
                feature,
                id: self.pairs[pos].id,
            });
        }
        self.add_feature(&feature, values)
    }

    /// Compute per-pair scores without touching the corpus: the weighted sum
    /// of raw feature values, matched to columns by name.
    pub fn aggregate_values(&self, v: &WeightVector) -> Result<Vec<f64>> {
        // Symmetric-difference check between weight names and columns.
        let mut missing: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| v.get(n).is_none())
            .cloned()
            .collect();
        let mut extra: Vec<String> = v
            .names()
            .filter(|n| !self.feature_names.iter().any(|f| f == n))
            .map(str::to_owned)
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            missing.sort();
            extra.sort();
            return Err(Error::FeatureMismatch { missing, extra });
        }

        let mut f = vec![0.0; self.pairs.len()];
        for (name, col) in self.feature_names.iter().zip(self.feature_cols.iter()) {
            let w = v.get(name).expect("name checked above");
            if w == 0.0 {
                continue;
            }
            for (acc, &x) in f.iter_mut().zip(col.iter()) {
                *acc += w * x;
            }
        }
        Ok(f)
    }

    /// Aggregate and store per-pair scores `f = V · F`. Any previously
    /// computed percentiles are dropped (they belong to the old scores).
    pub fn aggregate(&mut self, v: &WeightVector) -> Result<&[f64]> {
        let f = self.aggregate_values(v)?;
        self.f = Some(f);
        self.percentile = None;
        self.ranked = None;
        Ok(self.f.as_deref().unwrap())
    }

    /// Offline percentile normalization of the stored scores: pairs sorted
    /// ascending by `(f, id)` — ties broken by id, so the order is total and
    /// deterministic — and the pair at sort position `k` of `n` receives
    /// percentile `k/n`. Percentiles form a bijection onto
    /// `{0/n, 1/n, ..., (n-1)/n}`.
    pub fn percentile_normalize(&mut self) -> Result<()> {
        let f = self
            .f
            .as_ref()
            .ok_or_else(|| Error::InvalidState("scores not computed; aggregate first".into()))?;
        let ranking = Ranking::from_scores(&self.pairs, f);
        self.percentile = Some(ranking.percentile);
        self.ranked = Some(ranking.order);
        Ok(())
    }

    /// Aggregate + normalize in one step, leaving the corpus fully scored.
    pub fn score_with(&mut self, v: &WeightVector) -> Result<()> {
        self.aggregate(v)?;
        self.percentile_normalize()
    }

    fn invalidate_scores(&mut self) {
        self.f = None;
        self.percentile = None;
        self.ranked = None;
    }
}

/// Rank metadata shared by percentile normalization and threshold reports.
pub(crate) struct Ranking {
    /// Pair positions sorted ascending by `(f, id)`.
    pub order: Vec<usize>,
    /// Percentile per pair position.
    pub percentile: Vec<f64>,
}

impl Ranking {
    pub fn from_scores(pairs: &[SentencePair], f: &[f64]) -> Ranking {
        debug_assert_eq!(pairs.len(), f.len());
        let n = pairs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| {
            f[a].total_cmp(&f[b]).then_with(|| pairs[a].id.cmp(&pairs[b].id))
        });
        let mut percentile = vec![0.0; n];
        for (rank, &pos) in order.iter().enumerate() {
            percentile[pos] = rank as f64 / n as f64;
        }
        Ranking { order, percentile }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn pair(id: u64, src: &str, tgt: &str) -> SentencePair {
        SentencePair::from_text(id, src, tgt).unwrap()
    }

    fn small_corpus() -> ScoredCorpus {
        ScoredCorpus::from_pairs(vec![
            pair(0, "a b", "x y"),
            pair(1, "c d", "z w"),
            pair(2, "e f", "u v"),
        ])
        .unwrap()
    }

    #[test]
    fn ingests_tsv_with_sequential_ids() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "ich bin\ti am").unwrap();
        writeln!(tmp, "du bist\tyou are").unwrap();
        writeln!(tmp, "er ist\the is").unwrap();
        let corpus = ScoredCorpus::ingest_parallel(tmp.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(
            corpus.pairs().iter().map(|p| p.id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(corpus.pair(1).source, vec!["du", "bist"]);
        assert_eq!(corpus.pair(2).target, vec!["he", "is"]);
    }

    #[test]
    fn jsonl_and_tsv_agree_on_the_same_data() {
        let mut tsv = tempfile::NamedTempFile::new().unwrap();
        writeln!(tsv, "ich bin\ti am").unwrap();
        writeln!(tsv, "du bist\tyou are").unwrap();
        let mut jsonl = tempfile::NamedTempFile::new().unwrap();
        writeln!(jsonl, r#"{{"src": "ich bin", "tgt": "i am"}}"#).unwrap();
        writeln!(jsonl, r#"{{"src": "du bist", "tgt": "you are"}}"#).unwrap();

        let a = ScoredCorpus::ingest_parallel(tsv.path(), CorpusFormat::Tsv).unwrap();
        let b = ScoredCorpus::ingest_parallel(jsonl.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(a.pairs(), b.pairs());
    }

    #[test]
    fn empty_target_is_an_error_with_line_number() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "gut\tgood").unwrap();
        writeln!(tmp, "schlecht\t").unwrap();
        let err = ScoredCorpus::ingest_parallel(tmp.path(), CorpusFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_tab_is_an_error() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "no separator here").unwrap();
        let err = ScoredCorpus::ingest_parallel(tmp.path(), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_file_is_an_error() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        let err = ScoredCorpus::ingest_parallel(tmp.path(), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { .. }));
    }

    #[test]
    fn join_adds_one_dimension_everywhere() {
        let mut corpus = small_corpus();
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "0\t0.5").unwrap();
        writeln!(tmp, "2\t-1.25").unwrap();
        writeln!(tmp, "1\t3.0").unwrap();
        corpus
            .join_external_features(tmp.path(), Some("bert"))
            .unwrap();
        assert_eq!(corpus.feature_names(), ["bert"]);
        assert_eq!(corpus.feature_column("bert").unwrap(), &[0.5, 3.0, -1.25]);
        assert_eq!(
            corpus.feature_vector(2).values,
            vec![("bert".to_owned(), -1.25)]
        );
    }

    #[test]
    fn join_with_missing_id_names_feature_and_id() {
        let mut corpus = small_corpus();
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "0\t0.5").unwrap();
        writeln!(tmp, "1\t1.5").unwrap();
        let err = corpus
            .join_external_features(tmp.path(), Some("bert"))
            .unwrap_err();
        assert_eq!(err.to_string(), "missing feature 'bert' for id 2");
    }

    #[test]
    fn join_rejects_duplicates_and_unknown_ids() {
        let mut corpus = small_corpus();
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "0\t0.5").unwrap();
        writeln!(tmp, "0\t0.6").unwrap();
        let err = corpus
            .join_external_features(tmp.path(), Some("dup"))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { id: 0, .. }));

        let mut corpus = small_corpus();
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "9\t0.5").unwrap();
        let err = corpus
            .join_external_features(tmp.path(), Some("ext"))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownId { id: 9, .. }));
    }

    #[test]
    fn join_rejects_non_finite_values() {
        let mut corpus = small_corpus();
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "0\tNaN").unwrap();
        writeln!(tmp, "1\t0").unwrap();
        writeln!(tmp, "2\t0").unwrap();
        let err = corpus
            .join_external_features(tmp.path(), Some("bad"))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn feature_name_defaults_to_file_stem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("similarity.tsv");
        std::fs::write(&path, "0\t1\n1\t2\n2\t3\n").unwrap();
        let mut corpus = small_corpus();
        corpus.join_external_features(&path, None).unwrap();
        assert_eq!(corpus.feature_names(), ["similarity"]);
    }

    #[test]
    fn aggregate_is_the_dot_product() {
        // F = (0.3, 0.4), V = (0.5, 0.25) -> f = 0.15 + 0.10 = 0.25.
        let mut corpus = ScoredCorpus::from_pairs(vec![pair(0, "a", "b")]).unwrap();
        corpus.add_feature("p", vec![0.3]).unwrap();
        corpus.add_feature("q", vec![0.4]).unwrap();
        let v = WeightVector::new(vec![("p".into(), 0.5), ("q".into(), 0.25)]).unwrap();
        let f = corpus.aggregate(&v).unwrap();
        assert!((f[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aggregate_matches_reversed_summation_order() {
        // Oracle: accumulate the weighted sum with the feature loop reversed.
        let mut corpus = small_corpus();
        corpus.add_feature("a", vec![0.1, -0.2, 0.3]).unwrap();
        corpus.add_feature("b", vec![1.0, 2.0, -3.0]).unwrap();
        corpus.add_feature("c", vec![-0.5, 0.25, 0.125]).unwrap();
        let v = WeightVector::new(vec![
            ("a".into(), 0.7),
            ("b".into(), -0.3),
            ("c".into(), 0.9),
        ])
        .unwrap();
        let f = corpus.aggregate_values(&v).unwrap();

        let names: Vec<&str> = corpus.feature_names().iter().map(|s| s.as_str()).collect();
        for i in 0..corpus.len() {
            let mut oracle = 0.0;
            for name in names.iter().rev() {
                oracle += v.get(name).unwrap() * corpus.feature_column(name).unwrap()[i];
            }
            assert!((f[i] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn aggregate_matches_by_name_not_position() {
        let mut corpus = small_corpus();
        corpus.add_feature("z_last", vec![1.0, 1.0, 1.0]).unwrap();
        corpus.add_feature("a_first", vec![10.0, 20.0, 30.0]).unwrap();
        // Weight vector canonical order differs from column order.
        let v = WeightVector::new(vec![("a_first".into(), 1.0), ("z_last".into(), 0.0)]).unwrap();
        let f = corpus.aggregate_values(&v).unwrap();
        assert_eq!(f, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn zero_weight_vector_gives_identically_zero_scores() {
        let mut corpus = small_corpus();
        corpus.add_feature("a", vec![0.1, -0.2, 0.3]).unwrap();
        let v = WeightVector::new(vec![("a".into(), 0.0)]).unwrap();
        assert_eq!(corpus.aggregate_values(&v).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn aggregate_reports_symmetric_name_difference() {
        let mut corpus = small_corpus();
        corpus.add_feature("have", vec![1.0, 2.0, 3.0]).unwrap();
        let v = WeightVector::new(vec![("want".into(), 1.0)]).unwrap();
        match corpus.aggregate_values(&v).unwrap_err() {
            Error::FeatureMismatch { missing, extra } => {
                assert_eq!(missing, vec!["have".to_owned()]);
                assert_eq!(extra, vec!["want".to_owned()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn percentiles_are_rank_over_n() {
        let mut corpus = small_corpus();
        corpus.add_feature("a", vec![2.0, 1.0, 3.0]).unwrap();
        let v = WeightVector::new(vec![("a".into(), 1.0)]).unwrap();
        corpus.score_with(&v).unwrap();
        // f = (2, 1, 3): ranks 1, 0, 2 -> percentiles 1/3, 0, 2/3.
        assert_eq!(
            corpus.percentile().unwrap(),
            &[1.0 / 3.0, 0.0, 2.0 / 3.0]
        );
        assert_eq!(corpus.ranked().unwrap(), &[1, 0, 2]);
    }

    #[test]
    fn ties_resolve_by_id() {
        let mut corpus = small_corpus();
        corpus.add_feature("a", vec![1.0, 1.0, 1.0]).unwrap();
        let v = WeightVector::new(vec![("a".into(), 1.0)]).unwrap();
        corpus.score_with(&v).unwrap();
        assert_eq!(corpus.ranked().unwrap(), &[0, 1, 2]);
        assert_eq!(corpus.percentile().unwrap(), &[0.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn percentile_before_aggregate_is_an_error() {
        let mut corpus = small_corpus();
        assert!(matches!(
            corpus.percentile_normalize(),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn top_slice_matches_brute_force_sort() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(11, "corpus-test");
        let n = 100;
        let pairs: Vec<SentencePair> = (0..n).map(|i| pair(i as u64, "s", "t")).collect();
        let mut corpus = ScoredCorpus::from_pairs(pairs).unwrap();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        corpus.add_feature("r", values.clone()).unwrap();
        let v = WeightVector::new(vec![("r".into(), 1.0)]).unwrap();
        corpus.score_with(&v).unwrap();

        // Oracle: an independent descending sort by (f, id desc -> keep
        // ascending-id preference on ties).
        let mut oracle: Vec<usize> = (0..n).collect();
        oracle.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then_with(|| (a as u64).cmp(&(b as u64)))
        });
        let top20: std::collections::HashSet<usize> = oracle[..20].iter().copied().collect();

        let pct = corpus.percentile().unwrap();
        let threshold = (n - 20) as f64 / n as f64;
        let selected: std::collections::HashSet<usize> =
            (0..n).filter(|&i| pct[i] >= threshold).collect();
        assert_eq!(selected, top20);
    }

    #[test]
    fn weight_vector_rejects_duplicates_and_non_finite() {
        assert!(WeightVector::new(vec![("a".into(), 1.0), ("a".into(), 2.0)]).is_err());
        assert!(WeightVector::new(vec![("a".into(), f64::NAN)]).is_err());
    }

    #[test]
    fn weight_vector_serializes_as_a_sorted_map() {
        let v = WeightVector::new(vec![("q".into(), 0.25), ("d".into(), 0.5)]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"d":0.5,"q":0.25}"#);
        let back: WeightVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn cloned_corpus_scores_independently() {
        let mut corpus = small_corpus();
        corpus.add_feature("a", vec![1.0, 2.0, 3.0]).unwrap();
        let v1 = WeightVector::new(vec![("a".into(), 1.0)]).unwrap();
        let v2 = WeightVector::new(vec![("a".into(), -1.0)]).unwrap();
        corpus.score_with(&v1).unwrap();
        let mut clone = corpus.clone();
        clone.score_with(&v2).unwrap();
        // The clone's re-scoring must not disturb the original.
        assert_eq!(corpus.f().unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(clone.f().unwrap(), &[-1.0, -2.0, -3.0]);
        assert_eq!(corpus.ranked().unwrap(), &[0, 1, 2]);
        assert_eq!(clone.ranked().unwrap(), &[2, 1, 0]);
    }
}
