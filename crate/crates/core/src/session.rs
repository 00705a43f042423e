//! Iterative testing sessions: a dataset, its mined itemsets, a growing set
//! of itemset constraints and the history of reports that led to them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::RowClustering;
use crate::error::{Error, Result};
use crate::io::{dataset_to_string, load_dataset, DatasetFormat};
use crate::matrix::BinaryDataset;
use crate::nullmodels::{ChainConfig, NullModel, SwapAttempts};
use crate::patterns::{frequency, Itemset, ItemsetFamily};
use crate::rng::mix_seed;
use crate::significance::{
    pair_reports, test_patterns_with_progress, SignificanceReport, TestOptions, TestStatistic, DEFAULT_ALPHA,
};

pub const SESSION_SCHEMA: &str = "exchmine-session";
pub const SESSION_VERSION: u32 = 1;

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_W: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub samples: usize,
    pub swap_attempts: SwapAttempts,
    pub seed: u64,
    pub alpha: f64,
    pub w: f64,
    pub adjust: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            samples: DEFAULT_SAMPLES,
            swap_attempts: SwapAttempts::Auto,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            w: DEFAULT_W,
            adjust: true,
        }
    }
}

/// Where the dataset came from. The hash is over the dataset's canonical
/// dense serialisation, so it does not depend on the input format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: Option<String>,
    pub format: DatasetFormat,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Seed of the report's chains; rerunning with it reproduces the report.
    pub seed: u64,
    pub report: SignificanceReport,
    pub chosen_constraint: Option<Itemset>,
    pub significant_count: usize,
}

/// How an iteration picks its constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Constrain the untested itemset with the smallest raw p-value.
    SmallestP,
    /// Only record the report; constraints are edited by hand.
    Manual,
}

/// Which null model a one-off test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Margins,
    ClusterMargins,
    ItemsetSoft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub dataset: BinaryDataset,
    pub dataset_ref: DatasetRef,
    pub mined: ItemsetFamily,
    pub constraints: ItemsetFamily,
    pub clustering: Option<RowClustering>,
    pub history: Vec<IterationRecord>,
    pub config: SessionConfig,
}

pub fn dataset_hash(d: &BinaryDataset) -> String {
    hex::encode(Sha256::digest(dataset_to_string(d, DatasetFormat::Dense).as_bytes()))
}

impl SessionState {
    /// A fresh session. `mined` must carry the itemsets' frequencies in `dataset`.
    pub fn new(
        dataset: BinaryDataset,
        path: Option<String>,
        format: DatasetFormat,
        mined: ItemsetFamily,
        config: SessionConfig,
    ) -> Result<Self> {
        let mined = ItemsetFamily::with_targets_from(mined.itemsets().iter().cloned(), &dataset)?;
        let dataset_ref = DatasetRef { path, format, sha256: dataset_hash(&dataset) };
        Ok(SessionState {
            dataset,
            dataset_ref,
            mined,
            constraints: ItemsetFamily::with_targets([]),
            clustering: None,
            history: Vec::new(),
            config,
        })
    }

    /// Mined itemsets that are not constraints, in mined order.
    pub fn candidates(&self) -> Vec<Itemset> {
        self.mined.itemsets().iter().filter(|x| !self.constraints.contains(x)).cloned().collect()
    }

    /// Adds `x` with its frequency in the original dataset as target.
    pub fn add_constraint(&mut self, x: Itemset) -> Result<bool> {
        let f = frequency(&self.dataset, &x)? as u64;
        self.constraints.push(x, Some(f))
    }

    pub fn remove_constraint(&mut self, x: &Itemset) -> bool {
        self.constraints.remove(x)
    }

    /// Margins alone, or margins plus the soft itemset constraints.
    pub fn iteration_model(&self) -> NullModel {
        if self.constraints.is_empty() {
            NullModel::Margins
        } else {
            NullModel::ItemsetMarginsSoft { family: self.constraints.clone(), w: self.config.w }
        }
    }

    pub fn model(&self, kind: ModelKind) -> Result<NullModel> {
        match kind {
            ModelKind::Margins => Ok(NullModel::Margins),
            ModelKind::ClusterMargins => match &self.clustering {
                Some(c) => Ok(NullModel::ClusterMargins { clustering: c.clone() }),
                None => Err(Error::usage("session has no clustering")),
            },
            ModelKind::ItemsetSoft => {
                if self.constraints.is_empty() {
                    return Err(Error::usage("session has no constraints"));
                }
                Ok(self.iteration_model())
            }
        }
    }

    fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig::new(self.config.swap_attempts, seed, self.config.samples)
    }

    fn options(&self) -> TestOptions {
        TestOptions { alpha: self.config.alpha, adjust: self.config.adjust }
    }

    /// Seed of history entry `iteration`.
    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        mix_seed(self.config.seed, iteration as u64)
    }

    /// Tests every mined itemset under `model` without touching the history.
    pub fn test(
        &self,
        model: &NullModel,
        seed: u64,
        progress: Option<&(dyn Fn(usize) + Sync)>,
    ) -> Result<SignificanceReport> {
        let stats: Vec<TestStatistic> = self.mined.itemsets().iter().cloned().map(TestStatistic::support).collect();
        test_patterns_with_progress(&self.dataset, &stats, model, &self.chain_config(seed), self.options(), progress)
    }

    /// Tests the remaining candidates under the current constraints, appends
    /// the record and, for [`Strategy::SmallestP`], constrains the itemset
    /// with the smallest raw p-value (ties go to the smaller itemset).
    pub fn iterate(
        &mut self,
        strategy: Strategy,
        progress: Option<&(dyn Fn(usize) + Sync)>,
    ) -> Result<&IterationRecord> {
        let candidates = self.candidates();
        if candidates.is_empty() {
            return Err(Error::SessionComplete);
        }
        let iteration = self.history.len();
        let seed = self.iteration_seed(iteration);
        let stats: Vec<TestStatistic> = candidates.into_iter().map(TestStatistic::support).collect();
        let model = self.iteration_model();
        let report = test_patterns_with_progress(
            &self.dataset,
            &stats,
            &model,
            &self.chain_config(seed),
            self.options(),
            progress,
        )?;
        let chosen = match strategy {
            Strategy::SmallestP => smallest_p(&report),
            Strategy::Manual => None,
        };
        if let Some(x) = &chosen {
            self.add_constraint(x.clone())?;
        }
        self.history.push(IterationRecord {
            iteration,
            seed,
            significant_count: report.significant_count(),
            report,
            chosen_constraint: chosen,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Runs smallest-p iterations. A fresh session first records the initial
    /// margins-only report, so `n` iterations leave `n + 1` records; a resumed
    /// session gains `n`. Stops early when no candidates remain.
    pub fn iterate_many(&mut self, n: usize, mut on_record: impl FnMut(&IterationRecord)) -> Result<usize> {
        let rounds = if self.history.is_empty() { n + 1 } else { n };
        for done in 0..rounds {
            match self.iterate(Strategy::SmallestP, None) {
                Ok(rec) => on_record(rec),
                Err(Error::SessionComplete) => return Ok(done),
                Err(e) => return Err(e),
            }
        }
        Ok(rounds)
    }

    /// Recomputes history entry `i` from the provenance stored in its report.
    pub fn replay_record(&self, i: usize) -> Result<IterationRecord> {
        let rec = self.history.get(i).ok_or_else(|| Error::Index(format!("no iteration {i}")))?;
        let r = &rec.report;
        let stats = r
            .patterns
            .iter()
            .map(|p| match &p.itemset {
                Some(x) => Ok(TestStatistic::support(x.clone()).with_tail(p.tail)),
                None => Err(Error::Corrupt(format!("pattern {:?} has no itemset", p.pattern))),
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = ChainConfig::new(SwapAttempts::Fixed(r.swap_attempts), r.seed, r.samples);
        let report = test_patterns_with_progress(
            &self.dataset,
            &stats,
            &r.model,
            &cfg,
            TestOptions { alpha: r.alpha, adjust: r.adjusted },
            None,
        )?;
        Ok(IterationRecord { significant_count: report.significant_count(), report, ..rec.clone() })
    }

    /// True when every history record is reproduced exactly.
    pub fn verify_replay(&self) -> Result<bool> {
        for i in 0..self.history.len() {
            if self.replay_record(i)? != self.history[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn ranked(report: &SignificanceReport) -> Vec<(f64, &Itemset)> {
    let mut v: Vec<(f64, &Itemset)> =
        report.patterns.iter().filter_map(|p| p.itemset.as_ref().map(|x| (p.raw_p, x))).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    v
}

fn smallest_p(report: &SignificanceReport) -> Option<Itemset> {
    ranked(report).first().map(|(_, x)| (*x).clone())
}

/// The `n` itemsets with the smallest raw p-value, targets from `d`.
pub fn select_top_significant(report: &SignificanceReport, n: usize, d: &BinaryDataset) -> Result<ItemsetFamily> {
    if n == 0 {
        return Err(Error::usage("n must be at least 1"));
    }
    let ranked = ranked(report);
    if ranked.is_empty() {
        return Err(Error::usage("report has no itemset patterns"));
    }
    if n > ranked.len() {
        log::warn!("asked for {n} itemsets, report has {}", ranked.len());
    }
    ItemsetFamily::with_targets_from(ranked.into_iter().take(n).map(|(_, x)| x.clone()), d)
}

/// The `n` itemsets whose raw p-value grows most from `a` to `b`.
pub fn select_by_p_delta(
    a: &SignificanceReport,
    b: &SignificanceReport,
    n: usize,
    d: &BinaryDataset,
) -> Result<ItemsetFamily> {
    if n == 0 {
        return Err(Error::usage("n must be at least 1"));
    }
    let mut deltas: Vec<(f64, &Itemset)> = pair_reports(a, b)?
        .into_iter()
        .filter_map(|(p, q)| p.itemset.as_ref().map(|x| (q.raw_p - p.raw_p, x)))
        .collect();
    if n > deltas.len() {
        log::warn!("asked for {n} itemsets, reports have {}", deltas.len());
    }
    deltas.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
    ItemsetFamily::with_targets_from(deltas.into_iter().take(n).map(|(_, x)| x.clone()), d)
}

#[derive(Serialize)]
struct SessionFileOut<'a> {
    schema: &'a str,
    version: u32,
    dataset_ref: &'a DatasetRef,
    data: String,
    mined: &'a ItemsetFamily,
    constraints: &'a ItemsetFamily,
    clustering: &'a Option<RowClustering>,
    config: &'a SessionConfig,
    history: &'a [IterationRecord],
}

#[derive(Deserialize)]
struct SessionFileIn {
    dataset_ref: DatasetRef,
    data: String,
    mined: ItemsetFamily,
    constraints: ItemsetFamily,
    clustering: Option<RowClustering>,
    config: SessionConfig,
    history: Vec<IterationRecord>,
}

#[derive(Deserialize)]
struct Header {
    schema: Option<String>,
    version: Option<u32>,
}

/// Session as pretty JSON. The dataset is embedded as dense CSV.
pub fn session_to_string(state: &SessionState) -> String {
    let file = SessionFileOut {
        schema: SESSION_SCHEMA,
        version: SESSION_VERSION,
        dataset_ref: &state.dataset_ref,
        data: dataset_to_string(&state.dataset, DatasetFormat::Dense),
        mined: &state.mined,
        constraints: &state.constraints,
        clustering: &state.clustering,
        config: &state.config,
        history: &state.history,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("session serialises");
    s.push('\n');
    s
}

pub fn save_session<W: Write>(state: &SessionState, mut out: W) -> Result<()> {
    out.write_all(session_to_string(state).as_bytes())?;
    Ok(())
}

fn corrupt(e: serde_json::Error) -> Error {
    Error::Corrupt(e.to_string())
}

pub fn load_session(bytes: &[u8]) -> Result<SessionState> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(corrupt)?;
    let header: Header = serde_json::from_value(value.clone()).map_err(corrupt)?;
    if header.schema.as_deref() != Some(SESSION_SCHEMA) {
        return Err(Error::Corrupt(format!("not a session file (schema {:?})", header.schema)));
    }
    match header.version {
        Some(SESSION_VERSION) => {}
        Some(found) => return Err(Error::Migration { found, expected: SESSION_VERSION }),
        None => return Err(Error::Corrupt("session file has no version".into())),
    }
    let file: SessionFileIn = serde_json::from_value(value).map_err(corrupt)?;
    let dataset = load_dataset(file.data.as_bytes(), DatasetFormat::Dense)?;
    if dataset_hash(&dataset) != file.dataset_ref.sha256 {
        return Err(Error::Corrupt("embedded dataset does not match its hash".into()));
    }
    let state = SessionState {
        dataset,
        dataset_ref: file.dataset_ref,
        mined: file.mined,
        constraints: file.constraints,
        clustering: file.clustering,
        history: file.history,
        config: file.config,
    };
    check_loaded(&state)?;
    Ok(state)
}

fn check_loaded(s: &SessionState) -> Result<()> {
    let n = s.dataset.n_cols();
    let in_range = |f: &ItemsetFamily| f.itemsets().iter().all(|x| x.items().iter().all(|&c| (c as usize) < n));
    if !in_range(&s.mined) || !in_range(&s.constraints) {
        return Err(Error::Corrupt("itemset refers to a missing column".into()));
    }
    if s.constraints.target_freqs().is_none() || s.mined.target_freqs().is_none() {
        return Err(Error::Corrupt("itemset families lack frequencies".into()));
    }
    if let Some(c) = &s.clustering {
        c.check(&s.dataset).map_err(|e| Error::Corrupt(e.to_string()))?;
    }
    for (i, r) in s.history.iter().enumerate() {
        if r.iteration != i || r.significant_count != r.report.significant_count() {
            return Err(Error::Corrupt(format!("history record {i} is inconsistent")));
        }
    }
    Ok(())
}

/// Writes the session next to `path` and renames it into place, so readers
/// see either the old or the new file.
pub fn save_session_file(state: &SessionState, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    save_session(state, &mut tmp)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn load_session_file(path: &Path) -> Result<SessionState> {
    load_session(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::mine_frequent;
    use crate::significance::{PatternResult, Tail};
    use crate::toy;

    fn toy_session(samples: usize) -> SessionState {
        let d = toy::dataset();
        let mined = mine_frequent(&d, 3, 8).unwrap();
        let config = SessionConfig {
            samples,
            swap_attempts: SwapAttempts::Fixed(132),
            seed: 5,
            adjust: false,
            ..Default::default()
        };
        SessionState::new(d, None, DatasetFormat::Dense, mined, config).unwrap()
    }

    #[test]
    fn iterations_grow_constraints() {
        let mut s = toy_session(49);
        let mut seen = Vec::new();
        let n = s.iterate_many(3, |r| seen.push(r.iteration)).unwrap();
        assert_eq!(n, 4);
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert_eq!(s.constraints.len(), 4);
        assert_eq!(s.history[0].report.model, NullModel::Margins);
        assert!(matches!(s.history[1].report.model, NullModel::ItemsetMarginsSoft { .. }));
        for (i, r) in s.history.iter().enumerate() {
            assert_eq!(r.report.patterns.len(), 23 - i);
            let chosen = r.chosen_constraint.as_ref().unwrap();
            assert_eq!(s.constraints.itemsets()[i], *chosen);
            assert_eq!(s.constraints.target(i).unwrap(), frequency(&s.dataset, chosen).unwrap() as u64);
        }
        assert_eq!(s.iterate_many(2, |_| {}).unwrap(), 2);
        assert_eq!(s.history.len(), 6);
    }

    #[test]
    fn session_completes() {
        let d = BinaryDataset::from_rows(&[[1, 1], [1, 0]]).unwrap();
        let mined = mine_frequent(&d, 1, 2).unwrap();
        let config = SessionConfig { samples: 3, swap_attempts: SwapAttempts::Fixed(4), ..Default::default() };
        let mut s = SessionState::new(d, None, DatasetFormat::Dense, mined, config).unwrap();
        assert_eq!(s.iterate_many(10, |_| {}).unwrap(), 3);
        assert!(matches!(s.iterate(Strategy::SmallestP, None), Err(Error::SessionComplete)));
    }

    #[test]
    fn save_load_round_trip() {
        let mut s = toy_session(19);
        s.clustering = Some(toy::clustering());
        s.iterate_many(1, |_| {}).unwrap();
        let text = session_to_string(&s);
        let back = load_session(text.as_bytes()).unwrap();
        assert_eq!(back, s);
        assert_eq!(session_to_string(&back), text);
        assert!(back.verify_replay().unwrap());
    }

    #[test]
    fn load_errors() {
        let s = toy_session(9);
        let text = session_to_string(&s);
        assert!(matches!(load_session(&text.as_bytes()[..text.len() - 20]), Err(Error::Corrupt(_))));
        let bumped = text.replace("\"version\": 1", "\"version\": 7");
        match load_session(bumped.as_bytes()) {
            Err(Error::Migration { found: 7, expected: 1 }) => {}
            other => panic!("{other:?}"),
        }
        let tampered = text.replacen("t1,1,1", "t1,0,1", 1);
        assert!(matches!(load_session(tampered.as_bytes()), Err(Error::Corrupt(_))));
        assert!(matches!(load_session(b"{}"), Err(Error::Corrupt(_))));
    }

    #[test]
    fn atomic_file_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = toy_session(9);
        save_session_file(&s, &path).unwrap();
        save_session_file(&s, &path).unwrap();
        assert_eq!(load_session_file(&path).unwrap(), s);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn report(ps: &[(&str, f64)], d: &BinaryDataset) -> SignificanceReport {
        SignificanceReport {
            model: NullModel::Margins,
            samples: 99,
            swap_attempts: 0,
            seed: 0,
            alpha: 0.05,
            adjusted: false,
            patterns: ps
                .iter()
                .map(|&(l, p)| PatternResult {
                    pattern: l.into(),
                    itemset: Some(Itemset::from_labels(d, l).unwrap()),
                    statistic: "support".into(),
                    tail: Tail::Greater,
                    value: 0.0,
                    raw_p: p,
                    adjusted_p: p,
                    significant: p <= 0.05,
                })
                .collect(),
        }
    }

    #[test]
    fn selection_strategies() {
        let d = toy::dataset();
        let a = report(&[("A B", 0.04), ("C", 0.5), ("A", 0.01), ("B", 0.04)], &d);
        let top = select_top_significant(&a, 1, &d).unwrap();
        assert_eq!(top.itemsets(), [Itemset::from_labels(&d, "A").unwrap()]);
        let top = select_top_significant(&a, 3, &d).unwrap();
        let labels: Vec<String> = top.itemsets().iter().map(|x| x.label(&d)).collect();
        assert_eq!(labels, ["A", "B", "A B"]);
        assert_eq!(top.target_freqs().unwrap(), [4, 3, 3]);
        assert_eq!(select_top_significant(&a, 10, &d).unwrap().len(), 4);

        let same = select_by_p_delta(&a, &a, 2, &d).unwrap();
        assert_eq!(
            same.itemsets(),
            select_top_significant(&report(&[("A", 0.3), ("B", 0.3), ("C", 0.3), ("A B", 0.3)], &d), 2, &d)
                .unwrap()
                .itemsets()
        );
        let b = report(&[("A B", 0.04), ("C", 0.5), ("A", 0.9), ("B", 0.04)], &d);
        assert_eq!(select_by_p_delta(&a, &b, 1, &d).unwrap().itemsets()[0].label(&d), "A");
        assert!(select_by_p_delta(&a, &report(&[("A", 0.1)], &d), 1, &d).is_err());
    }
}
