//! Ground-truth labels: gender from display names via a name-frequency
//! table, political affiliation from an external label file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

const BUNDLED_NAMES: &str = include_str!("../data/names_sample.tsv");

/// Pseudo-region that pools counts over every region.
pub const ALL_REGIONS: &str = "*";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label: unknown region {0:?}")]
    UnknownRegion(String),
    #[error("label: name corpus line {line}: {reason}")]
    BadNameRow { line: usize, reason: String },
    #[error("label: political label row {row}: {reason}")]
    BadLabelRow { row: usize, reason: String },
    #[error("label: politics task needs a user_id,label file")]
    MissingLabelFile,
    #[error("label: gender task needs a name corpus")]
    MissingNameCorpus,
    #[error("label: io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("label: csv failure: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderGuess {
    Unknown,
    Andy,
    Male,
    Female,
    MostlyMale,
    MostlyFemale,
}

impl GenderGuess {
    pub fn as_str(self) -> &'static str {
        match self {
            GenderGuess::Unknown => "unknown",
            GenderGuess::Andy => "andy",
            GenderGuess::Male => "male",
            GenderGuess::Female => "female",
            GenderGuess::MostlyMale => "mostly_male",
            GenderGuess::MostlyFemale => "mostly_female",
        }
    }
}

/// Category for a male fraction `m` in [0, 1].
pub fn category_for_fraction(m: f64) -> GenderGuess {
    if m >= 0.95 {
        GenderGuess::Male
    } else if m >= 0.7 {
        GenderGuess::MostlyMale
    } else if m > 0.3 {
        GenderGuess::Andy
    } else if m > 0.05 {
        GenderGuess::MostlyFemale
    } else {
        GenderGuess::Female
    }
}

/// Same cutoffs as [`category_for_fraction`], evaluated exactly on counts.
pub fn category_for_counts(male: u64, female: u64) -> GenderGuess {
    let total = u128::from(male) + u128::from(female);
    if total == 0 {
        return GenderGuess::Unknown;
    }
    let m = u128::from(male);
    if 20 * m >= 19 * total {
        GenderGuess::Male
    } else if 10 * m >= 7 * total {
        GenderGuess::MostlyMale
    } else if 10 * m > 3 * total {
        GenderGuess::Andy
    } else if 20 * m > total {
        GenderGuess::MostlyFemale
    } else {
        GenderGuess::Female
    }
}

/// First-name frequencies per region. Lookups are case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct NameCorpus {
    entries: HashMap<String, BTreeMap<String, (u64, u64)>>,
    regions: BTreeSet<String>,
}

impl NameCorpus {
    /// TSV rows `name region male_count female_count`; a header row whose
    /// count columns are not numeric is skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, LabelError> {
        let mut corpus = NameCorpus::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 4 {
                return Err(LabelError::BadNameRow { line: i + 1, reason: format!("expected 4 fields, got {}", f.len()) });
            }
            let (male, female) = match (f[2].parse::<u64>(), f[3].parse::<u64>()) {
                (Ok(m), Ok(w)) => (m, w),
                _ if i == 0 => continue,
                _ => return Err(LabelError::BadNameRow { line: i + 1, reason: "non-numeric count".into() }),
            };
            corpus.insert(f[0], f[1], male, female);
        }
        Ok(corpus)
    }

    pub fn from_path(path: &Path) -> Result<Self, LabelError> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }

    /// The small synthetic table shipped with the crate.
    pub fn bundled_sample() -> Self {
        Self::parse_tsv(BUNDLED_NAMES).expect("bundled name table is well formed")
    }

    pub fn insert(&mut self, name: &str, region: &str, male: u64, female: u64) {
        let slot = self.entries.entry(name.to_lowercase()).or_default().entry(region.to_string()).or_insert((0, 0));
        slot.0 += male;
        slot.1 += female;
        self.regions.insert(region.to_string());
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().map(String::as_str)
    }

    pub fn has_region(&self, region: &str) -> bool {
        region == ALL_REGIONS || self.regions.contains(region)
    }

    /// Names with a given category in a region, sorted.
    pub fn names_with(&self, category: GenderGuess, region: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .entries
            .keys()
            .filter(|n| guess_gender(n, self, region).ok() == Some(category))
            .cloned()
            .collect();
        out.sort();
        out
    }

    fn counts(&self, name: &str, region: &str) -> Option<(u64, u64)> {
        let per_region = self.entries.get(&name.to_lowercase())?;
        if region == ALL_REGIONS {
            Some(per_region.values().fold((0, 0), |a, &(m, f)| (a.0 + m, a.1 + f)))
        } else {
            per_region.get(region).copied()
        }
    }
}

/// First whitespace-delimited token, letters only, lowercased.
pub fn extract_first_name(display_name: &str) -> String {
    display_name
        .split_whitespace()
        .next()
        .map(|tok| tok.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect())
        .unwrap_or_default()
}

pub fn guess_gender(first_name: &str, corpus: &NameCorpus, region: &str) -> Result<GenderGuess, LabelError> {
    if !corpus.has_region(region) {
        return Err(LabelError::UnknownRegion(region.to_string()));
    }
    Ok(match corpus.counts(first_name, region) {
        Some((m, f)) => category_for_counts(m, f),
        None => GenderGuess::Unknown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gender,
    Politics,
}

impl Task {
    /// Human name of a class for this task.
    pub fn class_name(self, label: ClassLabel) -> &'static str {
        match (self, label) {
            (Task::Gender, ClassLabel::A) => "female",
            (Task::Gender, ClassLabel::B) => "male",
            (Task::Politics, ClassLabel::A) => "democrat",
            (Task::Politics, ClassLabel::B) => "republican",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Gender => "gender",
            Task::Politics => "politics",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gender" => Ok(Task::Gender),
            "politics" => Ok(Task::Politics),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Binary class. For SVM training A maps to +1 and B to -1; for MLP and
/// GBDT A maps to 1 and B to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "class_a")]
    A,
    #[serde(rename = "class_b")]
    B,
}

impl ClassLabel {
    pub fn signed(self) -> i8 {
        match self {
            ClassLabel::A => 1,
            ClassLabel::B => -1,
        }
    }

    pub fn binary(self) -> u8 {
        match self {
            ClassLabel::A => 1,
            ClassLabel::B => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUser {
    pub user_id: String,
    pub label: ClassLabel,
    pub task: Task,
}

/// `user_id,label` rows with label `republican` or `democrat`; an optional
/// header row is skipped.
pub fn read_political_labels<R: Read>(source: R) -> Result<BTreeMap<String, ClassLabel>, LabelError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(source);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (Some(user), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(LabelError::BadLabelRow { row: i + 1, reason: "expected two columns".into() });
        };
        let label = match label.to_lowercase().as_str() {
            "democrat" => ClassLabel::A,
            "republican" => ClassLabel::B,
            "label" if i == 0 => continue,
            other => return Err(LabelError::BadLabelRow { row: i + 1, reason: format!("unknown label {other:?}") }),
        };
        out.insert(user.to_string(), label);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct LabelOptions<'a> {
    pub names: Option<&'a NameCorpus>,
    pub region: String,
    pub political: Option<&'a BTreeMap<String, ClassLabel>>,
}

/// Gender keeps users guessed strictly male or female; politics keeps users
/// present in the label file. Output follows user id order.
pub fn build_labeled_dataset(corpus: &Corpus, task: Task, options: &LabelOptions<'_>) -> Result<Vec<LabeledUser>, LabelError> {
    let mut out = Vec::new();
    match task {
        Task::Gender => {
            let names = options.names.ok_or(LabelError::MissingNameCorpus)?;
            if !names.has_region(&options.region) {
                return Err(LabelError::UnknownRegion(options.region.clone()));
            }
            for profile in corpus.users.values() {
                let label = match guess_gender(&extract_first_name(&profile.display_name), names, &options.region)? {
                    GenderGuess::Female => ClassLabel::A,
                    GenderGuess::Male => ClassLabel::B,
                    _ => continue,
                };
                out.push(LabeledUser { user_id: profile.user_id.clone(), label, task });
            }
        }
        Task::Politics => {
            let labels = options.political.ok_or(LabelError::MissingLabelFile)?;
            for profile in corpus.users.values() {
                if let Some(&label) = labels.get(&profile.user_id) {
                    out.push(LabeledUser { user_id: profile.user_id.clone(), label, task });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::txn;
    use crate::corpus::group_by_user;
    use proptest::prelude::*;

    #[test]
    fn first_names() {
        assert_eq!(extract_first_name("Mary-Jane Smith"), "maryjane");
        assert_eq!(extract_first_name("🔥🔥"), "");
        assert_eq!(extract_first_name("bob"), "bob");
        assert_eq!(extract_first_name("  "), "");
    }

    #[test]
    fn bundled_fixture_categories() {
        let names = NameCorpus::bundled_sample();
        let g = |n: &str, r: &str| guess_gender(n, &names, r).unwrap();
        assert_eq!(g("zebediah", "US"), GenderGuess::Unknown);
        assert_eq!(g("Mary", "US"), GenderGuess::Female);
        assert_eq!(g("JAMES", "US"), GenderGuess::Male);
        assert_eq!(g("casey", "US"), GenderGuess::Andy);
        assert_eq!(g("dana", "US"), GenderGuess::MostlyMale);
        assert_eq!(g("taylor", "US"), GenderGuess::MostlyFemale);
        assert_eq!(g("jean", "US"), GenderGuess::Male);
        assert_eq!(g("andrea", "IT"), GenderGuess::Male);
        assert_eq!(g("andrea", "US"), GenderGuess::Female);
        assert_eq!(g("mary", "IT"), GenderGuess::Unknown);
        assert!(matches!(guess_gender("mary", &names, "XX"), Err(LabelError::UnknownRegion(_))));
    }

    #[test]
    fn threshold_boundaries() {
        assert_eq!(category_for_counts(1, 0), GenderGuess::Male);
        assert_eq!(category_for_counts(95, 5), GenderGuess::Male);
        assert_eq!(category_for_counts(94, 6), GenderGuess::MostlyMale);
        assert_eq!(category_for_counts(7, 3), GenderGuess::MostlyMale);
        assert_eq!(category_for_counts(1, 1), GenderGuess::Andy);
        assert_eq!(category_for_counts(3, 7), GenderGuess::MostlyFemale);
        assert_eq!(category_for_counts(1, 19), GenderGuess::Female);
        assert_eq!(category_for_counts(0, 0), GenderGuess::Unknown);
    }

    #[test]
    fn gender_drop_rule() {
        let mut names = NameCorpus::default();
        for (n, m, f) in [("al", 10, 0), ("sam", 5, 5), ("eve", 0, 10), ("max", 8, 2)] {
            names.insert(n, "US", m, f);
        }
        let c = group_by_user(vec![txn("1", "u1", "u2", 0, ""), txn("2", "u3", "u4", 0, "")]);
        let mut c = c;
        for (id, name) in [("u1", "Al B"), ("u2", "Sam C"), ("u3", "Eve D"), ("u4", "Max E")] {
            c.users.get_mut(id).unwrap().display_name = name.into();
        }
        let opts = LabelOptions { names: Some(&names), region: "US".into(), political: None };
        let out = build_labeled_dataset(&c, Task::Gender, &opts).unwrap();
        let got: Vec<_> = out.iter().map(|u| (u.user_id.as_str(), u.label)).collect();
        assert_eq!(got, vec![("u1", ClassLabel::B), ("u3", ClassLabel::A)]);
        assert!(build_labeled_dataset(&Corpus::default(), Task::Gender, &opts).unwrap().is_empty());
    }

    #[test]
    fn politics_join() {
        let mut csv = String::from("user_id,label\n");
        let mut ts = Vec::new();
        for i in 0..436 {
            let label = if i < 218 { "democrat" } else { "republican" };
            csv.push_str(&format!("p{i},{label}\n"));
            ts.push(txn(&format!("t{i}"), &format!("p{i}"), "shop", i, ""));
        }
        let labels = read_political_labels(csv.as_bytes()).unwrap();
        let c = group_by_user(ts);
        let opts = LabelOptions { political: Some(&labels), ..Default::default() };
        let out = build_labeled_dataset(&c, Task::Politics, &opts).unwrap();
        assert_eq!(out.len(), 436);
        assert_eq!(out.iter().filter(|u| u.label == ClassLabel::A).count(), 218);
        assert!(matches!(
            build_labeled_dataset(&c, Task::Politics, &LabelOptions::default()),
            Err(LabelError::MissingLabelFile)
        ));
        assert!(read_political_labels("u1,independent\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn fraction_partition_agrees_with_counts(male in 0u64..2000, female in 0u64..2000) {
            prop_assume!(male + female > 0);
            let m = male as f64 / (male + female) as f64;
            prop_assert_eq!(category_for_fraction(m), category_for_counts(male, female));
        }

        #[test]
        fn case_insensitive(name in "[a-zA-Z]{1,8}") {
            let names = NameCorpus::bundled_sample();
            prop_assert_eq!(
                guess_gender(&name, &names, "US").unwrap(),
                guess_gender(&name.to_lowercase(), &names, "US").unwrap()
            );
        }
    }
}
