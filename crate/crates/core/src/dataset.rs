//! Dataset manifests and patient-disjoint train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest has no records")]
    EmptyManifest,
    #[error("unknown disease `{0}`")]
    UnknownDisease(String),
    #[error("duplicate frame path `{0}`")]
    DuplicateFrame(String),
    #[error("record for `{0}` has a disease but no mask")]
    MissingMask(String),
    #[error("manifest line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Disease {
    Normal,
    Bleeding,
    Crohn,
    Lymphangiectasia,
    Xanthoma,
    LymphoidHyperplasia,
}

impl Disease {
    pub const ALL: [Disease; 6] = [
        Disease::Normal,
        Disease::Bleeding,
        Disease::Crohn,
        Disease::Lymphangiectasia,
        Disease::Xanthoma,
        Disease::LymphoidHyperplasia,
    ];

    pub const ABNORMAL: [Disease; 5] = [
        Disease::Bleeding,
        Disease::Crohn,
        Disease::Lymphangiectasia,
        Disease::Xanthoma,
        Disease::LymphoidHyperplasia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Disease::Normal => "normal",
            Disease::Bleeding => "bleeding",
            Disease::Crohn => "crohn",
            Disease::Lymphangiectasia => "lymphangiectasia",
            Disease::Xanthoma => "xanthoma",
            Disease::LymphoidHyperplasia => "lymphoid_hyperplasia",
        }
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Disease {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Disease::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| DatasetError::UnknownDisease(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub patient_id: String,
    pub disease: Disease,
    pub frame_path: String,
    pub mask_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

pub const MANIFEST_HEADER: [&str; 4] = ["patient_id", "disease", "frame_path", "mask_path"];

impl DatasetManifest {
    pub fn new(records: Vec<Record>) -> Result<Self, DatasetError> {
        let manifest = Self {
            records,
            base_dir: PathBuf::new(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.frame_path.as_str()) {
                return Err(DatasetError::DuplicateFrame(r.frame_path.clone()));
            }
            if r.disease != Disease::Normal && r.mask_path.is_none() {
                return Err(DatasetError::MissingMask(r.frame_path.clone()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::parse(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(DatasetError::Malformed {
                line: 1,
                msg: format!("expected header `{}`", MANIFEST_HEADER.join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            if row.len() != 4 {
                return Err(DatasetError::Malformed {
                    line: i + 2,
                    msg: format!("expected 4 fields, found {}", row.len()),
                });
            }
            let mask = row[3].to_string();
            records.push(Record {
                patient_id: row[0].to_string(),
                disease: row[1].parse()?,
                frame_path: row[2].to_string(),
                mask_path: (!mask.is_empty()).then_some(mask),
            });
        }
        Self::new(records)
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.patient_id,
                r.disease,
                r.frame_path,
                r.mask_path.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Move whole patients to the training side, one disease at a time, until
/// each disease has at least `min_train_frames` training frames.
///
/// When at least one untaken patient can satisfy the remaining need alone,
/// one such patient is drawn uniformly at random. Otherwise patients are
/// taken greedily by descending frame count (ties by patient id) until the
/// need is met or no patients remain.
pub fn split_by_patient(
    manifest: &DatasetManifest,
    min_train_frames: usize,
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    if manifest.records.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // disease -> patient -> frame count
    let mut counts: BTreeMap<Disease, BTreeMap<&str, usize>> = BTreeMap::new();
    for r in &manifest.records {
        *counts
            .entry(r.disease)
            .or_default()
            .entry(r.patient_id.as_str())
            .or_default() += 1;
    }

    let mut train_patients: BTreeSet<&str> = BTreeSet::new();
    for per_patient in counts.values() {
        let have: usize = per_patient
            .iter()
            .filter(|(p, _)| train_patients.contains(*p))
            .map(|(_, &n)| n)
            .sum();
        if have >= min_train_frames {
            continue;
        }
        let need = min_train_frames - have;
        let candidates: Vec<(&str, usize)> = per_patient
            .iter()
            .filter(|(p, _)| !train_patients.contains(*p))
            .map(|(&p, &n)| (p, n))
            .collect();
        let sufficient: Vec<&str> = candidates
            .iter()
            .filter(|(_, n)| *n >= need)
            .map(|(p, _)| *p)
            .collect();
        if let Some(&chosen) = sufficient.choose(&mut rng) {
            train_patients.insert(chosen);
            continue;
        }
        let mut greedy = candidates;
        greedy.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut got = 0;
        for (p, n) in greedy {
            if got >= need {
                break;
            }
            train_patients.insert(p);
            got += n;
        }
    }

    let (train, test) = (0..manifest.records.len())
        .partition(|&i| train_patients.contains(manifest.records[i].patient_id.as_str()));
    Ok(SplitPlan { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(layout: &[(&str, Disease, usize)]) -> DatasetManifest {
        let mut records = Vec::new();
        for (patient, disease, n) in layout {
            for i in 0..*n {
                records.push(Record {
                    patient_id: patient.to_string(),
                    disease: *disease,
                    frame_path: format!("{patient}_{disease}_{i}.png"),
                    mask_path: (*disease != Disease::Normal).then(|| format!("{patient}_{i}_m.png")),
                });
            }
        }
        DatasetManifest::new(records).unwrap()
    }

    fn patients_of(m: &DatasetManifest, idx: &[usize]) -> BTreeSet<String> {
        idx.iter().map(|&i| m.records[i].patient_id.clone()).collect()
    }

    #[test]
    fn single_sufficient_patient() {
        let m = manifest(&[("A", Disease::Bleeding, 7), ("B", Disease::Bleeding, 3)]);
        let plan = split_by_patient(&m, 6, 1).unwrap();
        assert_eq!(patients_of(&m, &plan.train), BTreeSet::from(["A".to_string()]));
        assert_eq!(patients_of(&m, &plan.test), BTreeSet::from(["B".to_string()]));
    }

    #[test]
    fn greedy_accumulation() {
        let m = manifest(&[
            ("A", Disease::Crohn, 4),
            ("B", Disease::Crohn, 3),
            ("C", Disease::Crohn, 2),
        ]);
        for seed in 0..20 {
            let plan = split_by_patient(&m, 6, seed).unwrap();
            assert_eq!(
                patients_of(&m, &plan.train),
                BTreeSet::from(["A".to_string(), "B".to_string()])
            );
            assert_eq!(patients_of(&m, &plan.test), BTreeSet::from(["C".to_string()]));
        }
    }

    #[test]
    fn empty_manifest() {
        let m = DatasetManifest::default();
        assert!(matches!(
            split_by_patient(&m, 6, 0),
            Err(DatasetError::EmptyManifest)
        ));
    }

    #[test]
    fn random_choice_depends_on_seed() {
        let m = manifest(&[
            ("A", Disease::Xanthoma, 6),
            ("B", Disease::Xanthoma, 6),
            ("C", Disease::Xanthoma, 6),
        ]);
        let chosen: BTreeSet<_> = (0..40)
            .map(|s| patients_of(&m, &split_by_patient(&m, 6, s).unwrap().train))
            .collect();
        assert!(chosen.len() > 1);
        for c in &chosen {
            assert_eq!(c.len(), 1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let text = "patient_id,disease,frame_path,mask_path\n\
                    p1,bleeding,f1.png,m1.png\n\
                    p1,normal,f2.png,\n";
        let m = DatasetManifest::parse(text).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[1].mask_path, None);
        assert_eq!(DatasetManifest::parse(&m.to_csv()).unwrap().records, m.records);
    }

    #[test]
    fn csv_validation() {
        let missing = "patient_id,disease,frame_path,mask_path\np1,xanthoma,f1.png,\n";
        assert!(matches!(
            DatasetManifest::parse(missing),
            Err(DatasetError::MissingMask(_))
        ));
        let dup = "patient_id,disease,frame_path,mask_path\np1,normal,f.png,\np2,normal,f.png,\n";
        assert!(matches!(
            DatasetManifest::parse(dup),
            Err(DatasetError::DuplicateFrame(_))
        ));
        let bad = "patient_id,disease,frame_path,mask_path\np1,polyp,f.png,m.png\n";
        assert!(matches!(
            DatasetManifest::parse(bad),
            Err(DatasetError::UnknownDisease(_))
        ));
        let header = "patient,disease,frame,mask\np1,normal,f.png,\n";
        assert!(matches!(
            DatasetManifest::parse(header),
            Err(DatasetError::Malformed { .. })
        ));
    }

    fn arb_manifest() -> impl Strategy<Value = DatasetManifest> {
        proptest::collection::vec((0u8..8, 0usize..6, 1usize..9), 1..20).prop_map(|rows| {
            let mut layout = Vec::new();
            for (p, d, n) in rows {
                layout.push((format!("P{p}"), Disease::ALL[d], n));
            }
            let mut records = Vec::new();
            for (k, (patient, disease, n)) in layout.iter().enumerate() {
                for i in 0..*n {
                    records.push(Record {
                        patient_id: patient.clone(),
                        disease: *disease,
                        frame_path: format!("{k}_{i}.png"),
                        mask_path: Some(format!("{k}_{i}_m.png")),
                    });
                }
            }
            DatasetManifest::new(records).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn split_invariants(m in arb_manifest(), seed in any::<u64>(), min_train in 1usize..10) {
            let plan = split_by_patient(&m, min_train, seed).unwrap();
            prop_assert_eq!(plan.train.len() + plan.test.len(), m.records.len());
            let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..m.records.len()).collect::<Vec<_>>());
            let tr = patients_of(&m, &plan.train);
            let te = patients_of(&m, &plan.test);
            prop_assert!(tr.is_disjoint(&te));
            for d in Disease::ALL {
                let total = m.records.iter().filter(|r| r.disease == d).count();
                let in_train = plan.train.iter().filter(|&&i| m.records[i].disease == d).count();
                prop_assert!(in_train >= min_train.min(total));
            }
            prop_assert_eq!(split_by_patient(&m, min_train, seed).unwrap(), plan);
        }
    }
}
