//! Experiment construction and the exhaustive relation checker.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stimuli::{Role, StimulusMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "novel")]
    Novel,
    #[serde(rename = "exemplar")]
    Exemplar,
    #[serde(rename = "state")]
    State,
    #[serde(rename = "konkle-novel")]
    KonkleNovel,
    #[serde(rename = "konkle-16")]
    Konkle16,
    #[serde(rename = "konkle-8")]
    Konkle8,
    #[serde(rename = "konkle-4")]
    Konkle4,
    #[serde(rename = "konkle-2")]
    Konkle2,
    #[serde(rename = "konkle-1")]
    Konkle1,
    #[serde(rename = "noise")]
    Noise,
    /// Unrelated foil paired with a distinct study item.
    #[serde(rename = "paired")]
    Paired,
}

impl Condition {
    pub const ALL: [Condition; 11] = [
        Condition::Novel,
        Condition::Exemplar,
        Condition::State,
        Condition::KonkleNovel,
        Condition::Konkle16,
        Condition::Konkle8,
        Condition::Konkle4,
        Condition::Konkle2,
        Condition::Konkle1,
        Condition::Noise,
        Condition::Paired,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Novel => "novel",
            Condition::Exemplar => "exemplar",
            Condition::State => "state",
            Condition::KonkleNovel => "konkle-novel",
            Condition::Konkle16 => "konkle-16",
            Condition::Konkle8 => "konkle-8",
            Condition::Konkle4 => "konkle-4",
            Condition::Konkle2 => "konkle-2",
            Condition::Konkle1 => "konkle-1",
            Condition::Noise => "noise",
            Condition::Paired => "paired",
        }
    }

    /// Studied exemplars per category for the Konkle levels.
    pub fn konkle_level(self) -> Option<usize> {
        match self {
            Condition::Konkle16 => Some(16),
            Condition::Konkle8 => Some(8),
            Condition::Konkle4 => Some(4),
            Condition::Konkle2 => Some(2),
            Condition::Konkle1 => Some(1),
            _ => None,
        }
    }

    fn for_konkle_level(level: usize) -> Condition {
        match level {
            16 => Condition::Konkle16,
            8 => Condition::Konkle8,
            4 => Condition::Konkle4,
            2 => Condition::Konkle2,
            _ => Condition::Konkle1,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Brady,
    Konkle,
    Noise,
    Paired,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::Brady => "brady",
            Design::Konkle => "konkle",
            Design::Noise => "noise",
            Design::Paired => "paired",
        }
    }

    /// Conditions in presentation order.
    pub fn conditions(self) -> &'static [Condition] {
        match self {
            Design::Brady => &[Condition::Novel, Condition::Exemplar, Condition::State],
            Design::Konkle => &[
                Condition::KonkleNovel,
                Condition::Konkle16,
                Condition::Konkle8,
                Condition::Konkle4,
                Condition::Konkle2,
                Condition::Konkle1,
            ],
            Design::Noise => &[Condition::Noise],
            Design::Paired => &[Condition::Paired],
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Design::Brady, Design::Konkle, Design::Noise, Design::Paired]
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown design {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestTrial {
    pub study_id: String,
    pub foil_id: String,
    pub condition: Condition,
    pub trial_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiment {
    pub design: Design,
    pub build_seed: u64,
    pub set_version: String,
    pub study: Vec<String>,
    pub trials: Vec<TestTrial>,
}

impl Experiment {
    pub fn with_version(mut self, set_version: impl Into<String>) -> Self {
        self.set_version = set_version.into();
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn count(&self, condition: Condition) -> usize {
        self.trials.iter().filter(|t| t.condition == condition).count()
    }
}

fn deficit(design: &'static str, condition: impl fmt::Display, deficit: usize) -> Error {
    Error::PoolDeficit {
        design,
        condition: condition.to_string(),
        deficit,
    }
}

type ObjectKey<'a> = (&'a str, &'a str);

/// Brady-style design: `n_study` study items plus `trials_per_condition`
/// novel, exemplar and state trials.
///
/// State and exemplar trials are drawn first so their foils can be held out
/// of the study set: a state foil is another state of the studied object and
/// an exemplar foil is an object of the studied category with none of its
/// states studied. The rest of the study set is a seeded draw from the
/// remaining study-pool items; novel foils come from categories that end up
/// entirely unstudied.
pub fn build_brady(pool: &[StimulusMeta], n_study: usize, trials_per_condition: usize, seed: u64) -> Result<Experiment> {
    let mut r = rng::seeded(seed);

    // category -> object -> state items, deterministic order
    let mut objects: BTreeMap<ObjectKey, Vec<&StimulusMeta>> = BTreeMap::new();
    for m in pool.iter().filter(|m| m.role == Role::StudyPool) {
        objects.entry((&m.category, &m.object_id)).or_default().push(m);
    }
    for states in objects.values_mut() {
        states.sort_by(|a, b| a.state_id.cmp(&b.state_id).then(a.id.cmp(&b.id)));
    }

    let mut used_objects: HashSet<ObjectKey> = HashSet::new();
    let mut held_out: HashSet<&str> = HashSet::new();
    let mut trial_study: Vec<&str> = Vec::new();
    let mut state_trials = Vec::new();
    let mut exemplar_trials = Vec::new();

    let mut keys: Vec<ObjectKey> = objects.keys().copied().collect();
    keys.shuffle(&mut r);
    for &key in &keys {
        if state_trials.len() == trials_per_condition {
            break;
        }
        let states = &objects[&key];
        let distinct: BTreeSet<&str> = states.iter().map(|m| m.state_id.as_str()).collect();
        if distinct.len() < 2 {
            continue;
        }
        let mut order: Vec<&StimulusMeta> = states.clone();
        order.shuffle(&mut r);
        let study = order[0];
        let foil = order.iter().find(|m| m.state_id != study.state_id).expect("two states");
        used_objects.insert(key);
        held_out.insert(&foil.id);
        trial_study.push(&study.id);
        state_trials.push((study.id.clone(), foil.id.clone()));
    }
    if state_trials.len() < trials_per_condition {
        return Err(deficit("brady", Condition::State, trials_per_condition - state_trials.len()));
    }

    keys.shuffle(&mut r);
    for &key in &keys {
        if exemplar_trials.len() == trials_per_condition {
            break;
        }
        if used_objects.contains(&key) {
            continue;
        }
        let partner = keys
            .iter()
            .copied()
            .find(|&other| other.0 == key.0 && other.1 != key.1 && !used_objects.contains(&other));
        let Some(partner) = partner else { continue };
        let study = objects[&key][r.random_range(0..objects[&key].len())];
        let foil_states = &objects[&partner];
        let foil = foil_states[r.random_range(0..foil_states.len())];
        used_objects.insert(key);
        used_objects.insert(partner);
        for m in foil_states {
            held_out.insert(&m.id);
        }
        trial_study.push(&study.id);
        exemplar_trials.push((study.id.clone(), foil.id.clone()));
    }
    if exemplar_trials.len() < trials_per_condition {
        return Err(deficit("brady", Condition::Exemplar, trials_per_condition - exemplar_trials.len()));
    }

    let fixed: HashSet<&str> = trial_study.iter().copied().collect();
    let mut fill: Vec<&str> = objects
        .values()
        .flatten()
        .map(|m| m.id.as_str())
        .filter(|id| !held_out.contains(id) && !fixed.contains(id))
        .collect();
    fill.shuffle(&mut r);
    let need = n_study
        .checked_sub(trial_study.len())
        .ok_or_else(|| deficit("brady", "study", trial_study.len() - n_study))?;
    if fill.len() < need {
        return Err(deficit("brady", "study", need - fill.len()));
    }
    let mut study: Vec<&str> = trial_study.clone();
    study.extend_from_slice(&fill[..need]);
    let study_set: HashSet<&str> = study.iter().copied().collect();

    let by_id: HashMap<&str, &StimulusMeta> = pool.iter().map(|m| (m.id.as_str(), m)).collect();
    let studied_categories: HashSet<&str> = study.iter().map(|id| by_id[id].category.as_str()).collect();
    let mut novel_foils: Vec<&str> = pool
        .iter()
        .filter(|m| !studied_categories.contains(m.category.as_str()) && !study_set.contains(m.id.as_str()))
        .map(|m| m.id.as_str())
        .collect();
    novel_foils.shuffle(&mut r);
    let mut free_study: Vec<&str> = study.iter().copied().filter(|id| !fixed.contains(id)).collect();
    free_study.shuffle(&mut r);
    let available = novel_foils.len().min(free_study.len());
    if available < trials_per_condition {
        return Err(deficit("brady", Condition::Novel, trials_per_condition - available));
    }

    let mut trials = Vec::with_capacity(3 * trials_per_condition);
    for i in 0..trials_per_condition {
        trials.push(TestTrial {
            study_id: free_study[i].to_string(),
            foil_id: novel_foils[i].to_string(),
            condition: Condition::Novel,
            trial_seed: r.random(),
        });
    }
    for (condition, list) in [(Condition::Exemplar, exemplar_trials), (Condition::State, state_trials)] {
        for (study_id, foil_id) in list {
            trials.push(TestTrial {
                study_id,
                foil_id,
                condition,
                trial_seed: r.random(),
            });
        }
    }

    let mut study: Vec<String> = study.into_iter().map(str::to_string).collect();
    study.sort();
    Ok(Experiment {
        design: Design::Brady,
        build_seed: seed,
        set_version: String::new(),
        study,
        trials,
    })
}

pub const KONKLE_LEVELS: [usize; 5] = [16, 8, 4, 2, 1];

/// Konkle-style design: `categories_per_level` categories at each of 16, 8, 4,
/// 2 and 1 studied exemplars, plus novel-category foils.
///
/// Every level category needs at least one unstudied exemplar to serve as a
/// foil. Levels are filled greedily from 16 downwards over a seeded category
/// order.
pub fn build_konkle(pool: &[StimulusMeta], categories_per_level: usize, trials_per_condition: usize, seed: u64) -> Result<Experiment> {
    let mut r = rng::seeded(seed);

    // category -> one item per object (the first state)
    let mut cats: BTreeMap<&str, BTreeMap<&str, &StimulusMeta>> = BTreeMap::new();
    for m in pool.iter().filter(|m| m.role == Role::StudyPool) {
        let objs = cats.entry(&m.category).or_default();
        let slot = objs.entry(&m.object_id).or_insert(m);
        if (m.state_id.as_str(), m.id.as_str()) < (slot.state_id.as_str(), slot.id.as_str()) {
            *slot = m;
        }
    }
    let mut order: Vec<&str> = cats.keys().copied().collect();
    order.shuffle(&mut r);

    let mut assigned: HashSet<&str> = HashSet::new();
    // per category: studied ids, unstudied ids
    type PerCategory<'a> = Vec<Vec<&'a str>>;
    let mut levels: Vec<(usize, PerCategory, PerCategory)> = Vec::new();
    for level in KONKLE_LEVELS {
        let chosen: Vec<&str> = order
            .iter()
            .copied()
            .filter(|c| !assigned.contains(c) && cats[c].len() > level)
            .take(categories_per_level)
            .collect();
        if chosen.len() < categories_per_level {
            return Err(Error::KonkleDepth {
                level,
                reason: format!(
                    "need {categories_per_level} categories with at least {} exemplars, found {}",
                    level + 1,
                    chosen.len()
                ),
            });
        }
        let (mut studied, mut unseen) = (Vec::new(), Vec::new());
        for c in chosen {
            assigned.insert(c);
            let mut items: Vec<&str> = cats[c].values().map(|m| m.id.as_str()).collect();
            items.shuffle(&mut r);
            let rest = items.split_off(level);
            studied.push(items);
            unseen.push(rest);
        }
        levels.push((level, studied, unseen));
    }

    let mut study: Vec<&str> = levels.iter().flat_map(|(_, s, _)| s.iter().flatten().copied()).collect();
    let mut used: HashSet<&str> = HashSet::new();
    let mut level_trials = Vec::new();
    for (level, studied, unseen) in &levels {
        let mut got = Vec::new();
        // round-robin over categories so trials spread across the level
        let mut round = 0;
        while got.len() < trials_per_condition {
            let mut progressed = false;
            for (s, u) in studied.iter().zip(unseen) {
                if got.len() == trials_per_condition {
                    break;
                }
                if let (Some(&sid), Some(&fid)) = (s.get(round), u.get(round)) {
                    got.push((sid, fid));
                    used.insert(sid);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
            round += 1;
        }
        if got.len() < trials_per_condition {
            return Err(Error::KonkleDepth {
                level: *level,
                reason: format!(
                    "only {} of {trials_per_condition} trials can pair a studied and an unstudied exemplar",
                    got.len()
                ),
            });
        }
        level_trials.push((Condition::for_konkle_level(*level), got));
    }

    let study_set: HashSet<&str> = study.iter().copied().collect();
    let by_id: HashMap<&str, &StimulusMeta> = pool.iter().map(|m| (m.id.as_str(), m)).collect();
    let studied_categories: HashSet<&str> = study.iter().map(|id| by_id[id].category.as_str()).collect();
    let mut novel_foils: Vec<&str> = pool
        .iter()
        .filter(|m| !studied_categories.contains(m.category.as_str()) && !study_set.contains(m.id.as_str()))
        .map(|m| m.id.as_str())
        .collect();
    novel_foils.shuffle(&mut r);
    let mut free_study: Vec<&str> = study.iter().copied().filter(|id| !used.contains(id)).collect();
    free_study.shuffle(&mut r);
    let available = novel_foils.len().min(free_study.len());
    if available < trials_per_condition {
        return Err(deficit("konkle", Condition::KonkleNovel, trials_per_condition - available));
    }

    let mut trials = Vec::with_capacity(6 * trials_per_condition);
    for i in 0..trials_per_condition {
        trials.push(TestTrial {
            study_id: free_study[i].to_string(),
            foil_id: novel_foils[i].to_string(),
            condition: Condition::KonkleNovel,
            trial_seed: r.random(),
        });
    }
    for (condition, pairs) in level_trials {
        for (s, f) in pairs {
            trials.push(TestTrial {
                study_id: s.to_string(),
                foil_id: f.to_string(),
                condition,
                trial_seed: r.random(),
            });
        }
    }

    study.sort_unstable();
    Ok(Experiment {
        design: Design::Konkle,
        build_seed: seed,
        set_version: String::new(),
        study: study.into_iter().map(str::to_string).collect(),
        trials,
    })
}

/// Unrelated-foil design: every study id is studied and each of `n_trials`
/// foils is paired with a distinct, randomly chosen study item.
pub fn build_paired(design: Design, study_ids: &[String], foil_ids: &[String], n_trials: usize, seed: u64) -> Result<Experiment> {
    let condition = match design {
        Design::Noise => Condition::Noise,
        Design::Paired => Condition::Paired,
        other => {
            return Err(Error::InvalidArgument(format!("{other} is not an unrelated-foil design")));
        }
    };
    let label = design.as_str();
    let study_set: HashSet<&str> = study_ids.iter().map(String::as_str).collect();
    if study_set.len() != study_ids.len() {
        return Err(Error::InvalidArgument("duplicate study ids".into()));
    }
    if let Some(f) = foil_ids.iter().find(|f| study_set.contains(f.as_str())) {
        return Err(Error::InvalidArgument(format!("foil {f} is also a study item")));
    }
    if n_trials > study_ids.len() {
        return Err(deficit(label, "study", n_trials - study_ids.len()));
    }
    if n_trials > foil_ids.len() {
        return Err(deficit(label, condition, n_trials - foil_ids.len()));
    }
    let mut r = rng::seeded(seed);
    let mut studies: Vec<&String> = study_ids.iter().collect();
    studies.shuffle(&mut r);
    let mut foils: Vec<&String> = foil_ids.iter().collect();
    foils.shuffle(&mut r);
    let trials = studies
        .iter()
        .zip(&foils)
        .take(n_trials)
        .map(|(s, f)| TestTrial {
            study_id: (*s).clone(),
            foil_id: (*f).clone(),
            condition,
            trial_seed: r.random(),
        })
        .collect();
    Ok(Experiment {
        design,
        build_seed: seed,
        set_version: String::new(),
        study: study_ids.to_vec(),
        trials,
    })
}

/// Exhaustively verify every trial against the pool metadata. Returns one
/// message per violation.
pub fn check_relations(exp: &Experiment, pool: &[StimulusMeta]) -> std::result::Result<(), Vec<String>> {
    let by_id: HashMap<&str, &StimulusMeta> = pool.iter().map(|m| (m.id.as_str(), m)).collect();
    let study: HashSet<&str> = exp.study.iter().map(String::as_str).collect();
    let mut problems = Vec::new();
    if study.len() != exp.study.len() {
        problems.push("study list has duplicates".to_string());
    }
    let mut seen_study = HashSet::new();
    let mut seen_foil = HashSet::new();
    for (i, t) in exp.trials.iter().enumerate() {
        if !exp.design.conditions().contains(&t.condition) {
            problems.push(format!("trial {i}: condition {} not in design {}", t.condition, exp.design));
        }
        if !study.contains(t.study_id.as_str()) {
            problems.push(format!("trial {i}: study item {} was not studied", t.study_id));
        }
        if study.contains(t.foil_id.as_str()) {
            problems.push(format!("trial {i}: foil {} was studied", t.foil_id));
        }
        if !seen_study.insert(&t.study_id) {
            problems.push(format!("trial {i}: study item {} used twice", t.study_id));
        }
        if !seen_foil.insert(&t.foil_id) {
            problems.push(format!("trial {i}: foil {} used twice", t.foil_id));
        }
        let needs_meta = !matches!(t.condition, Condition::Noise | Condition::Paired);
        if !needs_meta {
            continue;
        }
        let (Some(s), Some(f)) = (by_id.get(t.study_id.as_str()), by_id.get(t.foil_id.as_str())) else {
            problems.push(format!("trial {i}: ids missing from the pool"));
            continue;
        };
        let ok = match t.condition {
            Condition::Novel | Condition::KonkleNovel => exp
                .study
                .iter()
                .all(|id| by_id.get(id.as_str()).is_some_and(|m| m.category != f.category)),
            Condition::Exemplar => s.category == f.category && s.object_id != f.object_id,
            Condition::State => s.category == f.category && s.object_id == f.object_id && s.state_id != f.state_id,
            c => {
                let level = c.konkle_level().expect("konkle level");
                let studied_in_category = exp
                    .study
                    .iter()
                    .filter(|id| by_id.get(id.as_str()).is_some_and(|m| m.category == f.category))
                    .count();
                s.category == f.category && studied_in_category == level
            }
        };
        if !ok {
            problems.push(format!("trial {i}: {} relation fails for {} / {}", t.condition, t.study_id, t.foil_id));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, cat: &str, obj: &str, state: &str, role: Role) -> StimulusMeta {
        StimulusMeta {
            id: id.into(),
            category: cat.into(),
            object_id: obj.into(),
            state_id: state.into(),
            role,
        }
    }

    fn small_brady_pool() -> Vec<StimulusMeta> {
        let mut pool = Vec::new();
        for c in 0..6 {
            for o in 0..3 {
                for s in 0..2 {
                    pool.push(meta(&format!("c{c}o{o}s{s}"), &format!("c{c}"), &format!("o{o}"), &format!("s{s}"), Role::StudyPool));
                }
            }
        }
        for n in 0..4 {
            pool.push(meta(&format!("n{n}"), &format!("n{n}"), "o0", "s0", Role::NovelFoilPool));
        }
        pool
    }

    #[test]
    fn condition_names_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!("konkle-3".parse::<Condition>().is_err());
        assert_eq!("noise".parse::<Design>().unwrap(), Design::Noise);
    }

    #[test]
    fn small_brady_is_sound_and_deterministic() {
        let pool = small_brady_pool();
        let exp = build_brady(&pool, 20, 3, 5).unwrap();
        assert_eq!(exp.study.len(), 20);
        assert_eq!(exp.trials.len(), 9);
        for c in Design::Brady.conditions() {
            assert_eq!(exp.count(*c), 3);
        }
        check_relations(&exp, &pool).unwrap();
        assert_eq!(exp, build_brady(&pool, 20, 3, 5).unwrap());
        assert_ne!(exp, build_brady(&pool, 20, 3, 6).unwrap());
    }

    #[test]
    fn brady_with_no_trials() {
        let exp = build_brady(&small_brady_pool(), 10, 0, 1).unwrap();
        assert!(exp.trials.is_empty());
        assert_eq!(exp.study.len(), 10);
    }

    #[test]
    fn brady_deficits_name_the_condition() {
        let pool = small_brady_pool();
        match build_brady(&pool, 20, 19, 1) {
            Err(Error::PoolDeficit { condition, deficit, .. }) => {
                assert_eq!(condition, "state");
                assert_eq!(deficit, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        // only the four reserve categories can supply novel foils
        match build_brady(&pool, 20, 5, 1) {
            Err(Error::PoolDeficit { condition, deficit, .. }) => assert_eq!((condition.as_str(), deficit), ("novel", 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_brady(&pool, 40, 1, 1).is_err());
    }

    #[test]
    fn checker_catches_broken_trials() {
        let pool = small_brady_pool();
        let mut exp = build_brady(&pool, 20, 2, 3).unwrap();
        check_relations(&exp, &pool).unwrap();
        let state = exp.trials.iter().position(|t| t.condition == Condition::State).unwrap();
        exp.trials[state].condition = Condition::Exemplar;
        let novel = exp.trials.iter().position(|t| t.condition == Condition::Novel).unwrap();
        exp.trials[novel].foil_id = exp.study[0].clone();
        let problems = check_relations(&exp, &pool).unwrap_err();
        assert!(problems.len() >= 2);
    }

    fn konkle_pool(cats: usize, depth: usize) -> Vec<StimulusMeta> {
        (0..cats)
            .flat_map(|c| (0..depth).map(move |o| meta(&format!("k{c}-{o}"), &format!("k{c}"), &format!("o{o}"), "s0", Role::StudyPool)))
            .collect()
    }

    #[test]
    fn minimal_konkle() {
        let pool = konkle_pool(6, 17);
        let exp = build_konkle(&pool, 1, 1, 2).unwrap();
        assert_eq!(exp.study.len(), 31);
        assert_eq!(exp.trials.len(), 6);
        check_relations(&exp, &pool).unwrap();
    }

    #[test]
    fn konkle_depth_errors_name_the_level() {
        // nobody can host the 16 level
        match build_konkle(&konkle_pool(6, 16), 1, 1, 0) {
            Err(Error::KonkleDepth { level, .. }) => assert_eq!(level, 16),
            other => panic!("unexpected {other:?}"),
        }
        // one studied exemplar cannot serve two trials
        match build_konkle(&konkle_pool(6, 18), 1, 2, 0) {
            Err(Error::KonkleDepth { level, .. }) => assert_eq!(level, 1),
            other => panic!("unexpected {other:?}"),
        }
        // six categories run out after three levels of two
        match build_konkle(&konkle_pool(6, 17), 2, 1, 0) {
            Err(Error::KonkleDepth { level, .. }) => assert_eq!(level, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn paired_design() {
        let study: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let foils: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let exp = build_paired(Design::Noise, &study, &foils, 4, 9).unwrap();
        assert_eq!(exp.trials.len(), 4);
        assert!(exp.trials.iter().all(|t| t.condition == Condition::Noise));
        check_relations(&exp, &[]).unwrap();
        assert!(matches!(build_paired(Design::Noise, &study, &foils, 5, 9), Err(Error::PoolDeficit { .. })));
        assert!(build_paired(Design::Brady, &study, &foils, 1, 9).is_err());
        assert!(build_paired(Design::Paired, &study, &study[..1], 1, 9).is_err());
    }

    #[test]
    fn json_round_trip() {
        let exp = build_brady(&small_brady_pool(), 12, 1, 4).unwrap().with_version("A");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        exp.save(&path).unwrap();
        assert_eq!(Experiment::load(&path).unwrap(), exp);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["design"], "brady");
        assert!(v["trials"][0]["trial_seed"].is_u64());
    }
}
