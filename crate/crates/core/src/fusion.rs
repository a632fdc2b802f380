//! Pixelwise ensemble fusion.
//!
//! Every member casts a hard vote (its argmax class) at each pixel. Plain
//! majority counts votes; the calibrated variants weight each member by
//! `1 / max(CE, epsilon)` where CE is its ECE or MCE on the validation split;
//! MVEM takes a pixelwise majority over the majority, ECE-weighted and
//! MCE-weighted masks.
//!
//! Ties in the vote score are broken by the members' summed probability for
//! the tied classes, then by the lowest class index (class 0 is background).
//! Sums run over members in a fixed (manifest) order, so results are
//! bit-reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationReport;
use crate::error::{Error, Result};
use crate::tensor_store::{argmax, read_probmap, LabelMask, Manifest, ProbMap, Split};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const TIE_RULE: &str = "vote-score > summed-probability > lowest-class (v1)";
pub const LOG_VERSION: u32 = 1;

/// Above this many members the subset-sum table is skipped.
const MAX_TABLE_MEMBERS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Majority,
    WeightedEce,
    WeightedMce,
    Mvem,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 4] = [
        FusionMethod::Majority,
        FusionMethod::WeightedEce,
        FusionMethod::WeightedMce,
        FusionMethod::Mvem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Majority => "majority",
            FusionMethod::WeightedEce => "weighted_ece",
            FusionMethod::WeightedMce => "weighted_mce",
            FusionMethod::Mvem => "mvem",
        }
    }

    pub fn needs_calibration(self) -> bool {
        self != FusionMethod::Majority
    }

    /// Methods whose masks this method is built from.
    pub fn constituents(self) -> Vec<FusionMethod> {
        match self {
            FusionMethod::Mvem => vec![
                FusionMethod::Majority,
                FusionMethod::WeightedEce,
                FusionMethod::WeightedMce,
            ],
            other => vec![other],
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown fusion method `{s}` (expected majority, weighted_ece, weighted_mce or mvem)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeKind {
    Ece,
    Mce,
}

impl CeKind {
    pub fn of(self, report: &CalibrationReport) -> f64 {
        match self {
            CeKind::Ece => report.ece,
            CeKind::Mce => report.mce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub model_id: String,
    pub ce: f64,
    pub weight: f64,
}

pub fn weight_from_ce(ce: f64, epsilon: f64) -> f64 {
    1.0 / ce.max(epsilon)
}

/// `1 / max(ce, epsilon)` per report, in the order given.
pub fn derive_weights<'a>(
    reports: impl IntoIterator<Item = &'a CalibrationReport>,
    kind: CeKind,
    epsilon: f64,
) -> Vec<ModelWeight> {
    reports
        .into_iter()
        .map(|r| {
            let ce = kind.of(r);
            ModelWeight {
                model_id: r.model_id.clone(),
                ce,
                weight: weight_from_ce(ce, epsilon),
            }
        })
        .collect()
}

/// Picks the winning class from per-class vote scores.
///
/// `mass(c)` is consulted only when the top score is shared; it returns the
/// members' summed probability for class `c`.
pub fn resolve_vote(scores: &[f64], mut mass: impl FnMut(usize) -> f64) -> usize {
    let mut best = 0;
    let mut tied = false;
    for c in 1..scores.len() {
        if scores[c] > scores[best] {
            best = c;
            tied = false;
        } else if scores[c] == scores[best] {
            tied = true;
        }
    }
    if !tied {
        return best;
    }
    let top = scores[best];
    let mut winner = best;
    let mut winner_mass = mass(best);
    for (c, &score) in scores.iter().enumerate().skip(best + 1) {
        if score == top {
            let m = mass(c);
            if m > winner_mass {
                winner = c;
                winner_mass = m;
            }
        }
    }
    winner
}

/// Majority vote for one pixel. `mass[c]` is the summed member probability
/// of class `c`, used only to break ties.
pub fn majority_vote(votes: &[u8], mass: &[f64]) -> u8 {
    weighted_vote(votes, &vec![1.0; votes.len()], mass)
}

/// Weighted vote for one pixel: the class with the largest summed weight of
/// members voting for it.
pub fn weighted_vote(votes: &[u8], weights: &[f64], mass: &[f64]) -> u8 {
    assert_eq!(votes.len(), weights.len(), "votes and weights must align");
    let mut scores = vec![0.0f64; mass.len()];
    for (&v, &w) in votes.iter().zip(weights) {
        scores[v as usize] += w;
    }
    resolve_vote(&scores, |c| mass[c]) as u8
}

/// Per-member weights for the calibrated methods, aligned with the members.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberWeights {
    pub ece: Vec<f64>,
    pub mce: Vec<f64>,
}

impl MemberWeights {
    fn for_method(&self, method: FusionMethod) -> &[f64] {
        match method {
            FusionMethod::WeightedEce => &self.ece,
            FusionMethod::WeightedMce => &self.mce,
            _ => unreachable!("only weighted methods carry weights"),
        }
    }
}

/// A fused mask together with the ensemble's probability map.
///
/// The map is the members' probabilities averaged with the method's weights
/// (uniform for majority, mean of the three constituent maps for MVEM); it
/// supplies the confidence of the fused prediction for calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedImage {
    pub mask: LabelMask,
    pub probs: ProbMap,
}

/// Precomputed score of every subset of voters, indexed by bitmask. Sums run
/// over set bits in ascending order, matching a member-order loop bit for bit.
struct ScoreTable {
    weights: Vec<f64>,
    table: Option<Vec<f64>>,
}

impl ScoreTable {
    fn new(weights: &[f64]) -> Self {
        let table = (weights.len() <= MAX_TABLE_MEMBERS).then(|| {
            (0..1usize << weights.len())
                .map(|mask| Self::direct(weights, mask as u64))
                .collect()
        });
        ScoreTable {
            weights: weights.to_vec(),
            table,
        }
    }

    fn direct(weights: &[f64], mask: u64) -> f64 {
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sum += w;
            }
        }
        sum
    }

    #[inline]
    fn score(&self, mask: u64) -> f64 {
        match &self.table {
            Some(t) => t[mask as usize],
            None => Self::direct(&self.weights, mask),
        }
    }
}

/// Resolves every pixel from `voters` (one vote plane each) under `weights`.
/// Ties are broken with the probability mass of `members`.
fn vote_planes(voters: &[&[u8]], weights: &[f64], members: &[&ProbMap]) -> Vec<u8> {
    debug_assert!(voters.len() <= 64);
    let table = ScoreTable::new(weights);
    let pixels = voters[0].len();
    let mut out = Vec::with_capacity(pixels);
    // (class, voter bitmask) for the classes that received a vote
    let mut ballot: Vec<(u8, u64)> = Vec::with_capacity(voters.len());
    for p in 0..pixels {
        ballot.clear();
        for (i, plane) in voters.iter().enumerate() {
            let class = plane[p];
            match ballot.iter_mut().find(|(c, _)| *c == class) {
                Some((_, mask)) => *mask |= 1 << i,
                None => ballot.push((class, 1 << i)),
            }
        }
        if ballot.len() == 1 {
            out.push(ballot[0].0);
            continue;
        }
        let mut best = ballot[0].0;
        let mut best_score = table.score(ballot[0].1);
        let mut tied = false;
        for &(class, mask) in &ballot[1..] {
            let s = table.score(mask);
            if s > best_score {
                best = class;
                best_score = s;
                tied = false;
            } else if s == best_score {
                tied = true;
            }
        }
        if tied {
            let mass = |c: u8| -> f64 {
                let mut sum = 0.0f64;
                for m in members {
                    sum += m.pixel(p)[c as usize] as f64;
                }
                sum
            };
            let mut winner: Option<(u8, f64)> = None;
            for &(class, mask) in &ballot {
                if table.score(mask) != best_score {
                    continue;
                }
                let m = mass(class);
                winner = match winner {
                    Some((wc, wm)) if wm > m || (wm == m && wc < class) => Some((wc, wm)),
                    _ => Some((class, m)),
                };
            }
            best = winner.expect("at least one tied class").0;
        }
        out.push(best);
    }
    out
}

fn weighted_mean_map(maps: &[&ProbMap], weights: &[f64]) -> Result<ProbMap> {
    let total: f64 = weights.iter().sum();
    let len = maps[0].data().len();
    let mut data = Vec::with_capacity(len);
    for i in 0..len {
        let mut acc = 0.0f64;
        for (m, &w) in maps.iter().zip(weights) {
            acc += w * m.data()[i] as f64;
        }
        data.push((acc / total) as f32);
    }
    ProbMap::new(maps[0].height(), maps[0].width(), maps[0].classes(), data)
}

fn check_members(members: &[&ProbMap]) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::Config(format!(
            "fusion needs at least 2 members, got {}",
            members.len()
        )));
    }
    if members.len() > 64 {
        return Err(Error::Config("fusion supports at most 64 members".into()));
    }
    let first = members[0];
    for m in &members[1..] {
        if !first.same_shape(m) {
            return Err(Error::DimensionMismatch {
                left: format!("{}x{}x{}", first.height(), first.width(), first.classes()),
                right: format!("{}x{}x{}", m.height(), m.width(), m.classes()),
            });
        }
    }
    Ok(())
}

fn check_weights(weights: &[f64], members: usize) -> Result<()> {
    if weights.len() != members {
        return Err(Error::Config(format!(
            "{} weights for {members} members",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Config(format!(
            "weight {w} is not a positive finite number"
        )));
    }
    Ok(())
}

/// Fuses aligned member probability maps of one image.
pub fn fuse(
    members: &[&ProbMap],
    method: FusionMethod,
    weights: Option<&MemberWeights>,
) -> Result<FusedImage> {
    check_members(members)?;
    let weights = if method.needs_calibration() {
        let w = weights.ok_or_else(|| {
            Error::Config(format!("method {method} needs calibration-derived weights"))
        })?;
        check_weights(&w.ece, members.len())?;
        check_weights(&w.mce, members.len())?;
        Some(w)
    } else {
        None
    };
    let planes: Vec<Vec<u8>> = members
        .iter()
        .map(|m| m.pixels().map(|p| argmax(p).0 as u8).collect())
        .collect();
    let planes: Vec<&[u8]> = planes.iter().map(Vec::as_slice).collect();
    let uniform = vec![1.0; members.len()];

    let single = |method: FusionMethod| -> Result<(Vec<u8>, ProbMap)> {
        let w: &[f64] = match method {
            FusionMethod::Majority => &uniform,
            _ => weights.expect("checked above").for_method(method),
        };
        Ok((
            vote_planes(&planes, w, members),
            weighted_mean_map(members, w)?,
        ))
    };

    let (mask, probs) = match method {
        FusionMethod::Mvem => {
            let parts = method
                .constituents()
                .into_iter()
                .map(single)
                .collect::<Result<Vec<_>>>()?;
            let voters: Vec<&[u8]> = parts.iter().map(|(v, _)| v.as_slice()).collect();
            let maps: Vec<&ProbMap> = parts.iter().map(|(_, p)| p).collect();
            let mask = vote_planes(&voters, &[1.0; 3], members);
            (mask, weighted_mean_map(&maps, &[1.0; 3])?)
        }
        other => single(other)?,
    };
    Ok(FusedImage {
        mask: LabelMask::new(members[0].height(), members[0].width(), mask)?,
        probs,
    })
}

/// What to fuse and how.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub members: Vec<String>,
    pub split: Split,
    pub bins: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberLog {
    pub model_id: String,
    pub ece: Option<f64>,
    pub mce: Option<f64>,
    pub weight_ece: Option<f64>,
    pub weight_mce: Option<f64>,
}

/// Record of one fusion run, written next to the fused masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionLog {
    pub format_version: u32,
    pub method: FusionMethod,
    pub constituents: Vec<FusionMethod>,
    pub split: Split,
    pub calibration_split: Split,
    pub members: Vec<MemberLog>,
    #[serde(rename = "K")]
    pub bin_count: usize,
    pub epsilon: f64,
    pub tie_rule: String,
}

impl FusionLog {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// A validated fusion configuration bound to a manifest, with members in
/// manifest order and weights resolved.
#[derive(Debug, Clone)]
pub struct FusionPlan {
    pub config: FusionConfig,
    pub members: Vec<String>,
    pub weights: Option<MemberWeights>,
    log: FusionLog,
}

impl FusionPlan {
    /// `reports` must hold a validation-split report for every member when
    /// the method is calibrated; extra reports are ignored.
    pub fn new(
        manifest: &Manifest,
        config: FusionConfig,
        reports: &[CalibrationReport],
    ) -> Result<Self> {
        if !(config.epsilon.is_finite() && config.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                config.epsilon
            )));
        }
        let mut indexed = Vec::with_capacity(config.members.len());
        for id in &config.members {
            let index = manifest
                .model_index(id)
                .ok_or_else(|| Error::Config(format!("member `{id}` is not in the manifest")))?;
            if indexed.iter().any(|&(i, _)| i == index) {
                return Err(Error::Config(format!("member `{id}` listed twice")));
            }
            indexed.push((index, id.clone()));
        }
        indexed.sort();
        let members: Vec<String> = indexed.into_iter().map(|(_, id)| id).collect();
        if members.len() < 2 {
            let what = if config.method == FusionMethod::Mvem {
                "mvem needs its 3 constituent methods, which need at least 2 members"
            } else {
                "fusion needs at least 2 members"
            };
            return Err(Error::Config(format!("{what}; got {}", members.len())));
        }

        let mut found = Vec::with_capacity(members.len());
        for id in &members {
            let report = reports.iter().find(|r| &r.model_id == id);
            if let Some(r) = report {
                if r.split != Split::Validation {
                    return Err(Error::Config(format!(
                        "calibration report for `{id}` is on the {} split; weights must come from validation",
                        r.split
                    )));
                }
                if r.bin_count != config.bins {
                    return Err(Error::Config(format!(
                        "calibration report for `{id}` uses K={}, run uses K={}",
                        r.bin_count, config.bins
                    )));
                }
            } else if config.method.needs_calibration() {
                return Err(Error::Config(format!(
                    "no validation calibration report for member `{id}` (needed by {})",
                    config.method
                )));
            }
            found.push(report);
        }

        let weights = found.iter().all(Option::is_some).then(|| {
            let reports: Vec<&CalibrationReport> = found.iter().map(|r| r.unwrap()).collect();
            let pick = |kind| {
                derive_weights(reports.iter().copied(), kind, config.epsilon)
                    .into_iter()
                    .map(|w| w.weight)
                    .collect()
            };
            MemberWeights {
                ece: pick(CeKind::Ece),
                mce: pick(CeKind::Mce),
            }
        });

        let log = FusionLog {
            format_version: LOG_VERSION,
            method: config.method,
            constituents: config.method.constituents(),
            split: config.split,
            calibration_split: Split::Validation,
            members: members
                .iter()
                .zip(&found)
                .enumerate()
                .map(|(i, (id, report))| MemberLog {
                    model_id: id.clone(),
                    ece: report.map(|r| r.ece),
                    mce: report.map(|r| r.mce),
                    weight_ece: weights.as_ref().map(|w| w.ece[i]),
                    weight_mce: weights.as_ref().map(|w| w.mce[i]),
                })
                .collect(),
            bin_count: config.bins,
            epsilon: config.epsilon,
            tie_rule: TIE_RULE.to_owned(),
        };

        Ok(FusionPlan {
            config,
            members,
            weights,
            log,
        })
    }

    pub fn log(&self) -> &FusionLog {
        &self.log
    }

    pub fn fuse_loaded(&self, maps: &[&ProbMap]) -> Result<FusedImage> {
        fuse(maps, self.config.method, self.weights.as_ref())
    }
}

/// Loads every member's map for `image_id` and fuses them.
pub fn fuse_image(image_id: &str, plan: &FusionPlan, manifest: &Manifest) -> Result<FusedImage> {
    let split = plan.config.split;
    let maps = plan
        .members
        .iter()
        .map(|id| {
            let path = manifest.prediction_path(id, split, image_id)?;
            if !path.is_file() {
                return Err(Error::MissingPrediction {
                    model_id: id.clone(),
                    image_id: image_id.to_owned(),
                    path,
                });
            }
            read_probmap(path).map_err(|e| e.in_image(id, image_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ProbMap> = maps.iter().collect();
    plan.fuse_loaded(&refs)
}
