//! Reference implementations written straight from the definitions, plus the
//! random instance generators and suite runners built on them. Shared by the
//! integration tests here and by the CLI crate's acceptance target.
#![allow(dead_code)]

use calfuse::calibration::{compute_calibration, BinTable};
use calfuse::fusion::{fuse, FusionMethod, MemberWeights};
use calfuse::metrics::{aggregate, confusion, metrics_from_counts, MetricSet};
use calfuse::tensor_store::{LabelMask, ProbMap};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};

pub const BIN_CHOICES: [usize; 4] = [5, 10, 15, 20];
pub const MAX_PAIRS: usize = 10_000;
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Confidences on the grid `j / 2^GRID_BITS` are exact in binary, so their
/// bin sums can be kept as integers.
pub const GRID_BITS: u32 = 20;
const GRID: u64 = 1 << GRID_BITS;

// ---------------------------------------------------------------- calibration

pub struct Population {
    pub bins: usize,
    pub pairs: Vec<(f64, bool)>,
    /// Grid numerators, present when every confidence lies on the grid.
    pub grid: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveCalibration {
    pub counts: Vec<u64>,
    pub ece: f64,
    pub mce: f64,
}

/// 1-based bin found by scanning the intervals ((k-1)/K, k/K]; zero goes to
/// the first bin.
pub fn naive_bin(confidence: f64, bins: usize) -> usize {
    if confidence == 0.0 {
        return 1;
    }
    for k in 1..=bins {
        let lower = (k - 1) as f64 / bins as f64;
        let upper = k as f64 / bins as f64;
        if confidence > lower && confidence <= upper {
            return k;
        }
    }
    panic!("confidence {confidence} outside [0, 1]");
}

/// Neumaier-compensated sum.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn naive_calibration(pairs: &[(f64, bool)], bins: usize) -> NaiveCalibration {
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut correct = vec![0u64; bins];
    for &(c, ok) in pairs {
        let k = naive_bin(c, bins) - 1;
        members[k].push(c);
        correct[k] += ok as u64;
    }
    let n = pairs.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    for (k, confs) in members.iter().enumerate() {
        if confs.is_empty() {
            continue;
        }
        let count = confs.len() as f64;
        let gap = (correct[k] as f64 / count - compensated_sum(confs) / count).abs();
        ece += count / n * gap;
        mce = mce.max(gap);
    }
    NaiveCalibration {
        counts: members.iter().map(|m| m.len() as u64).collect(),
        ece,
        mce,
    }
}

/// ECE and MCE for grid confidences, computed with integers only and
/// divided once at the end.
///
/// With conf = j / G, a bin's gap is |correct·G − Σj| / (n·G), so ECE is
/// Σ|correct·G − Σj| / (N·G) exactly.
pub fn exact_grid_calibration(grid: &[u64], correct: &[bool], bins: usize) -> (f64, f64) {
    let k_of = |j: u64| -> usize {
        if j == 0 {
            0
        } else {
            ((j * bins as u64).div_ceil(GRID) - 1) as usize
        }
    };
    let mut count = vec![0u128; bins];
    let mut hits = vec![0u128; bins];
    let mut sum = vec![0u128; bins];
    for (&j, &ok) in grid.iter().zip(correct) {
        let k = k_of(j);
        count[k] += 1;
        hits[k] += ok as u128;
        sum[k] += j as u128;
    }
    let g = GRID as u128;
    let mut ece_num = 0u128;
    // best gap so far as the fraction (num, den)
    let mut mce = (0u128, 1u128);
    for k in 0..bins {
        if count[k] == 0 {
            continue;
        }
        let num = (hits[k] * g).abs_diff(sum[k]);
        ece_num += num;
        let den = count[k] * g;
        if num * mce.1 > mce.0 * den {
            mce = (num, den);
        }
    }
    let total = grid.len() as u128 * g;
    (ece_num as f64 / total as f64, mce.0 as f64 / mce.1 as f64)
}

pub fn random_population(rng: &mut StdRng) -> Population {
    let bins = BIN_CHOICES[rng.random_range(0..BIN_CHOICES.len())];
    let n = rng.random_range(1..=MAX_PAIRS);
    let skew: f64 = rng.random_range(-0.3..0.3);
    let style = rng.random_range(0..4u32);
    let mut grid = (style == 1).then(Vec::new);
    let centre: f64 = rng.random();
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let c = match style {
            0 => {
                if rng.random_bool(0.01) {
                    1.0
                } else {
                    rng.random::<f64>()
                }
            }
            1 => {
                let j = rng.random_range(0..=GRID);
                grid.as_mut().unwrap().push(j);
                j as f64 / GRID as f64
            }
            2 => {
                // exact bin edges and their immediate neighbours
                let k = rng.random_range(0..=bins);
                let edge = k as f64 / bins as f64;
                match rng.random_range(0..3u32) {
                    0 if edge > 0.0 => f64::from_bits(edge.to_bits() - 1),
                    1 if edge < 1.0 => f64::from_bits(edge.to_bits() + 1),
                    _ => edge,
                }
            }
            _ => (centre + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0),
        };
        let ok = rng.random_bool((c + skew).clamp(0.0, 1.0));
        pairs.push((c, ok));
    }
    Population { bins, pairs, grid }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CalibrationSuiteStats {
    pub populations: usize,
    pub grid_populations: usize,
    pub pairs: usize,
    pub worst_error: f64,
}

fn check_population(rng: &mut StdRng, pop: &Population) -> Result<f64, String> {
    let bins = pop.bins;
    let got = compute_calibration(pop.pairs.iter().copied(), bins).map_err(|e| e.to_string())?;
    let naive = naive_calibration(&pop.pairs, bins);
    let counts: Vec<u64> = got.bins.iter().map(|b| b.count).collect();
    if counts != naive.counts {
        return Err(format!(
            "bin counts {counts:?} != reference {:?}",
            naive.counts
        ));
    }
    if got.n != pop.pairs.len() as u64 {
        return Err(format!("N = {} for {} pairs", got.n, pop.pairs.len()));
    }
    if !(0.0 <= got.ece && got.ece <= got.mce && got.mce <= 1.0) {
        return Err(format!(
            "ordering violated: ece {} mce {}",
            got.ece, got.mce
        ));
    }
    let mut worst = (got.ece - naive.ece).abs().max((got.mce - naive.mce).abs());
    if let Some(grid) = &pop.grid {
        let correct: Vec<bool> = pop.pairs.iter().map(|p| p.1).collect();
        let (ece, mce) = exact_grid_calibration(grid, &correct, bins);
        worst = worst.max((got.ece - ece).abs()).max((got.mce - mce).abs());
    }
    if worst > ORACLE_TOLERANCE {
        return Err(format!(
            "K={bins} N={}: ece {} / {} mce {} / {} (error {worst:e})",
            pop.pairs.len(),
            got.ece,
            naive.ece,
            got.mce,
            naive.mce
        ));
    }
    let recomputed: f64 = got
        .bins
        .iter()
        .filter_map(|b| Some(b.count as f64 / got.n as f64 * b.gap()?))
        .sum();
    if (recomputed - got.ece).abs() > ORACLE_TOLERANCE {
        return Err(format!(
            "ece {} != {recomputed} recomputed from bins",
            got.ece
        ));
    }

    let mut shuffled = pop.pairs.clone();
    shuffled.shuffle(rng);
    let again = compute_calibration(shuffled.iter().copied(), bins).map_err(|e| e.to_string())?;
    if again.ece.to_bits() != got.ece.to_bits()
        || again.mce.to_bits() != got.mce.to_bits()
        || again.bins != got.bins
    {
        return Err(format!(
            "shuffling changed the result: ece {} -> {}, mce {} -> {}",
            got.ece, again.ece, got.mce, again.mce
        ));
    }

    let cut = rng.random_range(0..=shuffled.len());
    let mut left = BinTable::new(bins).unwrap();
    let mut right = BinTable::new(bins).unwrap();
    left.extend(shuffled[..cut].iter().copied());
    right.extend(shuffled[cut..].iter().copied());
    right.merge(&left);
    let merged = right.summarize().map_err(|e| e.to_string())?;
    if merged.ece.to_bits() != got.ece.to_bits() || merged.mce.to_bits() != got.mce.to_bits() {
        return Err(format!(
            "merging a split at {cut} changed ece {} -> {}",
            got.ece, merged.ece
        ));
    }
    Ok(worst)
}

/// Random populations against both references, with permutation and
/// split/merge checks. Returns the first disagreement.
pub fn calibration_suite(seed: u64, populations: usize) -> Result<CalibrationSuiteStats, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut stats = CalibrationSuiteStats::default();
    for i in 0..populations {
        let pop = random_population(&mut rng);
        let worst = check_population(&mut rng, &pop).map_err(|e| format!("population {i}: {e}"))?;
        stats.populations += 1;
        stats.grid_populations += pop.grid.is_some() as usize;
        stats.pairs += pop.pairs.len();
        stats.worst_error = stats.worst_error.max(worst);
    }
    Ok(stats)
}

// --------------------------------------------------------------------- fusion

pub const FUSION_SIDE: usize = 16;
pub const FUSION_EPSILON: f64 = 1e-6;

pub struct FusionInstance {
    pub maps: Vec<ProbMap>,
    pub ece: Vec<f64>,
    pub mce: Vec<f64>,
}

impl FusionInstance {
    pub fn refs(&self) -> Vec<&ProbMap> {
        self.maps.iter().collect()
    }

    pub fn weights(&self) -> MemberWeights {
        MemberWeights {
            ece: inverse_ce(&self.ece),
            mce: inverse_ce(&self.mce),
        }
    }
}

pub fn inverse_ce(ce: &[f64]) -> Vec<f64> {
    ce.iter().map(|&c| 1.0 / c.max(FUSION_EPSILON)).collect()
}

/// Lowest index among the maximal entries.
pub fn ref_argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for c in 0..p.len() {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

/// One pixel: weight sums per class in member order, then summed member
/// probability among the tied classes, then the lowest class.
pub fn ref_vote(
    votes: &[usize],
    weights: &[f64],
    mass: &dyn Fn(usize) -> f64,
    classes: usize,
) -> (usize, bool) {
    let mut score = vec![0.0f64; classes];
    let mut voted = vec![false; classes];
    for (&v, &w) in votes.iter().zip(weights) {
        score[v] += w;
        voted[v] = true;
    }
    let top = (0..classes)
        .filter(|&c| voted[c])
        .map(|c| score[c])
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..classes)
        .filter(|&c| voted[c] && score[c] == top)
        .collect();
    if tied.len() == 1 {
        return (tied[0], false);
    }
    let mut best = tied[0];
    for &c in &tied[1..] {
        if mass(c) > mass(best) {
            best = c;
        }
    }
    (best, true)
}

/// Per-pixel reference fusion. Returns the mask and how many pixels needed
/// the tie cascade.
pub fn ref_fuse(maps: &[ProbMap], method: FusionMethod, w: &MemberWeights) -> (Vec<u8>, usize) {
    let classes = maps[0].classes();
    let mut out = Vec::with_capacity(maps[0].pixel_count());
    let mut ties = 0;
    for p in 0..maps[0].pixel_count() {
        let mass = |c: usize| -> f64 {
            let mut s = 0.0f64;
            for m in maps {
                s += m.pixel(p)[c] as f64;
            }
            s
        };
        let votes: Vec<usize> = maps.iter().map(|m| ref_argmax(m.pixel(p))).collect();
        let ones = vec![1.0; maps.len()];
        let mut run = |weights: &[f64], votes: &[usize]| {
            let (c, tied) = ref_vote(votes, weights, &mass, classes);
            ties += tied as usize;
            c
        };
        let class = match method {
            FusionMethod::Majority => run(&ones, &votes),
            FusionMethod::WeightedEce => run(&w.ece, &votes),
            FusionMethod::WeightedMce => run(&w.mce, &votes),
            FusionMethod::Mvem => {
                let parts = [run(&ones, &votes), run(&w.ece, &votes), run(&w.mce, &votes)];
                run(&[1.0; 3], &parts)
            }
        };
        out.push(class as u8);
    }
    (out, ties)
}

/// Reference ensemble probability: the weighted mean of member maps.
pub fn ref_mean(maps: &[&ProbMap], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    (0..maps[0].data().len())
        .map(|i| {
            maps.iter()
                .zip(weights)
                .map(|(m, w)| w * m.data()[i] as f64)
                .sum::<f64>()
                / total
        })
        .collect()
}

fn normalized(raw: &[f32]) -> Vec<f32> {
    let s: f32 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Quarter-step probability vectors: exactly representable, so member
/// probability sums tie often.
fn quarter_pixel(rng: &mut StdRng, classes: usize) -> Vec<f32> {
    let mut parts = vec![0u32; classes];
    for _ in 0..4 {
        parts[rng.random_range(0..classes)] += 1;
    }
    parts.iter().map(|&q| q as f32 / 4.0).collect()
}

/// A random 16x16 instance with 2 to 5 members. Tie-heavy instances use
/// quarter-step probabilities and duplicated CEs so every stage of the
/// tie cascade is reached.
pub fn random_fusion_instance(rng: &mut StdRng, tie_heavy: bool) -> FusionInstance {
    let members = rng.random_range(2..=5usize);
    let classes = if rng.random_bool(0.3) { 3 } else { 2 };
    let pixels = FUSION_SIDE * FUSION_SIDE;
    let truth: Vec<usize> = (0..pixels).map(|_| rng.random_range(0..classes)).collect();
    let maps = (0..members)
        .map(|_| {
            let skill: f32 = rng.random_range(0.0..3.0);
            let mut data = Vec::with_capacity(pixels * classes);
            for &t in &truth {
                if tie_heavy {
                    data.extend(quarter_pixel(rng, classes));
                } else {
                    let raw: Vec<f32> = (0..classes)
                        .map(|c| rng.random::<f32>() + 0.01 + if c == t { skill } else { 0.0 })
                        .collect();
                    data.extend(normalized(&raw));
                }
            }
            ProbMap::new(FUSION_SIDE, FUSION_SIDE, classes, data).unwrap()
        })
        .collect();
    let draw_ce = |rng: &mut StdRng| -> Vec<f64> {
        if tie_heavy {
            let pool = [rng.random_range(0.005..0.2), rng.random_range(0.005..0.2)];
            (0..members).map(|_| pool[rng.random_range(0..2)]).collect()
        } else {
            (0..members).map(|_| rng.random_range(0.005..0.2)).collect()
        }
    };
    let ece = draw_ce(rng);
    let mce = draw_ce(rng);
    FusionInstance { maps, ece, mce }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FusionSuiteStats {
    pub instances: usize,
    pub pixels: usize,
    pub tie_pixels: usize,
    pub by_members: [usize; 6],
}

fn check_fusion_instance(rng: &mut StdRng, inst: &FusionInstance) -> Result<usize, String> {
    let refs = inst.refs();
    let weights = inst.weights();
    let mut ties = 0;
    for method in FusionMethod::ALL {
        let got = fuse(&refs, method, Some(&weights)).map_err(|e| e.to_string())?;
        let (want, t) = ref_fuse(&inst.maps, method, &weights);
        ties += t;
        if got.mask.data() != want.as_slice() {
            let p = want
                .iter()
                .zip(got.mask.data())
                .position(|(a, b)| a != b)
                .unwrap();
            return Err(format!(
                "{method}: pixel {p} fused to {} but the reference says {}",
                got.mask.data()[p],
                want[p]
            ));
        }
        if method != FusionMethod::Mvem {
            let w: Vec<f64> = match method {
                FusionMethod::Majority => vec![1.0; refs.len()],
                FusionMethod::WeightedEce => weights.ece.clone(),
                _ => weights.mce.clone(),
            };
            let mean = ref_mean(&refs, &w);
            if let Some((i, (a, b))) = got
                .probs
                .data()
                .iter()
                .zip(&mean)
                .enumerate()
                .find(|(_, (a, b))| (**a as f64 - **b).abs() > 1e-6)
            {
                return Err(format!(
                    "{method}: ensemble probability {i} is {a}, expected {b}"
                ));
            }
        }
    }

    // Common scaling of every CE changes no mask.
    let c: f64 = if rng.random_bool(0.5) {
        rng.random_range(0.1..10.0)
    } else {
        2f64.powi(rng.random_range(-3..4))
    };
    let scaled = MemberWeights {
        ece: inverse_ce(&inst.ece.iter().map(|x| x * c).collect::<Vec<_>>()),
        mce: inverse_ce(&inst.mce.iter().map(|x| x * c).collect::<Vec<_>>()),
    };
    for method in [
        FusionMethod::WeightedEce,
        FusionMethod::WeightedMce,
        FusionMethod::Mvem,
    ] {
        let a = fuse(&refs, method, Some(&weights)).unwrap().mask;
        let b = fuse(&refs, method, Some(&scaled)).unwrap().mask;
        if a != b {
            return Err(format!(
                "{method}: scaling every CE by {c} changed the mask"
            ));
        }
    }

    // Equal CEs reduce the weighted vote to a plain majority.
    let majority = fuse(&refs, FusionMethod::Majority, None).unwrap().mask;
    if refs.len() % 2 == 1 {
        let same = rng.random_range(0.005..0.2);
        let equal = MemberWeights {
            ece: inverse_ce(&vec![same; refs.len()]),
            mce: inverse_ce(&vec![same; refs.len()]),
        };
        for method in [
            FusionMethod::WeightedEce,
            FusionMethod::WeightedMce,
            FusionMethod::Mvem,
        ] {
            if fuse(&refs, method, Some(&equal)).unwrap().mask != majority {
                return Err(format!("{method}: equal CEs differ from majority"));
            }
        }
    }

    // A member outweighing all others together decides every pixel.
    let lead = rng.random_range(0..refs.len());
    let mut ce = inst.ece.clone();
    let others: f64 = inverse_ce(&ce)
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != lead)
        .map(|(_, w)| w)
        .sum();
    ce[lead] = 1.0 / (others * 2.0);
    let dominant = MemberWeights {
        ece: inverse_ce(&ce),
        mce: weights.mce.clone(),
    };
    let fused = fuse(&refs, FusionMethod::WeightedEce, Some(&dominant))
        .unwrap()
        .mask;
    if fused != refs[lead].argmax_mask() {
        return Err(format!(
            "member {lead} outweighs the rest but does not decide the mask"
        ));
    }
    Ok(ties)
}

/// Random instances (half of them tie-heavy) against the per-pixel
/// reference, plus scale invariance, equal-CE degeneracy, and dominance.
pub fn fusion_suite(seed: u64, instances: usize) -> Result<FusionSuiteStats, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut stats = FusionSuiteStats::default();
    for i in 0..instances {
        let inst = random_fusion_instance(&mut rng, i % 2 == 1);
        let ties =
            check_fusion_instance(&mut rng, &inst).map_err(|e| format!("instance {i}: {e}"))?;
        stats.instances += 1;
        stats.pixels += FUSION_SIDE * FUSION_SIDE;
        stats.tie_pixels += ties;
        stats.by_members[inst.maps.len()] += 1;
    }
    Ok(stats)
}

// -------------------------------------------------------------------- metrics

/// Counts by a direct per-pixel loop.
pub fn ref_counts(pred: &[u8], truth: &[u8], positive: u8) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (&p, &t) in pred.iter().zip(truth) {
        let i = match (p == positive, t == positive) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[i] += 1;
    }
    c
}

fn bits(x: Option<f64>) -> Option<u64> {
    x.map(f64::to_bits)
}

pub fn metrics_hand_case() -> Result<MetricSet, String> {
    let truth = LabelMask::new(2, 2, vec![1, 1, 0, 0]).unwrap();
    let pred = LabelMask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
    let c = confusion(&pred, &truth, 1).map_err(|e| e.to_string())?;
    if (c.tp, c.fp, c.fn_, c.tn) != (1, 0, 1, 2) {
        return Err(format!("counts {c:?}"));
    }
    let m = metrics_from_counts(&c);
    let close = |x: Option<f64>, want: f64, tol: f64| x.is_some_and(|v| (v - want).abs() <= tol);
    if !(close(m.accuracy, 0.75, 0.0)
        && close(m.precision, 1.0, 0.0)
        && close(m.recall, 0.5, 0.0)
        && close(m.f1, 2.0 / 3.0, 1e-4)
        && close(m.specificity, 1.0, 0.0))
    {
        return Err(format!("metrics {m:?}"));
    }
    Ok(m)
}

/// Random masks against the per-pixel count loop, plus the metric identities.
pub fn metrics_suite(seed: u64, instances: usize) -> Result<usize, String> {
    metrics_hand_case()?;
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..instances {
        let h = rng.random_range(1..=24);
        let w = rng.random_range(1..=24);
        let classes = rng.random_range(2..=3u8);
        let positive = rng.random_range(0..classes);
        // skewed label frequencies reach the zero-denominator cases
        let bias: f64 = rng.random();
        let draw = |rng: &mut StdRng| -> Vec<u8> {
            (0..h * w)
                .map(|_| {
                    if rng.random_bool(bias) {
                        positive
                    } else {
                        (positive + 1) % classes
                    }
                })
                .collect()
        };
        let truth = draw(&mut rng);
        let pred = draw(&mut rng);
        let (tm, pm) = (
            LabelMask::new(h, w, truth.clone()).unwrap(),
            LabelMask::new(h, w, pred.clone()).unwrap(),
        );
        let c = confusion(&pm, &tm, positive).map_err(|e| e.to_string())?;
        let fail = |what: &str| Err(format!("instance {i}: {what} ({c:?})"));
        if [c.tp, c.fp, c.fn_, c.tn] != ref_counts(&pred, &truth, positive) {
            return fail("counts differ from the per-pixel loop");
        }
        let m = metrics_from_counts(&c);
        if bits(m.recall) != bits(m.sensitivity) {
            return fail("recall and sensitivity differ");
        }
        if let (Some(s), Some(f)) = (m.specificity, c.false_positive_rate()) {
            if s + f != 1.0 {
                return fail("specificity + FPR != 1");
            }
        }
        if m.accuracy != Some((c.tp + c.tn) as f64 / (c.tp + c.fp + c.fn_ + c.tn) as f64) {
            return fail("accuracy");
        }
        if m.precision.is_none() != (c.tp + c.fp == 0)
            || m.recall.is_none() != (c.tp + c.fn_ == 0)
            || m.specificity.is_none() != (c.tn + c.fp == 0)
        {
            return fail("undefinedness does not follow the zero denominators");
        }
        let swapped = confusion(&tm, &pm, positive).map_err(|e| e.to_string())?;
        if swapped != c.swapped() {
            return fail("swapping pred and truth does not swap fp and fn");
        }
        let s = metrics_from_counts(&swapped);
        if bits(s.precision) != bits(m.recall)
            || bits(s.recall) != bits(m.precision)
            || bits(s.f1) != bits(m.f1)
            || bits(s.accuracy) != bits(m.accuracy)
        {
            return fail("swap symmetry");
        }
    }

    // An undefined metric is excluded from the aggregate, not counted as 0.
    let defined = metrics_from_counts(&calfuse::metrics::ConfusionCounts {
        tp: 3,
        fp: 1,
        fn_: 1,
        tn: 5,
    });
    let no_positives = metrics_from_counts(&calfuse::metrics::ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 9,
    });
    let agg = aggregate(&[defined, no_positives, defined]).map_err(|e| e.to_string())?;
    let recall = agg["recall"];
    if (recall.included, recall.excluded) != (2, 1) || recall.mean != defined.recall {
        return Err(format!("recall aggregate {recall:?}"));
    }
    Ok(instances)
}
