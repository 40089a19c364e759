//! Merging hardware sub-sprites into whole characters.
//!
//! Two sprite keys are merged when the normalized pointwise mutual
//! information of "both on screen and touching" clears a threshold; merges
//! are closed transitively with a disjoint-set forest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::framelog::{ExperimentLog, Frame, SpriteEntry, SpriteKey};

pub const DEFAULT_NPMI_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("cannot accumulate statistics over a log without frames")]
    EmptyLog,
    #[error("NPMI undefined: sprite {0} never appears on screen")]
    UndefinedNpmi(SpriteKey),
    #[error("NPMI threshold {0} outside (0, 1]")]
    BadThreshold(f64),
}

/// True when the two rectangles overlap or share an edge or corner.
pub fn touching(a: &SpriteEntry, b: &SpriteEntry) -> bool {
    let (ax0, ay0) = (a.x as i32, a.y as i32);
    let (bx0, by0) = (b.x as i32, b.y as i32);
    let (ax1, ay1) = (ax0 + a.width() as i32, ay0 + a.height as i32);
    let (bx1, by1) = (bx0 + b.width() as i32, by0 + b.height as i32);
    ax0 <= bx1 && bx0 <= ax1 && ay0 <= by1 && by0 <= ay1
}

fn ordered(a: SpriteKey, b: SpriteKey) -> (SpriteKey, SpriteKey) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Presence and touching counts over every frame of a log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CooccurrenceStats {
    frame_count: u64,
    on: BTreeMap<SpriteKey, u64>,
    touch: BTreeMap<(SpriteKey, SpriteKey), u64>,
}

impl CooccurrenceStats {
    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    /// Every key seen at least once, in key order.
    pub fn keys(&self) -> impl Iterator<Item = SpriteKey> + '_ {
        self.on.keys().copied()
    }

    pub fn p_on(&self, key: SpriteKey) -> f64 {
        self.on.get(&key).copied().unwrap_or(0) as f64 / self.frame_count.max(1) as f64
    }

    pub fn p_touch(&self, a: SpriteKey, b: SpriteKey) -> f64 {
        self.touch.get(&ordered(a, b)).copied().unwrap_or(0) as f64 / self.frame_count.max(1) as f64
    }

    /// Pairs that touched at least once.
    pub fn touching_pairs(&self) -> impl Iterator<Item = (SpriteKey, SpriteKey)> + '_ {
        self.touch.keys().copied()
    }

    fn add_frame(&mut self, frame: &Frame) {
        self.frame_count += 1;
        let present: BTreeSet<SpriteKey> = frame.sprites.iter().map(SpriteEntry::key).collect();
        for key in present {
            *self.on.entry(key).or_default() += 1;
        }
        let mut pairs = BTreeSet::new();
        for (i, a) in frame.sprites.iter().enumerate() {
            for b in &frame.sprites[i + 1..] {
                let (ka, kb) = (a.key(), b.key());
                if ka != kb && touching(a, b) {
                    pairs.insert(ordered(ka, kb));
                }
            }
        }
        for pair in pairs {
            *self.touch.entry(pair).or_default() += 1;
        }
    }
}

pub fn accumulate_stats(log: &ExperimentLog) -> Result<CooccurrenceStats, MergeError> {
    let mut stats = CooccurrenceStats::default();
    for frame in log.frames() {
        stats.add_frame(frame);
    }
    if stats.frame_count == 0 {
        return Err(MergeError::EmptyLog);
    }
    Ok(stats)
}

/// Normalized PMI of two keys touching, in [-1, 1].
pub fn npmi(stats: &CooccurrenceStats, a: SpriteKey, b: SpriteKey) -> Result<f64, MergeError> {
    npmi_from(stats.p_on(a), stats.p_on(b), stats.p_touch(a, b)).map_err(|which| {
        MergeError::UndefinedNpmi(if which == 0 { a } else { b })
    })
}

/// NPMI from raw probabilities; `Err(0)` / `Err(1)` names the zero marginal.
pub fn npmi_from(p_a: f64, p_b: f64, p_ab: f64) -> Result<f64, usize> {
    if p_a <= 0.0 {
        return Err(0);
    }
    if p_b <= 0.0 {
        return Err(1);
    }
    if p_ab <= 0.0 {
        return Ok(-1.0);
    }
    if p_ab >= 1.0 {
        return Ok(1.0);
    }
    let value = (p_ab / (p_a * p_b)).ln() / -p_ab.ln();
    Ok(value.clamp(-1.0, 1.0))
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partition of sprite keys into merged characters. Groups are numbered in
/// order of their smallest member key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    groups: Vec<Vec<SpriteKey>>,
    group_of: BTreeMap<SpriteKey, usize>,
}

impl MergeMap {
    pub fn groups(&self) -> &[Vec<SpriteKey>] {
        &self.groups
    }

    pub fn group_of(&self, key: SpriteKey) -> Option<usize> {
        self.group_of.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// One line per group: `<index>: <key> <key> ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, group) in self.groups.iter().enumerate() {
            write!(out, "{i}:").unwrap();
            for key in group {
                write!(out, " {key}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_merge_map(stats: &CooccurrenceStats, threshold: f64) -> Result<MergeMap, MergeError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MergeError::BadThreshold(threshold));
    }
    let keys: Vec<SpriteKey> = stats.keys().collect();
    let index: BTreeMap<SpriteKey, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut sets = DisjointSets::new(keys.len());
    // Pairs that never touched score -1 and can never clear a positive threshold.
    for (a, b) in stats.touching_pairs() {
        if npmi(stats, a, b)? >= threshold {
            sets.union(index[&a], index[&b]);
        }
    }

    let mut by_root: BTreeMap<usize, Vec<SpriteKey>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        by_root.entry(sets.find(i)).or_default().push(*key);
    }
    let mut groups: Vec<Vec<SpriteKey>> = by_root.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    let group_of = groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.iter().map(move |k| (*k, gi)))
        .collect();
    Ok(MergeMap { groups, group_of })
}

/// A merged character on one frame. `bbox` is `(min_x, min_y, max_x, max_y)`
/// with exclusive max edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergedSprite {
    pub group: usize,
    pub bbox: (i32, i32, i32, i32),
    pub anchor_x: i32,
    pub anchor_y: i32,
}

/// Merges the frame's sprites by group, in group order. Keys absent from the
/// map are ignored.
pub fn merge_frame(frame: &Frame, map: &MergeMap) -> Vec<MergedSprite> {
    let mut boxes: BTreeMap<usize, (i32, i32, i32, i32)> = BTreeMap::new();
    for s in &frame.sprites {
        let Some(group) = map.group_of(s.key()) else {
            continue;
        };
        let (x0, y0) = (s.x as i32, s.y as i32);
        let (x1, y1) = (x0 + s.width() as i32, y0 + s.height as i32);
        boxes
            .entry(group)
            .and_modify(|b| {
                b.0 = b.0.min(x0);
                b.1 = b.1.min(y0);
                b.2 = b.2.max(x1);
                b.3 = b.3.max(y1);
            })
            .or_insert((x0, y0, x1, y1));
    }
    boxes
        .into_iter()
        .map(|(group, bbox)| MergedSprite {
            group,
            bbox,
            anchor_x: (bbox.0 + bbox.2).div_euclid(2),
            anchor_y: bbox.3,
        })
        .collect()
}
