//! Frame-to-frame association of merged sprites.
//!
//! Each frame solves a max-weight bipartite matching between detections and
//! active tracks. Every detection also owns a private track-initiation node
//! whose edge weight is the likelihood at `initiation_distance`, so a
//! detection only joins a track that is more likely than "new sprite". No
//! motion model is assumed: the last known position is the prediction.

use std::collections::BTreeMap;

use crate::framelog::Frame;
use crate::spritemerge::{merge_frame, MergeMap, MergedSprite};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Standard deviation of the distance likelihood, in pixels.
    pub sigma: f64,
    pub initiation_distance: f64,
    /// Frames a track may go without detections before it is retired.
    pub coast_limit: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sigma: 8.0,
            initiation_distance: 40.0,
            coast_limit: 4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma > 0.0) {
            return Err(format!("tracker sigma must be positive, got {}", self.sigma));
        }
        if !(self.initiation_distance > 0.0) {
            return Err(format!(
                "initiation distance must be positive, got {}",
                self.initiation_distance
            ));
        }
        Ok(())
    }
}

/// Normal(0, sigma) density at `distance`.
pub fn likelihood(config: &TrackerConfig, distance: f64) -> f64 {
    let s = config.sigma;
    (-(distance * distance) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Track {
    pub track_id: u32,
    pub group: usize,
    /// frame_number -> anchor (x, y)
    pub points: BTreeMap<u64, (i32, i32)>,
    pub last_update: u64,
    pub coasting_for: u32,
}

impl Track {
    pub fn last_point(&self) -> (i32, i32) {
        self.points[&self.last_update]
    }

    pub fn first_frame(&self) -> u64 {
        *self.points.keys().next().expect("tracks are created with a point")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Joins the active track with this id.
    Track(u32),
    New,
}

/// Finds the maximum-weight assignment of `detections` to `tracks` or to their
/// own initiation nodes. Returned in detection order.
pub fn assign(config: &TrackerConfig, tracks: &[Track], detections: &[MergedSprite]) -> Vec<Assignment> {
    let n = detections.len();
    if n == 0 {
        return Vec::new();
    }
    let m = tracks.len();
    let init_weight = likelihood(config, config.initiation_distance);
    let weights: Vec<Vec<Option<f64>>> = detections
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let mut row: Vec<Option<f64>> = tracks
                .iter()
                .map(|t| {
                    let (x, y) = t.last_point();
                    let d = f64::hypot((det.anchor_x - x) as f64, (det.anchor_y - y) as f64);
                    Some(likelihood(config, d))
                })
                .collect();
            row.extend((0..n).map(|j| (i == j).then_some(init_weight)));
            row
        })
        .collect();
    max_weight_assignment(&weights)
        .into_iter()
        .map(|col| if col < m { Assignment::Track(tracks[col].track_id) } else { Assignment::New })
        .collect()
}

/// Maximum-weight assignment of every row to a distinct column; `None` marks
/// a missing edge. Rows must not outnumber columns and a complete assignment
/// over present edges must exist.
pub fn max_weight_assignment(weights: &[Vec<Option<f64>>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let m = weights[0].len();
    assert!(n <= m, "more rows than columns");
    // Hungarian method with potentials on cost = -weight. Missing edges get a
    // cost far above any feasible total so they are never selected.
    let max_abs = weights
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |acc, w| acc.max(w.abs()));
    let forbidden = (max_abs + 1.0) * (n as f64 + 1.0) * 1e3;
    let cost = |i: usize, j: usize| weights[i][j].map_or(forbidden, |w| -w);

    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}

/// Tracking state for one trial.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u32,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            active: Vec::new(),
            retired: Vec::new(),
            next_id: 0,
        }
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    /// Advances by one frame. Frames must arrive in increasing order.
    pub fn step(&mut self, frame_number: u64, detections: &[MergedSprite]) {
        let assignments = assign(&self.config, &self.active, detections);
        let mut matched = vec![false; self.active.len()];
        let mut created = Vec::new();
        for (det, assignment) in detections.iter().zip(assignments) {
            match assignment {
                Assignment::Track(id) => {
                    let idx = self
                        .active
                        .iter()
                        .position(|t| t.track_id == id)
                        .expect("assigned to an active track");
                    let track = &mut self.active[idx];
                    track.points.insert(frame_number, (det.anchor_x, det.anchor_y));
                    track.last_update = frame_number;
                    track.coasting_for = 0;
                    matched[idx] = true;
                }
                Assignment::New => {
                    created.push(Track {
                        track_id: self.next_id,
                        group: det.group,
                        points: BTreeMap::from([(frame_number, (det.anchor_x, det.anchor_y))]),
                        last_update: frame_number,
                        coasting_for: 0,
                    });
                    self.next_id += 1;
                }
            }
        }

        let limit = self.config.coast_limit;
        let mut still_active = Vec::with_capacity(self.active.len() + created.len());
        for (mut track, hit) in std::mem::take(&mut self.active).into_iter().zip(matched) {
            if !hit {
                track.coasting_for += 1;
            }
            if track.coasting_for > limit {
                self.retired.push(track);
            } else {
                still_active.push(track);
            }
        }
        still_active.extend(created);
        self.active = still_active;
    }

    /// All tracks, retired and active, ordered by id.
    pub fn finish(self) -> Vec<Track> {
        let mut all = self.retired;
        all.extend(self.active);
        all.sort_by_key(|t| t.track_id);
        all
    }
}

/// Tracks every merged sprite across one trial's frames.
pub fn track_frames(config: &TrackerConfig, frames: &[Frame], map: &MergeMap) -> Vec<Track> {
    let mut tracker = Tracker::new(*config);
    for frame in frames {
        tracker.step(frame.frame_number, &merge_frame(frame, map));
    }
    tracker.finish()
}
