//! Player identification, height conversion, mode segmentation and hold
//! bounds.
//!
//! Heights are measured up from the ground: `h = ground_screen_y - y_screen`.
//! A segment `[start, end)` has its origin at `start - 1`, the last frame of
//! the previous state, which is also `t = 0` of the segment's closed form.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::automaton::Mode;
use crate::tracker::Track;

pub const DEFAULT_START_WINDOW: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("trial {hold}: no track of group {group} is present at the first frame")]
    NotAtStart { hold: u32, group: usize },
    #[error("trial {hold}: track missing for {len} frames starting at offset {offset}")]
    Gap { hold: u32, offset: usize, len: usize },
    #[error("trial {hold}: no rise within the first {window} frames")]
    NoJump { hold: u32, window: usize },
    #[error("trial {hold}: no frame falls below the apex")]
    Malformed { hold: u32 },
    #[error("no sprite group moves like a jumping player")]
    NoPlayer,
    #[error("several sprite groups move like a jumping player: {0:?}")]
    AmbiguousPlayer(Vec<usize>),
    #[error("trial holds are not contiguous: {0:?}")]
    NonContiguous(Vec<u32>),
    #[error("no trials")]
    NoTrials,
}

/// One trial's tracks plus the frame window they cover.
#[derive(Debug, Clone)]
pub struct TrialTracks {
    pub hold_frames: u32,
    pub first_frame: u64,
    pub frame_count: usize,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightTrace {
    pub hold_frames: u32,
    pub h: Vec<i32>,
    pub ground_screen_y: i32,
    /// Frames filled in across a flicker gap rather than observed.
    pub interpolated: Vec<bool>,
    /// Frames whose raw height was below ground.
    pub clamped_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSegment {
    pub mode: Mode,
    pub start: usize,
    pub end: usize,
    pub entry_height: i32,
    pub entry_velocity: i32,
}

impl ModeSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldBounds {
    pub min_hold: u32,
    pub max_hold: u32,
    pub has_control: bool,
}

impl HoldBounds {
    pub fn new(min_hold: u32, max_hold: u32) -> Self {
        Self {
            min_hold,
            max_hold,
            has_control: min_hold < max_hold,
        }
    }

    pub fn effective_hold(&self, hold: u32) -> u32 {
        hold.clamp(self.min_hold, self.max_hold)
    }
}

/// Which pragmatic rules fired while segmenting one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentDiagnostics {
    pub rise_frame: usize,
    pub apex_height: i32,
    /// First and last frame of the apex plateau.
    pub apex_first: usize,
    pub apex_last: usize,
    pub landing_frame: Option<usize>,
    pub landing_height: Option<i32>,
    pub clamped_frames: usize,
}

impl SegmentDiagnostics {
    pub fn apex_plateau_len(&self) -> usize {
        self.apex_last - self.apex_first + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<ModeSegment>,
    pub diagnostics: SegmentDiagnostics,
}

impl Segmentation {
    pub fn find(&self, mode: Mode) -> Option<&ModeSegment> {
        self.segments.iter().find(|s| s.mode == mode)
    }
}

/// Converts a track to heights over a trial window. Flicker gaps up to
/// `max_gap` frames are linearly interpolated; trailing gaps hold the last
/// value.
pub fn to_height(
    track: &Track,
    trial: &TrialTracks,
    ground_screen_y: i32,
    max_gap: usize,
) -> Result<HeightTrace, SegmentError> {
    let hold = trial.hold_frames;
    let mut raw: Vec<Option<i32>> = vec![None; trial.frame_count];
    for (&frame, &(_, y)) in track.points.range(trial.first_frame..) {
        let offset = (frame - trial.first_frame) as usize;
        if offset >= trial.frame_count {
            break;
        }
        raw[offset] = Some(ground_screen_y - y);
    }
    if raw.first().copied().flatten().is_none() {
        return Err(SegmentError::NotAtStart {
            hold,
            group: track.group,
        });
    }

    let mut h = Vec::with_capacity(raw.len());
    let mut interpolated = vec![false; raw.len()];
    let mut clamped_frames = 0;
    let mut t = 0;
    while t < raw.len() {
        if let Some(v) = raw[t] {
            if v < 0 {
                clamped_frames += 1;
            }
            h.push(v.max(0));
            t += 1;
            continue;
        }
        let gap_end = (t..raw.len()).find(|&i| raw[i].is_some()).unwrap_or(raw.len());
        let len = gap_end - t;
        if len > max_gap {
            return Err(SegmentError::Gap {
                hold,
                offset: t,
                len,
            });
        }
        let before = *h.last().expect("frame 0 is present") as f64;
        let after = raw.get(gap_end).copied().flatten().map_or(before, |v| v.max(0) as f64);
        for i in 0..len {
            let frac = (i + 1) as f64 / (len + 1) as f64;
            h.push((before + (after - before) * frac).round() as i32);
            interpolated[t + i] = true;
        }
        t = gap_end;
    }
    Ok(HeightTrace {
        hold_frames: hold,
        h,
        ground_screen_y,
        interpolated,
        clamped_frames,
    })
}

/// The track of `group` present at the first frame of the trial, if any.
pub fn track_at_start(trial: &TrialTracks, group: usize) -> Option<&Track> {
    trial
        .tracks
        .iter()
        .filter(|t| t.group == group && t.points.contains_key(&trial.first_frame))
        .min_by_key(|t| t.track_id)
}

/// Heights of `group`'s starting track in `trial`, with ground taken from its
/// first frame.
pub fn player_trace(trial: &TrialTracks, group: usize, max_gap: usize) -> Result<HeightTrace, SegmentError> {
    let track = track_at_start(trial, group).ok_or(SegmentError::NotAtStart {
        hold: trial.hold_frames,
        group,
    })?;
    let ground = track.points[&trial.first_frame].1;
    to_height(track, trial, ground, max_gap)
}

/// Jump shape test: leaves the ground, and after its highest point only
/// descends (with one pixel of jitter) and finishes within one pixel of the
/// ground.
pub fn looks_like_jump(h: &[i32]) -> bool {
    let Some(&apex) = h.iter().max() else {
        return false;
    };
    if apex <= 0 || h[0] != 0 {
        return false;
    }
    let q = h.iter().rposition(|&v| v == apex).expect("apex exists");
    let mut running_min = apex;
    for &v in &h[q + 1..] {
        if v > running_min + 1 {
            return false;
        }
        running_min = running_min.min(v);
    }
    *h.last().expect("non-empty") <= 1
}

/// Picks the sprite group that jumps in every trial. Among several, the one
/// whose apex varies most with the hold, then the highest apex.
pub fn find_player(trials: &[TrialTracks], max_gap: usize) -> Result<usize, SegmentError> {
    if trials.is_empty() {
        return Err(SegmentError::NoTrials);
    }
    let groups: BTreeSet<usize> = trials
        .iter()
        .flat_map(|t| t.tracks.iter().map(|tr| tr.group))
        .collect();
    let mut candidates: Vec<(usize, f64, i32)> = Vec::new();
    'group: for group in groups {
        let mut apexes = Vec::with_capacity(trials.len());
        for trial in trials {
            let Ok(trace) = player_trace(trial, group, max_gap) else {
                continue 'group;
            };
            if !looks_like_jump(&trace.h) {
                continue 'group;
            }
            apexes.push(*trace.h.iter().max().expect("non-empty"));
        }
        let n = apexes.len() as f64;
        let mean = apexes.iter().map(|&a| a as f64).sum::<f64>() / n;
        let var = apexes.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
        let top = *apexes.iter().max().expect("at least one trial");
        candidates.push((group, var, top));
    }
    match candidates.len() {
        0 => Err(SegmentError::NoPlayer),
        1 => Ok(candidates[0].0),
        _ => {
            let best_var = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let by_var: Vec<_> = candidates.iter().filter(|c| c.1 == best_var).collect();
            let best_apex = by_var.iter().map(|c| c.2).max().expect("non-empty");
            let finalists: Vec<usize> = by_var.iter().filter(|c| c.2 == best_apex).map(|c| c.0).collect();
            if finalists.len() == 1 {
                Ok(finalists[0])
            } else {
                Err(SegmentError::AmbiguousPlayer(finalists))
            }
        }
    }
}

/// Splits a trace into mode segments. With unknown or control-free bounds the
/// whole rise is one up-fixed segment.
pub fn segment(
    trace: &HeightTrace,
    bounds: Option<&HoldBounds>,
    start_window: usize,
) -> Result<Segmentation, SegmentError> {
    let h = &trace.h;
    let hold = trace.hold_frames;
    let n = h.len();
    let rise = (1..n.min(start_window + 1))
        .find(|&t| h[t] > h[t - 1])
        .ok_or(SegmentError::NoJump {
            hold,
            window: start_window,
        })?;
    let origin = rise - 1;

    let apex = *h[rise..].iter().max().expect("rise frame exists");
    let apex_first = rise + h[rise..].iter().position(|&v| v == apex).expect("max exists");
    let apex_last = apex_first + h[apex_first..].iter().take_while(|&&v| v == apex).count() - 1;
    let down_start = apex_last + 1;
    if down_start >= n {
        return Err(SegmentError::Malformed { hold });
    }

    let landing = (down_start..n).find(|&t| h[t] <= 1);
    let down_end = landing.map_or(n, |t| t + 1);

    let mut spans: Vec<(Mode, usize, usize)> = vec![(Mode::Ground, 0, rise)];
    match bounds {
        Some(b) if b.has_control => {
            let control_end = (origin + b.effective_hold(hold) as usize + 1).clamp(rise, down_start);
            spans.push((Mode::UpControl, rise, control_end));
            spans.push((Mode::UpFixed, control_end, down_start));
        }
        _ => spans.push((Mode::UpFixed, rise, down_start)),
    }
    spans.push((Mode::Down, down_start, down_end));
    spans.push((Mode::Ground, down_end, n));

    let segments = spans
        .into_iter()
        .filter(|&(_, s, e)| e > s)
        .map(|(mode, start, end)| ModeSegment {
            mode,
            start,
            end,
            entry_height: if start == 0 { 0 } else { h[start - 1] },
            entry_velocity: if start == 0 { 0 } else { h[start] - h[start - 1] },
        })
        .collect();
    Ok(Segmentation {
        segments,
        diagnostics: SegmentDiagnostics {
            rise_frame: rise,
            apex_height: apex,
            apex_first,
            apex_last,
            landing_frame: landing,
            landing_height: landing.map(|t| h[t]),
            clamped_frames: trace.clamped_frames,
        },
    })
}

/// Derives min and max hold from traces keyed by hold duration. Traces are
/// compared over their common prefix. When every trace is identical the
/// jump has no control and both bounds equal the smallest hold.
pub fn hold_bounds(traces: &BTreeMap<u32, Vec<i32>>) -> Result<HoldBounds, SegmentError> {
    let holds: Vec<u32> = traces.keys().copied().collect();
    let (Some(&first), Some(&last)) = (holds.first(), holds.last()) else {
        return Err(SegmentError::NoTrials);
    };
    if (last - first) as usize + 1 != holds.len() {
        return Err(SegmentError::NonContiguous(holds));
    }
    let common = traces.values().map(Vec::len).min().expect("non-empty");
    let rows: Vec<&[i32]> = traces.values().map(|v| &v[..common]).collect();

    let lead = rows.iter().take_while(|r| **r == rows[0]).count();
    if lead == rows.len() {
        return Ok(HoldBounds::new(first, first));
    }
    let tail = rows.iter().rev().take_while(|r| **r == rows[rows.len() - 1]).count();
    let min_hold = first + lead as u32 - 1;
    let max_hold = last + 1 - tail as u32;
    Ok(HoldBounds::new(min_hold, max_hold))
}
