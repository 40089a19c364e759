//! Per-mode parameter learning and the jump model file.
//!
//! Each mode is fit jointly over all trials with shared
//! `(reset, multiplier, gravity)` and one intercept per segment:
//! `h_t = h_0 + (reset + multiplier * v_0) * t + gravity * t^2`.
//! An epsilon-insensitive regression first separates inliers from outliers
//! (animation jitter, clips). Least squares on the inliers follows, then a
//! minimax refinement, and the estimate is the analytic centre of the
//! parameters that keep every inlier within the residual band. On noiseless
//! data every stage is exact.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::automaton::{simulate, AutomatonSpec, Mode, ModeParams};
use crate::jumpseg::{HeightTrace, HoldBounds, Segmentation};
use crate::kv::{KvDoc, KvError, KvWriter};
use crate::svr::{fit_linear_svr, SparseRow, SvrConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epsilon: f64,
    pub penalty: f64,
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    /// Entry velocities must spread at least this much (px/frame) for the
    /// multiplier to be estimated; otherwise it is pinned to 1.
    pub min_velocity_spread: f64,
    /// Reweighting passes of the minimax refinement; 0 keeps least squares.
    pub minimax_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            penalty: 1000.0,
            max_iterations: 5000,
            convergence_tolerance: 1e-6,
            min_velocity_spread: 1.0,
            minimax_iterations: 200,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon >= 0.0) {
            return Err(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.penalty > 0.0) {
            return Err(format!("penalty must be positive, got {}", self.penalty));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        if !(self.min_velocity_spread >= 0.0) {
            return Err("min_velocity_spread must be non-negative".into());
        }
        Ok(())
    }

    fn svr(&self) -> SvrConfig {
        SvrConfig {
            epsilon: self.epsilon,
            penalty: self.penalty,
            max_iterations: self.max_iterations,
            tolerance: self.convergence_tolerance,
        }
    }

    fn inlier_band(&self) -> f64 {
        (2.0 * self.epsilon).max(1e-6)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{mode}: {samples} distinct samples cannot determine {unknowns} unknowns")]
    Underdetermined { mode: Mode, samples: usize, unknowns: usize },
    #[error("{mode}: design matrix is rank deficient")]
    RankDeficient { mode: Mode },
    #[error("no samples for mode {0}")]
    MissingMode(Mode),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] KvError),
}

/// Observed heights of one segment. Sample times are frames since the
/// segment's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSegment {
    pub samples: Vec<(f64, f64)>,
    pub v0: f64,
    pub entry_height: f64,
    /// True when `entry_height` is the exact real-valued height at the
    /// origin rather than a rounded observation, so no intercept is fit.
    pub entry_known: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub params: ModeParams,
    /// Fitted `h_0` per input segment.
    pub intercepts: Vec<f64>,
    /// False when the multiplier was pinned by convention.
    pub multiplier_identified: bool,
    pub samples: usize,
    pub outliers: usize,
    pub max_inlier_residual: f64,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

fn segment_key(seg: &FitSegment) -> Vec<u64> {
    let mut key = vec![seg.v0.to_bits(), seg.entry_height.to_bits(), seg.entry_known as u64];
    for &(t, h) in &seg.samples {
        key.push(t.to_bits());
        key.push(h.to_bits());
    }
    key
}

/// Fits one mode's shared parameters over all of its segments.
pub fn fit_mode(mode: Mode, segments: &[FitSegment], config: &FitConfig) -> Result<ModeFit, FitError> {
    // Identical segments carry no extra information; fit each once.
    let mut unique: Vec<&FitSegment> = Vec::new();
    let mut index_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut slot = Vec::with_capacity(segments.len());
    for seg in segments {
        let next = unique.len();
        let idx = *index_of.entry(segment_key(seg)).or_insert(next);
        if idx == next {
            unique.push(seg);
        }
        slot.push(idx);
    }
    let unique: Vec<&FitSegment> = unique;
    let with_samples: Vec<usize> = (0..unique.len()).filter(|&i| !unique[i].samples.is_empty()).collect();

    let v0s: Vec<f64> = with_samples.iter().map(|&i| unique[i].v0).collect();
    let v_lo = v0s.iter().copied().fold(f64::INFINITY, f64::min);
    let v_hi = v0s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pinned = if v0s.iter().all(|v| v.abs() < 1e-12) {
        Some(0.0)
    } else if v_hi - v_lo < config.min_velocity_spread {
        Some(1.0)
    } else {
        None
    };
    let shared = if pinned.is_some() { 2 } else { 3 };
    // Intercept column of each sampled segment, if its entry is not known.
    let mut intercept_col: Vec<Option<usize>> = Vec::with_capacity(with_samples.len());
    let mut n_free = 0;
    for &i in &with_samples {
        if unique[i].entry_known {
            intercept_col.push(None);
        } else {
            intercept_col.push(Some(n_free));
            n_free += 1;
        }
    }
    let unknowns = n_free + shared;
    let mut distinct: Vec<(u64, u64, u64)> = with_samples
        .iter()
        .flat_map(|&i| {
            let s = unique[i];
            s.samples
                .iter()
                .filter(move |&&(t, _)| !(s.entry_known && t == 0.0))
                .map(move |&(t, h)| (t.to_bits(), h.to_bits(), s.v0.to_bits()))
        })
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < unknowns.max(3) {
        return Err(FitError::Underdetermined {
            mode,
            samples: distinct.len(),
            unknowns,
        });
    }

    // Columns: one intercept per segment with unknown entry, then t,
    // [v0 * t], t^2. Targets are offset by the entry height.
    let col_t = n_free;
    let col_vt = n_free + 1;
    let col_tt = n_free + shared - 1;
    let ncols = n_free + shared;
    let mut rows: Vec<SparseRow> = Vec::new();
    let mut targets = Vec::new();
    let mut owner = Vec::new();
    for (c, &i) in with_samples.iter().enumerate() {
        let s = unique[i];
        for &(t, h) in &s.samples {
            // A known entry fixes the origin sample; it carries no information.
            if s.entry_known && t == 0.0 {
                continue;
            }
            let mut row = vec![(col_t, t), (col_tt, t * t)];
            if let Some(col) = intercept_col[c] {
                row.push((col, 1.0));
            }
            let mut y = h - s.entry_height;
            match pinned {
                Some(m) => y -= m * s.v0 * t,
                None => row.push((col_vt, s.v0 * t)),
            }
            rows.push(row);
            targets.push(y);
            owner.push(intercept_col[c]);
        }
    }

    let svr = fit_linear_svr(&rows, &targets, ncols, &config.svr());
    let band = config.inlier_band();
    let residuals = |w: &[f64]| -> Vec<f64> {
        rows.iter()
            .zip(&targets)
            .map(|(row, y)| y - row.iter().map(|&(j, v)| v * w[j]).sum::<f64>())
            .collect()
    };
    let mut inlier: Vec<bool> = residuals(&svr.weights).iter().map(|r| r.abs() <= band).collect();
    // A fit that leaves most rows outside the band is not a consensus.
    let kept = inlier.iter().filter(|&&b| b).count();
    if kept < unknowns || 2 * kept < rows.len() {
        inlier = vec![true; rows.len()];
    }

    let mut weights = svr.weights.clone();
    for _ in 0..10 {
        let mask: Vec<f64> = inlier.iter().map(|&ok| if ok { 1.0 } else { 0.0 }).collect();
        weights = match least_squares(mode, &rows, &targets, &owner, &mask, ncols, n_free) {
            Ok(w) => w,
            Err(_) if inlier.iter().any(|&ok| !ok) => {
                // The inlier subset lost rank; fall back to every row.
                inlier = vec![true; rows.len()];
                least_squares(mode, &rows, &targets, &owner, &vec![1.0; rows.len()], ncols, n_free)?
            }
            Err(e) => return Err(e),
        };
        let next: Vec<bool> = residuals(&weights).iter().map(|r| r.abs() <= band).collect();
        if next == inlier || next.iter().filter(|&&b| b).count() < unknowns {
            break;
        }
        inlier = next;
    }
    let max_inlier = |w: &[f64]| {
        residuals(w)
            .iter()
            .zip(&inlier)
            .filter(|(_, &ok)| ok)
            .fold(0.0f64, |acc, (r, _)| acc.max(r.abs()))
    };

    // Rounding errors are bounded, so the minimax fit over the inliers is
    // sharper than least squares. Lawson's reweighting converges to it; the
    // least-squares fit is kept unless the largest residual shrinks.
    let mut best = (max_inlier(&weights), weights.clone());
    let mut lawson: Vec<f64> = inlier.iter().map(|&ok| if ok { 1.0 } else { 0.0 }).collect();
    for _ in 0..config.minimax_iterations {
        let Ok(w) = least_squares(mode, &rows, &targets, &owner, &lawson, ncols, n_free) else {
            break;
        };
        let res = residuals(&w);
        let worst = max_inlier(&w);
        if worst < best.0 - 1e-12 {
            best = (worst, w);
        }
        let total: f64 = lawson.iter().zip(&res).map(|(l, r)| l * r.abs()).sum();
        if !(total > 0.0) {
            break;
        }
        for (l, r) in lawson.iter_mut().zip(&res) {
            *l *= r.abs() / total;
        }
    }
    let (minimax, start) = best;

    // Every parameter vector keeping all inliers within the band explains
    // the rounded data equally well; report the analytic center of that set.
    let band = config.epsilon.max(minimax + 1e-6);
    let kept_rows: Vec<&SparseRow> = rows.iter().zip(&inlier).filter(|(_, &ok)| ok).map(|(r, _)| r).collect();
    let kept_targets: Vec<f64> = targets.iter().zip(&inlier).filter(|(_, &ok)| ok).map(|(y, _)| *y).collect();
    let weights = analytic_center(&kept_rows, &kept_targets, ncols, &start, band).unwrap_or(start);
    let max_inlier_residual = max_inlier(&weights);
    let params = ModeParams {
        gravity: weights[col_tt],
        reset: weights[col_t],
        multiplier: pinned.unwrap_or_else(|| weights[col_vt]),
    };
    let mut unique_intercepts = vec![f64::NAN; unique.len()];
    for (c, &i) in with_samples.iter().enumerate() {
        unique_intercepts[i] = unique[i].entry_height + intercept_col[c].map_or(0.0, |col| weights[col]);
    }
    for (i, seg) in unique.iter().enumerate() {
        if unique_intercepts[i].is_nan() {
            unique_intercepts[i] = seg.entry_height;
        }
    }
    Ok(ModeFit {
        params,
        intercepts: slot.iter().map(|&i| unique_intercepts[i]).collect(),
        multiplier_identified: pinned.is_none(),
        samples: rows.len(),
        outliers: inlier.iter().filter(|&&b| !b).count(),
        max_inlier_residual,
        solver_iterations: svr.iterations,
        solver_converged: svr.converged,
    })
}

/// Maximizes the log barrier of `|y_i - a_i.w| < band` by damped Newton
/// steps from a strictly feasible `start`. Returns `None` if the start is
/// not strictly feasible or the barrier Hessian is singular.
fn analytic_center(rows: &[&SparseRow], targets: &[f64], ncols: usize, start: &[f64], band: f64) -> Option<Vec<f64>> {
    let residual = |w: &[f64], i: usize| targets[i] - rows[i].iter().map(|&(j, v)| v * w[j]).sum::<f64>();
    let barrier = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..rows.len() {
            let r = residual(w, i);
            if r.abs() >= band {
                return f64::NEG_INFINITY;
            }
            total += (band - r).ln() + (band + r).ln();
        }
        total
    };
    let mut w = start.to_vec();
    let mut value = barrier(&w);
    if !value.is_finite() {
        return None;
    }
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(ncols);
        let mut hess = DMatrix::<f64>::zeros(ncols, ncols);
        for (i, row) in rows.iter().enumerate() {
            let r = residual(&w, i);
            let (lo, hi) = (band + r, band - r);
            let g = 1.0 / hi - 1.0 / lo;
            let h = 1.0 / (hi * hi) + 1.0 / (lo * lo);
            for &(a, va) in row.iter() {
                grad[a] += g * va;
                for &(b, vb) in row.iter() {
                    hess[(a, b)] += h * va * vb;
                }
            }
        }
        // Ascent direction solves hess * step = grad (hess is the negated
        // barrier Hessian, positive definite).
        let step = hess.clone().cholesky()?.solve(&grad);
        let decrement = grad.dot(&step);
        if decrement < 1e-18 {
            break;
        }
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().enumerate().map(|(j, x)| x + scale * step[j]).collect();
            let next = barrier(&trial);
            if next >= value + 0.25 * scale * decrement {
                w = trial;
                value = next;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Some(w);
            }
        }
    }
    Some(w)
}

/// Least squares over the inlier rows. Segments left without inliers keep a
/// zero intercept correction.
fn least_squares(
    mode: Mode,
    rows: &[SparseRow],
    targets: &[f64],
    owner: &[Option<usize>],
    row_weight: &[f64],
    ncols: usize,
    n_seg: usize,
) -> Result<Vec<f64>, FitError> {
    let mut present = vec![false; n_seg];
    for (i, &w) in row_weight.iter().enumerate() {
        if let (true, Some(col)) = (w > 0.0, owner[i]) {
            present[col] = true;
        }
    }
    let mut col_map = vec![usize::MAX; ncols];
    let mut used = 0;
    for (j, slot) in col_map.iter_mut().enumerate() {
        if j >= n_seg || present[j] {
            *slot = used;
            used += 1;
        }
    }
    let chosen: Vec<usize> = (0..rows.len()).filter(|&i| row_weight[i] > 0.0).collect();
    if chosen.len() < used {
        return Err(FitError::Underdetermined {
            mode,
            samples: chosen.len(),
            unknowns: used,
        });
    }
    let mut a = DMatrix::<f64>::zeros(chosen.len(), used);
    let mut b = DVector::<f64>::zeros(chosen.len());
    for (r, &i) in chosen.iter().enumerate() {
        let scale = row_weight[i].sqrt();
        for &(j, v) in &rows[i] {
            a[(r, col_map[j])] = scale * v;
        }
        b[r] = scale * targets[i];
    }
    // Equilibrate columns so the rank test is scale free.
    let norms: Vec<f64> = (0..used)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, &n) in norms.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = a.svd(true, true);
    let top = svd.singular_values.max();
    if svd.rank(top * 1e-10) < used {
        return Err(FitError::RankDeficient { mode });
    }
    let x = svd
        .solve(&b, top * 1e-12)
        .map_err(|_| FitError::RankDeficient { mode })?;
    let mut weights = vec![0.0; ncols];
    for j in 0..ncols {
        if col_map[j] != usize::MAX {
            weights[j] = x[col_map[j]] / norms[col_map[j]];
        }
    }
    Ok(weights)
}

/// First whole frame at which the velocity is no longer upward, or `None`
/// if it never turns.
pub fn apex_frame(params: &ModeParams, v0: f64) -> Option<usize> {
    let c = params.initial_velocity(v0);
    if c <= 0.0 {
        return Some(0);
    }
    if params.gravity >= 0.0 {
        return None;
    }
    let t_star = -c / (2.0 * params.gravity);
    Some((t_star - 1e-9).ceil().max(0.0) as usize)
}

/// Fitted modes for one character plus per-trial bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFits {
    pub up_control: Option<ModeFit>,
    pub up_fixed: ModeFit,
    pub down: ModeFit,
    /// Frame at which each trial was taken to start falling.
    pub down_origins: Vec<usize>,
}

struct UpTrial {
    trial: usize,
    origin: usize,
    end: usize,
    v0: f64,
    /// Real-valued height at the origin, chained from the previous state.
    entry: f64,
    /// Whether the fall follows this state directly.
    last: bool,
}

fn collect(trace: &HeightTrace, origin: usize, end: usize) -> FitSegment {
    let stop = end.min(trace.h.len());
    let samples = (origin..stop)
        .filter(|&f| !trace.interpolated[f])
        .map(|f| ((f - origin) as f64, trace.h[f] as f64))
        .collect();
    FitSegment {
        samples,
        v0: 0.0,
        entry_height: trace.h[origin] as f64,
        entry_known: false,
    }
}

/// Fits a rising mode. A state followed by the fall is sampled up to and
/// including its trial's switch frame.
fn fit_up(
    mode: Mode,
    trials: &[UpTrial],
    traces: &[HeightTrace],
    switch: &[usize],
    config: &FitConfig,
) -> Result<ModeFit, FitError> {
    if trials.is_empty() {
        return Err(FitError::MissingMode(mode));
    }
    let segments: Vec<FitSegment> = trials
        .iter()
        .map(|u| {
            let end = if u.last { switch[u.trial] + 1 } else { u.end };
            FitSegment {
                v0: u.v0,
                entry_height: u.entry,
                entry_known: true,
                ..collect(&traces[u.trial], u.origin, end)
            }
        })
        .collect();
    fit_mode(mode, &segments, config)
}

/// The last rising state of one trial, as fitted.
#[derive(Debug, Clone, Copy)]
struct Rise {
    origin: usize,
    params: ModeParams,
    v0: f64,
    entry: f64,
}

impl Rise {
    fn height(&self, frame: usize) -> f64 {
        self.params.height(self.entry, self.v0, (frame - self.origin) as f64)
    }

    fn velocity(&self, frame: usize) -> f64 {
        self.params.velocity(self.v0, (frame - self.origin) as f64)
    }
}

fn fall_segment(trace: &HeightTrace, rise: &Rise, switch: usize, landing: usize) -> FitSegment {
    FitSegment {
        v0: rise.velocity(switch),
        entry_height: rise.height(switch),
        entry_known: true,
        ..collect(trace, switch, landing)
    }
}

/// Squared error over `[from, landing)` when the fall starts at `switch`.
fn switch_error(trace: &HeightTrace, rise: &Rise, down: &ModeParams, switch: usize, from: usize, landing: usize) -> f64 {
    let h_switch = rise.height(switch);
    let v_switch = rise.velocity(switch);
    (from..landing.min(trace.h.len()))
        .filter(|&f| !trace.interpolated[f])
        .map(|f| {
            let predicted = if f <= switch {
                rise.height(f)
            } else {
                down.height(h_switch, v_switch, (f - switch) as f64)
            };
            (trace.h[f] as f64 - predicted).powi(2)
        })
        .sum()
}

/// Fits every airborne mode, chaining each state's exit height and velocity
/// into the next state's entry.
///
/// Rounding flattens the apex into a plateau, so the frame where the fall
/// begins is ambiguous. It is chosen per trial among the plateau frames and
/// the frame after, by least squared error, alternating with refits until
/// the choice is stable.
pub fn fit_modes(
    traces: &[HeightTrace],
    segmentations: &[Segmentation],
    bounds: &HoldBounds,
    config: &FitConfig,
) -> Result<ModeFits, FitError> {
    assert_eq!(traces.len(), segmentations.len());
    let mut control_trials = Vec::new();
    let mut fixed_trials = Vec::new();
    for (i, seg) in segmentations.iter().enumerate() {
        let fixed = seg.find(Mode::UpFixed);
        if bounds.has_control {
            if let Some(c) = seg.find(Mode::UpControl) {
                control_trials.push(UpTrial {
                    trial: i,
                    origin: c.start - 1,
                    end: c.end,
                    v0: 0.0,
                    entry: traces[i].h[c.start - 1] as f64,
                    last: fixed.is_none(),
                });
            }
        }
        if let Some(f) = fixed {
            fixed_trials.push(UpTrial {
                trial: i,
                origin: f.start - 1,
                end: f.end,
                v0: 0.0,
                entry: traces[i].h[f.start - 1] as f64,
                last: true,
            });
        }
    }

    // Frames up to the first apex frame are always rising, so the first pass
    // fits on those alone and then seeds the switch from the automaton rule.
    let mut switch: Vec<usize> = segmentations.iter().map(|s| s.diagnostics.apex_first).collect();
    let mut result = None;
    for round in 0..8 {
        let mut rises: Vec<Option<Rise>> = vec![None; traces.len()];
        let up_control = if bounds.has_control {
            let fit = fit_up(Mode::UpControl, &control_trials, traces, &switch, config)?;
            for u in &control_trials {
                if u.last {
                    rises[u.trial] = Some(Rise {
                        origin: u.origin,
                        params: fit.params,
                        v0: 0.0,
                        entry: u.entry,
                    });
                }
            }
            for f in &mut fixed_trials {
                let control = control_trials
                    .iter()
                    .find(|c| c.trial == f.trial)
                    .expect("a fixed segment after control implies a control segment");
                let dt = (f.origin - control.origin) as f64;
                f.v0 = fit.params.velocity(0.0, dt);
                f.entry = fit.params.height(control.entry, 0.0, dt);
            }
            Some(fit)
        } else {
            None
        };
        let up_fixed = fit_up(Mode::UpFixed, &fixed_trials, traces, &switch, config)?;
        for u in &fixed_trials {
            rises[u.trial] = Some(Rise {
                origin: u.origin,
                params: up_fixed.params,
                v0: u.v0,
                entry: u.entry,
            });
        }

        let landing = |i: usize| segmentations[i].diagnostics.landing_frame.unwrap_or(traces[i].h.len());
        let candidates = |i: usize, rise: &Rise| {
            let d = &segmentations[i].diagnostics;
            let from = d.apex_first.max(rise.origin);
            let last = (d.apex_last + 1).min(landing(i).saturating_sub(1)).max(from);
            (from, last)
        };
        if round == 0 {
            for (i, rise) in rises.iter().enumerate() {
                if let Some(rise) = rise {
                    let (from, last) = candidates(i, rise);
                    let turn = apex_frame(&rise.params, rise.v0).map_or(last, |t| rise.origin + t);
                    switch[i] = turn.clamp(from, last);
                }
            }
        }
        let mut down_segments = Vec::new();
        let mut down_origins = Vec::new();
        for (i, rise) in rises.iter().enumerate() {
            if let Some(rise) = rise {
                down_segments.push(fall_segment(&traces[i], rise, switch[i], landing(i)));
                down_origins.push(switch[i]);
            }
        }
        if down_segments.is_empty() {
            return Err(FitError::MissingMode(Mode::Down));
        }
        let down = fit_mode(Mode::Down, &down_segments, config)?;

        let mut next = switch.clone();
        for (i, rise) in rises.iter().enumerate() {
            let Some(rise) = rise else { continue };
            let (from, last) = candidates(i, rise);
            let mut best = (f64::INFINITY, switch[i]);
            for s in from..=last {
                let e = switch_error(&traces[i], rise, &down.params, s, from, landing(i));
                if e < best.0 {
                    best = (e, s);
                }
            }
            next[i] = best.1;
        }
        let settled = next == switch;
        switch = next;
        result = Some(ModeFits {
            up_control,
            up_fixed,
            down,
            down_origins,
        });
        if settled {
            break;
        }
    }
    Ok(result.expect("loop runs at least once"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualStats {
    pub mean_abs: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpModel {
    pub game: String,
    pub character: String,
    pub year: Option<u32>,
    pub up_control: Option<ModeParams>,
    pub up_fixed: ModeParams,
    pub down: ModeParams,
    pub min_hold: u32,
    pub max_hold: u32,
    pub has_control: bool,
    pub residual: ResidualStats,
}

impl JumpModel {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.up_control.is_some() != self.has_control {
            return Err(FitError::Invalid(
                "up_control must be present exactly when has_control is true".into(),
            ));
        }
        if self.min_hold == 0 || self.min_hold > self.max_hold {
            return Err(FitError::Invalid(format!(
                "hold bounds must satisfy 1 <= min_hold <= max_hold, got {} and {}",
                self.min_hold, self.max_hold
            )));
        }
        if self.has_control != (self.min_hold < self.max_hold) {
            return Err(FitError::Invalid(
                "has_control must equal min_hold < max_hold".into(),
            ));
        }
        let all = [self.up_control, Some(self.up_fixed), Some(self.down)];
        if !all.iter().flatten().all(ModeParams::is_finite) {
            return Err(FitError::Invalid("parameters must be finite".into()));
        }
        if !(self.residual.mean_abs.is_finite() && self.residual.max_abs.is_finite()) {
            return Err(FitError::Invalid("residual statistics must be finite".into()));
        }
        for (name, value) in [("game", &self.game), ("character", &self.character)] {
            if value.is_empty() || value.trim() != value || value.contains(['\n', '\r']) {
                return Err(FitError::Invalid(format!("{name} must be a non-empty single-line token")));
            }
        }
        Ok(())
    }

    pub fn to_spec(&self, ground_screen_y: i32) -> AutomatonSpec {
        AutomatonSpec {
            up_control: self.up_control,
            up_fixed: self.up_fixed,
            down: self.down,
            min_hold: self.min_hold,
            max_hold: self.max_hold,
            ground_screen_y,
        }
    }

    /// Rising without the button and falling share gravity and reset.
    pub fn is_mirror_symmetric(&self, gravity_tol: f64, reset_tol: f64) -> bool {
        (self.up_fixed.gravity - self.down.gravity).abs() <= gravity_tol
            && (self.up_fixed.reset - self.down.reset).abs() <= reset_tol
    }

    /// Parameters of the first rising state.
    pub fn initial(&self) -> &ModeParams {
        self.up_control.as_ref().unwrap_or(&self.up_fixed)
    }
}

/// Mean and max absolute difference between replayed and observed heights
/// over every observed frame.
pub fn residual_stats(spec: &AutomatonSpec, traces: &[HeightTrace]) -> ResidualStats {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut max_abs = 0.0f64;
    for trace in traces {
        let sim = simulate(spec, trace.hold_frames, trace.h.len());
        for (f, (&obs, &pred)) in trace.h.iter().zip(&sim.heights).enumerate() {
            if trace.interpolated[f] {
                continue;
            }
            let err = (obs - pred).abs() as f64;
            total += err;
            count += 1;
            max_abs = max_abs.max(err);
        }
    }
    ResidualStats {
        mean_abs: if count == 0 { 0.0 } else { total / count as f64 },
        max_abs,
    }
}

/// Builds the model and scores it by replaying every trial.
pub fn assemble_model(
    game: &str,
    character: &str,
    bounds: &HoldBounds,
    up_control: Option<ModeParams>,
    up_fixed: Option<ModeParams>,
    down: Option<ModeParams>,
    traces: &[HeightTrace],
) -> Result<JumpModel, FitError> {
    let up_fixed = up_fixed.ok_or(FitError::MissingMode(Mode::UpFixed))?;
    let down = down.ok_or(FitError::MissingMode(Mode::Down))?;
    if bounds.has_control && up_control.is_none() {
        return Err(FitError::MissingMode(Mode::UpControl));
    }
    let mut model = JumpModel {
        game: game.to_string(),
        character: character.to_string(),
        year: None,
        up_control: if bounds.has_control { up_control } else { None },
        up_fixed,
        down,
        min_hold: bounds.min_hold,
        max_hold: bounds.max_hold,
        has_control: bounds.has_control,
        residual: ResidualStats::default(),
    };
    let ground = traces.first().map_or(0, |t| t.ground_screen_y);
    model.residual = residual_stats(&model.to_spec(ground), traces);
    Ok(model)
}

const MODEL_KEYS: &[&str] = &[
    "game",
    "character",
    "year",
    "has_control",
    "min_hold",
    "max_hold",
    "up_control.gravity",
    "up_control.reset",
    "up_control.multiplier",
    "up_fixed.gravity",
    "up_fixed.reset",
    "up_fixed.multiplier",
    "down.gravity",
    "down.reset",
    "down.multiplier",
    "residual.mean_abs",
    "residual.max_abs",
];

fn put_params(w: &mut KvWriter, prefix: &str, p: &ModeParams) {
    w.put(&format!("{prefix}.gravity"), p.gravity);
    w.put(&format!("{prefix}.reset"), p.reset);
    w.put(&format!("{prefix}.multiplier"), p.multiplier);
}

fn get_params(doc: &KvDoc, prefix: &str) -> Result<ModeParams, KvError> {
    Ok(ModeParams {
        gravity: doc.parse_required(&format!("{prefix}.gravity"))?,
        reset: doc.parse_required(&format!("{prefix}.reset"))?,
        multiplier: doc.parse_required(&format!("{prefix}.multiplier"))?,
    })
}

/// Key-value text with every analysis feature. Floats are written in their
/// shortest exact form.
pub fn export_model(model: &JumpModel) -> String {
    let mut w = KvWriter::new();
    w.put("game", &model.game).put("character", &model.character);
    if let Some(year) = model.year {
        w.put("year", year);
    }
    w.put("has_control", model.has_control)
        .put("min_hold", model.min_hold)
        .put("max_hold", model.max_hold);
    if let Some(p) = &model.up_control {
        put_params(&mut w, "up_control", p);
    }
    put_params(&mut w, "up_fixed", &model.up_fixed);
    put_params(&mut w, "down", &model.down);
    w.put("residual.mean_abs", model.residual.mean_abs)
        .put("residual.max_abs", model.residual.max_abs);
    w.finish()
}

pub fn import_model(text: &str) -> Result<JumpModel, FitError> {
    let doc = KvDoc::parse(text)?;
    doc.check_known(MODEL_KEYS)?;
    let has_control = doc.parse_bool("has_control")?.ok_or_else(|| KvError::Missing("has_control".into()))?;
    let control_keys = ["up_control.gravity", "up_control.reset", "up_control.multiplier"];
    let up_control = if has_control {
        Some(get_params(&doc, "up_control")?)
    } else {
        if let Some(k) = control_keys.iter().find(|k| doc.contains(k)) {
            return Err(FitError::Invalid(format!("`{k}` given for a model without control")));
        }
        None
    };
    let model = JumpModel {
        game: doc.require("game")?.to_string(),
        character: doc.require("character")?.to_string(),
        year: doc.parse_optional("year")?,
        up_control,
        up_fixed: get_params(&doc, "up_fixed")?,
        down: get_params(&doc, "down")?,
        min_hold: doc.parse_required("min_hold")?,
        max_hold: doc.parse_required("max_hold")?,
        has_control,
        residual: ResidualStats {
            mean_abs: doc.parse_required("residual.mean_abs")?,
            max_abs: doc.parse_required("residual.max_abs")?,
        },
    };
    model.validate()?;
    Ok(model)
}
