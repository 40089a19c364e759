//! End-to-end wiring: config file, log to segments, segments to model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{AnalysisConfig, AnalysisError};
use crate::fit::{assemble_model, fit_modes, FitConfig, FitError, JumpModel, ModeFits};
use crate::framelog::{Button, ExperimentLog, FrameLogError};
use crate::harness::{make_synthetic, run_protocol, HarnessError, ProtocolConfig, SyntheticGameSpec};
use crate::jumpseg::{
    find_player, hold_bounds, player_trace, segment, HeightTrace, HoldBounds, SegmentError, Segmentation,
    TrialTracks, DEFAULT_START_WINDOW,
};
use crate::kv::{KvDoc, KvError, KvWriter};
use crate::spritemerge::{accumulate_stats, build_merge_map, MergeError, MergeMap, DEFAULT_NPMI_THRESHOLD};
use crate::tracker::{track_frames, TrackerConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Log(#[from] FrameLogError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("config: {0}")]
    Format(#[from] KvError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Every tunable knob of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub fit: FitConfig,
    pub protocol: ProtocolConfig,
    /// Frames after the first frame in which the jump must start rising.
    pub start_window: usize,
    pub npmi_threshold: f64,
    pub analysis: AnalysisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            fit: FitConfig::default(),
            protocol: ProtocolConfig::default(),
            start_window: DEFAULT_START_WINDOW,
            npmi_threshold: DEFAULT_NPMI_THRESHOLD,
            analysis: AnalysisConfig::default(),
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "tracker.sigma",
    "tracker.initiation_distance",
    "tracker.coast_limit",
    "fit.epsilon",
    "fit.penalty",
    "fit.max_iterations",
    "fit.convergence_tolerance",
    "fit.min_velocity_spread",
    "fit.minimax_iterations",
    "protocol.k_start",
    "protocol.wait_frames",
    "protocol.trial_count",
    "protocol.jump_button",
    "segment.start_window",
    "merge.npmi_threshold",
    "analysis.elbow_threshold",
    "analysis.restarts",
    "analysis.k_min",
    "analysis.k_max",
    "analysis.seed",
];

impl PipelineConfig {
    /// Every key in a fixed order; the hash is taken over this text.
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new();
        w.put("tracker.sigma", self.tracker.sigma)
            .put("tracker.initiation_distance", self.tracker.initiation_distance)
            .put("tracker.coast_limit", self.tracker.coast_limit)
            .put("fit.epsilon", self.fit.epsilon)
            .put("fit.penalty", self.fit.penalty)
            .put("fit.max_iterations", self.fit.max_iterations)
            .put("fit.convergence_tolerance", self.fit.convergence_tolerance)
            .put("fit.min_velocity_spread", self.fit.min_velocity_spread)
            .put("fit.minimax_iterations", self.fit.minimax_iterations)
            .put("protocol.k_start", self.protocol.k_start)
            .put("protocol.wait_frames", self.protocol.wait_frames)
            .put("protocol.trial_count", self.protocol.trial_count)
            .put("protocol.jump_button", self.protocol.jump_button)
            .put("segment.start_window", self.start_window)
            .put("merge.npmi_threshold", self.npmi_threshold)
            .put("analysis.elbow_threshold", self.analysis.elbow_threshold)
            .put("analysis.restarts", self.analysis.restarts)
            .put("analysis.k_min", self.analysis.k_min)
            .put("analysis.k_max", self.analysis.k_max)
            .put("analysis.seed", self.analysis.seed);
        w.finish()
    }

    /// Parses a config file. Absent keys keep their defaults; unknown keys
    /// are rejected.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let doc = KvDoc::parse(text)?;
        doc.check_known(CONFIG_KEYS)?;
        let d = Self::default();
        let config = Self {
            tracker: TrackerConfig {
                sigma: doc.parse_or("tracker.sigma", d.tracker.sigma)?,
                initiation_distance: doc.parse_or("tracker.initiation_distance", d.tracker.initiation_distance)?,
                coast_limit: doc.parse_or("tracker.coast_limit", d.tracker.coast_limit)?,
            },
            fit: FitConfig {
                epsilon: doc.parse_or("fit.epsilon", d.fit.epsilon)?,
                penalty: doc.parse_or("fit.penalty", d.fit.penalty)?,
                max_iterations: doc.parse_or("fit.max_iterations", d.fit.max_iterations)?,
                convergence_tolerance: doc.parse_or("fit.convergence_tolerance", d.fit.convergence_tolerance)?,
                min_velocity_spread: doc.parse_or("fit.min_velocity_spread", d.fit.min_velocity_spread)?,
                minimax_iterations: doc.parse_or("fit.minimax_iterations", d.fit.minimax_iterations)?,
            },
            protocol: ProtocolConfig {
                k_start: doc.parse_or("protocol.k_start", d.protocol.k_start)?,
                wait_frames: doc.parse_or("protocol.wait_frames", d.protocol.wait_frames)?,
                trial_count: doc.parse_or("protocol.trial_count", d.protocol.trial_count)?,
                jump_button: doc.parse_or::<Button>("protocol.jump_button", d.protocol.jump_button)?,
            },
            start_window: doc.parse_or("segment.start_window", d.start_window)?,
            npmi_threshold: doc.parse_or("merge.npmi_threshold", d.npmi_threshold)?,
            analysis: AnalysisConfig {
                elbow_threshold: doc.parse_or("analysis.elbow_threshold", d.analysis.elbow_threshold)?,
                restarts: doc.parse_or("analysis.restarts", d.analysis.restarts)?,
                k_min: doc.parse_or("analysis.k_min", d.analysis.k_min)?,
                k_max: doc.parse_or("analysis.k_max", d.analysis.k_max)?,
                seed: doc.parse_or("analysis.seed", d.analysis.seed)?,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.tracker.validate().map_err(PipelineError::Config)?;
        self.fit.validate().map_err(PipelineError::Config)?;
        self.analysis.validate()?;
        if self.protocol.k_start == 0 || self.protocol.trial_count == 0 {
            return Err(PipelineError::Config("protocol k_start and trial_count must be positive".into()));
        }
        if self.start_window == 0 {
            return Err(PipelineError::Config("start window must be positive".into()));
        }
        if !(self.npmi_threshold > 0.0 && self.npmi_threshold <= 1.0) {
            return Err(PipelineError::Config(format!(
                "NPMI threshold must be in (0, 1], got {}",
                self.npmi_threshold
            )));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of `to_text`.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }
}

/// Runs the experiment protocol against a synthetic game.
pub fn run_synthetic(spec: &SyntheticGameSpec, config: &PipelineConfig) -> Result<ExperimentLog, PipelineError> {
    let mut game = make_synthetic(spec.clone())?;
    Ok(run_protocol(&mut game, &config.protocol, &spec.game, &spec.character)?)
}

/// Everything recovered from a log before fitting.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub merge_map: MergeMap,
    pub trials: Vec<TrialTracks>,
    pub player_group: usize,
    pub traces: Vec<HeightTrace>,
    pub bounds: HoldBounds,
    pub segmentations: Vec<Segmentation>,
}

/// Merges sprites, tracks each trial independently, finds the player and
/// segments every trial. Trials are tracked in parallel; results keep log
/// order.
pub fn extract(log: &ExperimentLog, config: &PipelineConfig) -> Result<Extraction, PipelineError> {
    config.validate()?;
    let stats = accumulate_stats(log)?;
    let merge_map = build_merge_map(&stats, config.npmi_threshold)?;
    let trials: Vec<TrialTracks> = log
        .trials
        .par_iter()
        .map(|trial| TrialTracks {
            hold_frames: trial.hold_frames,
            first_frame: trial.frames.first().map_or(0, |f| f.frame_number),
            frame_count: trial.frames.len(),
            tracks: track_frames(&config.tracker, &trial.frames, &merge_map),
        })
        .collect();
    let max_gap = config.tracker.coast_limit as usize;
    let player_group = find_player(&trials, max_gap)?;
    let traces = trials
        .iter()
        .map(|t| player_trace(t, player_group, max_gap))
        .collect::<Result<Vec<_>, _>>()?;
    let by_hold: BTreeMap<u32, Vec<i32>> = traces.iter().map(|t| (t.hold_frames, t.h.clone())).collect();
    let bounds = hold_bounds(&by_hold)?;
    let segmentations = traces
        .iter()
        .map(|t| segment(t, Some(&bounds), config.start_window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Extraction {
        merge_map,
        trials,
        player_group,
        traces,
        bounds,
        segmentations,
    })
}

/// Fits every mode and assembles the scored model.
pub fn fit_extraction(
    extraction: &Extraction,
    game: &str,
    character: &str,
    config: &PipelineConfig,
) -> Result<(ModeFits, JumpModel), PipelineError> {
    let fits = fit_modes(
        &extraction.traces,
        &extraction.segmentations,
        &extraction.bounds,
        &config.fit,
    )?;
    let model = assemble_model(
        game,
        character,
        &extraction.bounds,
        fits.up_control.as_ref().map(|f| f.params),
        Some(fits.up_fixed.params),
        Some(fits.down.params),
        &extraction.traces,
    )?;
    Ok((fits, model))
}

/// Log to model in one call.
pub fn infer(log: &ExperimentLog, config: &PipelineConfig) -> Result<JumpModel, PipelineError> {
    let extraction = extract(log, config)?;
    let (_, model) = fit_extraction(&extraction, &log.game_id, &log.character_id, config)?;
    Ok(model)
}

/// `trial_hold,track_id,group,frame,x,y`, one row per tracked point.
pub fn tracks_csv(extraction: &Extraction) -> String {
    let mut out = String::from("trial_hold,track_id,group,frame,x,y\n");
    for trial in &extraction.trials {
        for track in &trial.tracks {
            for (frame, (x, y)) in &track.points {
                writeln!(
                    out,
                    "{},{},{},{frame},{x},{y}",
                    trial.hold_frames, track.track_id, track.group
                )
                .unwrap();
            }
        }
    }
    out
}

/// `trial_hold,mode,start,end,entry_height,entry_velocity`, one row per
/// airborne or ground segment.
pub fn segments_csv(extraction: &Extraction) -> String {
    let mut out = String::from("trial_hold,mode,start,end,entry_height,entry_velocity\n");
    for (trace, seg) in extraction.traces.iter().zip(&extraction.segmentations) {
        for s in &seg.segments {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                trace.hold_frames,
                s.mode.name(),
                s.start,
                s.end,
                s.entry_height,
                s.entry_velocity
            )
            .unwrap();
        }
    }
    out
}

/// Names of the modes a segmentation covers, for quick summaries.
pub fn mode_names(seg: &Segmentation) -> Vec<&'static str> {
    seg.segments.iter().map(|s| s.mode.name()).collect()
}
