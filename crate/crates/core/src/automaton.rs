//! Forward simulation of the four-state jump automaton.
//!
//! Within a state the height follows
//! `h(t) = h_entry + (reset + multiplier * v_entry) * t + gravity * t^2`
//! where `t` counts frames since the state was entered. There is no 1/2
//! factor on the quadratic term; the fitter inverts exactly this form.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Ground,
    UpControl,
    UpFixed,
    Down,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Ground, Mode::UpControl, Mode::UpFixed, Mode::Down];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ground => "ground",
            Mode::UpControl => "up_control",
            Mode::UpFixed => "up_fixed",
            Mode::Down => "down",
        }
    }

    pub fn is_up(self) -> bool {
        matches!(self, Mode::UpControl | Mode::UpFixed)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Motion parameters of one airborne state, in pixels and frames with up
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeParams {
    pub gravity: f64,
    pub reset: f64,
    pub multiplier: f64,
}

impl ModeParams {
    pub const fn new(gravity: f64, reset: f64, multiplier: f64) -> Self {
        Self {
            gravity,
            reset,
            multiplier,
        }
    }

    /// Linear coefficient of the closed form for a given entry velocity.
    pub fn initial_velocity(&self, v_entry: f64) -> f64 {
        self.reset + self.multiplier * v_entry
    }

    pub fn height(&self, h_entry: f64, v_entry: f64, t: f64) -> f64 {
        h_entry + self.initial_velocity(v_entry) * t + self.gravity * t * t
    }

    pub fn velocity(&self, v_entry: f64, t: f64) -> f64 {
        self.initial_velocity(v_entry) + 2.0 * self.gravity * t
    }

    pub fn is_finite(&self) -> bool {
        self.gravity.is_finite() && self.reset.is_finite() && self.multiplier.is_finite()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("min_hold must be at least 1, got {0}")]
    MinHoldZero(u32),
    #[error("min_hold {min} exceeds max_hold {max}")]
    HoldOrder { min: u32, max: u32 },
    #[error("up_control parameters must be present exactly when min_hold < max_hold (min {min}, max {max})")]
    ControlMismatch { min: u32, max: u32 },
    #[error("{0} parameters are not finite")]
    NotFinite(Mode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutomatonSpec {
    pub up_control: Option<ModeParams>,
    pub up_fixed: ModeParams,
    pub down: ModeParams,
    pub min_hold: u32,
    pub max_hold: u32,
    pub ground_screen_y: i32,
}

impl AutomatonSpec {
    pub fn has_control(&self) -> bool {
        self.up_control.is_some()
    }

    pub fn params(&self, mode: Mode) -> Option<&ModeParams> {
        match mode {
            Mode::Ground => None,
            Mode::UpControl => self.up_control.as_ref(),
            Mode::UpFixed => Some(&self.up_fixed),
            Mode::Down => Some(&self.down),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.min_hold == 0 {
            return Err(SpecError::MinHoldZero(self.min_hold));
        }
        if self.min_hold > self.max_hold {
            return Err(SpecError::HoldOrder {
                min: self.min_hold,
                max: self.max_hold,
            });
        }
        if self.has_control() != (self.min_hold < self.max_hold) {
            return Err(SpecError::ControlMismatch {
                min: self.min_hold,
                max: self.max_hold,
            });
        }
        for mode in [Mode::UpControl, Mode::UpFixed, Mode::Down] {
            if let Some(p) = self.params(mode) {
                if !p.is_finite() {
                    return Err(SpecError::NotFinite(mode));
                }
            }
        }
        Ok(())
    }

    /// Frames spent in up-control for a press of `hold` frames.
    pub fn effective_hold(&self, hold: u32) -> u32 {
        hold.clamp(self.min_hold, self.max_hold)
    }
}

/// Simulator state. `h_entry` and `v_entry` are the height and velocity at
/// the frame the current state was entered; `t_s` counts frames since then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub mode: Mode,
    pub t_s: u32,
    pub h: f64,
    pub h_entry: f64,
    pub v_entry: f64,
    pub was_pressed: bool,
}

impl Default for SimState {
    fn default() -> Self {
        Self {
            mode: Mode::Ground,
            t_s: 0,
            h: 0.0,
            h_entry: 0.0,
            v_entry: 0.0,
            was_pressed: false,
        }
    }
}

impl SimState {
    /// Velocity at the current frame, handed to the next state on a
    /// transition.
    pub fn exit_velocity(&self, spec: &AutomatonSpec) -> f64 {
        spec.params(self.mode)
            .map_or(0.0, |p| p.velocity(self.v_entry, self.t_s as f64))
    }

    fn enter(&mut self, mode: Mode, spec: &AutomatonSpec) {
        let v = self.exit_velocity(spec);
        self.mode = mode;
        self.t_s = 0;
        self.h_entry = self.h;
        self.v_entry = v;
    }

    fn evaluate(&mut self, spec: &AutomatonSpec) {
        if let Some(p) = spec.params(self.mode) {
            self.h = p.height(self.h_entry, self.v_entry, self.t_s as f64);
        }
    }

    /// Advances one frame with the jump button in state `pressed` and returns
    /// the real-valued height for that frame.
    pub fn step(&mut self, spec: &AutomatonSpec, pressed: bool) -> f64 {
        let edge = pressed && !self.was_pressed;
        self.was_pressed = pressed;
        match self.mode {
            Mode::Ground => {
                if edge {
                    self.h = 0.0;
                    self.enter(
                        if spec.has_control() { Mode::UpControl } else { Mode::UpFixed },
                        spec,
                    );
                    self.v_entry = 0.0;
                }
            }
            _ => {
                self.t_s += 1;
                self.evaluate(spec);
            }
        }
        self.settle(spec, pressed);
        self.h
    }

    /// Fires every transition enabled at the current frame.
    fn settle(&mut self, spec: &AutomatonSpec, pressed: bool) {
        loop {
            match self.mode {
                Mode::Ground => return,
                Mode::UpControl => {
                    let released = self.t_s >= spec.min_hold && !pressed;
                    if released || self.t_s >= spec.max_hold {
                        self.enter(Mode::UpFixed, spec);
                        continue;
                    }
                    if self.exit_velocity(spec) <= 0.0 {
                        self.enter(Mode::Down, spec);
                        continue;
                    }
                    return;
                }
                Mode::UpFixed => {
                    if self.exit_velocity(spec) <= 0.0 {
                        self.enter(Mode::Down, spec);
                        continue;
                    }
                    return;
                }
                Mode::Down => {
                    if self.h <= 0.0 {
                        self.mode = Mode::Ground;
                        self.t_s = 0;
                        self.h = 0.0;
                        self.h_entry = 0.0;
                        self.v_entry = 0.0;
                    }
                    return;
                }
            }
        }
    }
}

/// Emitted integer height for a real-valued height.
pub fn quantize(h: f64) -> i32 {
    (h + 0.5).floor() as i32
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub heights: Vec<i32>,
    pub modes: Vec<Mode>,
    /// The jump had not returned to the ground by the last frame.
    pub truncated: bool,
}

/// Presses the jump button on frame 0, holds it for `hold_frames` frames and
/// records `total_frames` frames.
pub fn simulate(spec: &AutomatonSpec, hold_frames: u32, total_frames: usize) -> Simulation {
    let mut state = SimState::default();
    let mut heights = Vec::with_capacity(total_frames);
    let mut modes = Vec::with_capacity(total_frames);
    let mut left_ground = false;
    for frame in 0..total_frames {
        let h = state.step(spec, (frame as u64) < hold_frames as u64);
        left_ground |= state.mode != Mode::Ground;
        heights.push(quantize(h));
        modes.push(state.mode);
    }
    let truncated = left_ground && state.mode != Mode::Ground;
    Simulation {
        heights,
        modes,
        truncated,
    }
}
