//! Experiment protocol and synthetic games with known ground truth.
//!
//! A trial reloads the safe state, holds the jump button for `k` frames,
//! releases it and records `wait_frames` more frames. Frames of the whole log
//! are renumbered consecutively.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::automaton::{quantize, AutomatonSpec, Mode, ModeParams, SimState};
use crate::framelog::{Button, Buttons, ExperimentLog, Frame, SpriteEntry, TrialRecord};
use crate::kv::{KvDoc, KvError, KvWriter};

/// A deterministic game that can be snapshotted and stepped one frame at a
/// time.
pub trait GameHarness {
    type State: Clone;

    fn save_state(&self) -> Self::State;
    fn load_state(&mut self, state: &Self::State);
    fn step(&mut self, buttons: Buttons) -> Frame;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub k_start: u32,
    pub wait_frames: u32,
    pub trial_count: u32,
    pub jump_button: Button,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k_start: 1,
            wait_frames: 120,
            trial_count: 120,
            jump_button: Button::A,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("protocol parameters must be positive")]
    BadProtocol,
    #[error("trial with hold {hold} started from a different first frame than the first trial")]
    Nondeterminism { hold: u32 },
    #[error("invalid synthetic game: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Format(#[from] KvError),
}

/// Runs one trial from `safe` and returns its frames with the game's own
/// frame numbers.
pub fn run_trial<G: GameHarness>(
    game: &mut G,
    safe: &G::State,
    hold: u32,
    config: &ProtocolConfig,
) -> Vec<Frame> {
    game.load_state(safe);
    let press = Buttons::only(config.jump_button);
    (0..hold + config.wait_frames)
        .map(|f| game.step(if f < hold { press } else { Buttons::NONE }))
        .collect()
}

pub fn run_protocol<G: GameHarness>(
    game: &mut G,
    config: &ProtocolConfig,
    game_id: &str,
    character_id: &str,
) -> Result<ExperimentLog, HarnessError> {
    if config.k_start == 0 || config.trial_count == 0 {
        return Err(HarnessError::BadProtocol);
    }
    let safe = game.save_state();
    let mut trials = Vec::with_capacity(config.trial_count as usize);
    let mut next_number = 0u64;
    let mut reference: Option<Vec<SpriteEntry>> = None;
    for hold in config.k_start..config.k_start + config.trial_count {
        let mut frames = run_trial(game, &safe, hold, config);
        let first = &frames[0].sprites;
        match &reference {
            None => reference = Some(first.clone()),
            Some(r) if r != first => return Err(HarnessError::Nondeterminism { hold }),
            Some(_) => {}
        }
        for frame in &mut frames {
            frame.frame_number = next_number;
            next_number += 1;
        }
        trials.push(TrialRecord {
            hold_frames: hold,
            frames,
        });
    }
    game.load_state(&safe);
    Ok(ExperimentLog {
        game_id: game_id.to_string(),
        character_id: character_id.to_string(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Archetype {
    ParabolicControlled,
    VelocityCut,
    Fixed,
    StairStep,
    PresetTrajectory,
    LandingClip,
    GroundHover,
}

impl Archetype {
    pub const ALL: [Archetype; 7] = [
        Archetype::ParabolicControlled,
        Archetype::VelocityCut,
        Archetype::Fixed,
        Archetype::StairStep,
        Archetype::PresetTrajectory,
        Archetype::LandingClip,
        Archetype::GroundHover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::ParabolicControlled => "parabolic_controlled",
            Archetype::VelocityCut => "velocity_cut",
            Archetype::Fixed => "fixed",
            Archetype::StairStep => "stair_step",
            Archetype::PresetTrajectory => "preset_trajectory",
            Archetype::LandingClip => "landing_clip",
            Archetype::GroundHover => "ground_hover",
        }
    }

    /// Airborne heights follow the automaton. Landing quirks only touch
    /// frames at or near the ground.
    pub fn is_physical(self) -> bool {
        !matches!(self, Archetype::StairStep | Archetype::PresetTrajectory)
    }

    /// Archetypes whose parameters the pipeline must recover.
    pub fn is_recoverable(self) -> bool {
        matches!(
            self,
            Archetype::ParabolicControlled | Archetype::VelocityCut | Archetype::Fixed
        )
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown archetype `{s}`"))
    }
}

/// Grid of equally sized sub-sprites making up the player.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubSpriteLayout {
    pub cols: u8,
    pub rows: u8,
    pub sprite_height: u8,
}

impl SubSpriteLayout {
    pub fn count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn pixel_height(&self) -> i32 {
        self.rows as i32 * self.sprite_height as i32
    }
}

impl fmt::Display for SubSpriteLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.cols, self.rows, self.sprite_height)
    }
}

impl FromStr for SubSpriteLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('x').collect();
        let bad = || format!("layout must look like 2x4x8, got `{s}`");
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<u8> = parts
            .iter()
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cols: nums[0],
            rows: nums[1],
            sprite_height: nums[2],
        })
    }
}

const ENEMY_LEFT: i32 = 120;
const ENEMY_SPAN: i32 = 112;
const CLIP_DEPTH: i32 = 8;
const CLIP_FRAMES: u64 = 2;
const HOVER_PERIOD: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGameSpec {
    pub archetype: Archetype,
    pub game: String,
    pub character: String,
    pub year: Option<u32>,
    pub automaton: AutomatonSpec,
    pub layout: SubSpriteLayout,
    pub player_x: u8,
    /// Horizontally patrolling single-sprite enemies.
    pub decorations: u8,
    /// Three static status-bar sprites.
    pub hud: bool,
    /// Player hidden for `flicker_hide` of every `flicker_period` frames; 0
    /// disables flicker.
    pub flicker_period: u32,
    pub flicker_hide: u32,
    /// Displayed height refresh interval for stair-step jumps.
    pub stair_period: u32,
    /// Heights per frame after the press for preset trajectories.
    pub preset: Vec<i32>,
    pub jump_button: Button,
}

fn default_preset() -> Vec<i32> {
    let mut table = vec![0, 4, 8, 11, 14, 17, 19, 21, 22, 23, 24];
    table.extend([24; 6]);
    table.extend([23, 21, 18, 14, 9, 3, 0]);
    table
}

impl SyntheticGameSpec {
    fn base(archetype: Archetype, name: &str, automaton: AutomatonSpec) -> Self {
        Self {
            archetype,
            game: name.to_string(),
            character: name.to_string(),
            year: None,
            automaton,
            layout: SubSpriteLayout {
                cols: 2,
                rows: 4,
                sprite_height: 8,
            },
            player_x: 64,
            decorations: 3,
            hud: true,
            flicker_period: 0,
            flicker_hide: 0,
            stair_period: 3,
            preset: default_preset(),
            jump_button: Button::A,
        }
    }

    /// Built-in parameterizations covering every archetype.
    pub fn builtin(name: &str) -> Option<Self> {
        let fixed = |rise: ModeParams, fall: ModeParams| AutomatonSpec {
            up_control: None,
            up_fixed: rise,
            down: fall,
            min_hold: 1,
            max_hold: 1,
            ground_screen_y: 200,
        };
        let controlled = |control: ModeParams, rise: ModeParams, fall: ModeParams, min: u32, max: u32| AutomatonSpec {
            up_control: Some(control),
            up_fixed: rise,
            down: fall,
            min_hold: min,
            max_hold: max,
            ground_screen_y: 200,
        };
        let castlevania = fixed(ModeParams::new(-0.25, 4.0, 0.0), ModeParams::new(-0.25, 0.0, 1.0));
        let spec = match name {
            "mario" => Self::base(
                Archetype::ParabolicControlled,
                name,
                controlled(
                    ModeParams::new(-0.06, 4.0, 0.0),
                    ModeParams::new(-0.2, 0.0, 1.0),
                    ModeParams::new(-0.35, 0.0, 1.0),
                    4,
                    24,
                ),
            ),
            "luigi" => Self {
                flicker_period: 16,
                flicker_hide: 2,
                ..Self::base(
                    Archetype::ParabolicControlled,
                    name,
                    controlled(
                        ModeParams::new(-0.04, 3.5, 0.0),
                        ModeParams::new(-0.12, 0.5, 0.6),
                        ModeParams::new(-0.3, 0.0, 1.0),
                        3,
                        30,
                    ),
                )
            },
            "metroid" => Self::base(
                Archetype::VelocityCut,
                name,
                controlled(
                    ModeParams::new(-0.1, 5.0, 0.0),
                    ModeParams::new(-0.2, 0.0, 0.5),
                    ModeParams::new(-0.2, 0.0, 1.0),
                    10,
                    22,
                ),
            ),
            "megaman" => Self {
                layout: SubSpriteLayout {
                    cols: 3,
                    rows: 2,
                    sprite_height: 16,
                },
                ..Self::base(
                    Archetype::VelocityCut,
                    name,
                    controlled(
                        ModeParams::new(-0.1, 4.5, 0.0),
                        ModeParams::new(-0.15, 1.0, 0.5),
                        ModeParams::new(-0.25, 0.0, 1.0),
                        6,
                        16,
                    ),
                )
            },
            "castlevania" => Self::base(Archetype::Fixed, name, castlevania.clone()),
            "ninja" => Self::base(
                Archetype::Fixed,
                name,
                fixed(ModeParams::new(-0.2, 6.2, 0.0), ModeParams::new(-0.3, 0.0, 1.0)),
            ),
            "stair_step" => Self::base(Archetype::StairStep, name, castlevania.clone()),
            "preset" => Self::base(Archetype::PresetTrajectory, name, castlevania.clone()),
            "landing_clip" => Self::base(Archetype::LandingClip, name, castlevania.clone()),
            "ground_hover" => Self::base(Archetype::GroundHover, name, castlevania),
            _ => return None,
        };
        Some(spec)
    }

    pub const BUILTIN_NAMES: [&'static str; 10] = [
        "mario",
        "luigi",
        "metroid",
        "megaman",
        "castlevania",
        "ninja",
        "stair_step",
        "preset",
        "landing_clip",
        "ground_hover",
    ];

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if let Err(e) = self.automaton.validate() {
            return bad(e.to_string());
        }
        let l = self.layout;
        if l.cols == 0 || l.rows == 0 || !matches!(l.sprite_height, 8 | 16) {
            return bad(format!("unsupported layout {l}"));
        }
        let width = l.cols as i32 * 8;
        let left = self.player_x as i32 - width / 2;
        if left < 0 || left + width > 255 || self.player_x as i32 + 40 > ENEMY_LEFT {
            return bad(format!("player_x {} leaves no room for the player", self.player_x));
        }
        let sprites = l.count() + self.decorations as usize + if self.hud { 3 } else { 0 };
        if sprites > crate::framelog::MAX_SPRITES {
            return bad(format!("{sprites} sprites exceed the sprite table"));
        }
        if self.decorations > 3 {
            return bad("at most 3 decorations are supported".into());
        }
        if self.flicker_period > 0 && self.flicker_hide >= self.flicker_period {
            return bad("flicker_hide must be below flicker_period".into());
        }
        if self.stair_period == 0 {
            return bad("stair_period must be positive".into());
        }
        if self.archetype == Archetype::PresetTrajectory
            && (self.preset.first() != Some(&0) || self.preset.iter().any(|&h| h < 0))
        {
            return bad("preset heights must start at 0 and be non-negative".into());
        }
        let ground = self.automaton.ground_screen_y;
        if ground + CLIP_DEPTH > 239 {
            return bad(format!("ground_y {ground} is too low on screen"));
        }
        let apex = self.highest_point();
        if ground - apex - l.pixel_height() < 0 {
            return bad(format!("apex {apex} px leaves the top of the screen"));
        }
        Ok(())
    }

    fn highest_point(&self) -> i32 {
        if self.archetype == Archetype::PresetTrajectory {
            return self.preset.iter().copied().max().unwrap_or(0);
        }
        let sim = crate::automaton::simulate(&self.automaton, self.automaton.max_hold, 2000);
        sim.heights.into_iter().max().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new();
        let a = &self.automaton;
        w.put("archetype", self.archetype)
            .put("game", &self.game)
            .put("character", &self.character);
        if let Some(y) = self.year {
            w.put("year", y);
        }
        w.put("min_hold", a.min_hold)
            .put("max_hold", a.max_hold)
            .put("ground_y", a.ground_screen_y);
        let mut params = |prefix: &str, p: &ModeParams| {
            w.put(&format!("{prefix}.gravity"), p.gravity)
                .put(&format!("{prefix}.reset"), p.reset)
                .put(&format!("{prefix}.multiplier"), p.multiplier);
        };
        if let Some(p) = &a.up_control {
            params("up_control", p);
        }
        params("up_fixed", &a.up_fixed);
        params("down", &a.down);
        w.put("layout", self.layout)
            .put("player_x", self.player_x)
            .put("decorations", self.decorations)
            .put("hud", self.hud)
            .put("flicker_period", self.flicker_period)
            .put("flicker_hide", self.flicker_hide)
            .put("stair_period", self.stair_period)
            .put("jump_button", self.jump_button);
        if self.archetype == Archetype::PresetTrajectory {
            let table: Vec<String> = self.preset.iter().map(i32::to_string).collect();
            w.put("preset", table.join(","));
        }
        w.finish()
    }

    /// Parses the key-value spec format. Only `archetype`, the hold bounds
    /// and the mode parameters are required.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let doc = KvDoc::parse(text)?;
        doc.check_known(&[
            "archetype",
            "game",
            "character",
            "year",
            "min_hold",
            "max_hold",
            "ground_y",
            "up_control.*",
            "up_fixed.*",
            "down.*",
            "layout",
            "player_x",
            "decorations",
            "hud",
            "flicker_period",
            "flicker_hide",
            "stair_period",
            "jump_button",
            "preset",
        ])?;
        let archetype: Archetype = doc
            .require("archetype")?
            .parse()
            .map_err(HarnessError::InvalidSpec)?;
        let params = |prefix: &str| -> Result<ModeParams, KvError> {
            Ok(ModeParams {
                gravity: doc.parse_required(&format!("{prefix}.gravity"))?,
                reset: doc.parse_required(&format!("{prefix}.reset"))?,
                multiplier: doc.parse_required(&format!("{prefix}.multiplier"))?,
            })
        };
        let min_hold = doc.parse_required("min_hold")?;
        let max_hold = doc.parse_required("max_hold")?;
        let automaton = AutomatonSpec {
            up_control: if min_hold < max_hold {
                Some(params("up_control")?)
            } else {
                None
            },
            up_fixed: params("up_fixed")?,
            down: params("down")?,
            min_hold,
            max_hold,
            ground_screen_y: doc.parse_or("ground_y", 200)?,
        };
        let name = doc.get("game").unwrap_or("synthetic").to_string();
        let mut spec = Self::base(archetype, &name, automaton);
        spec.character = doc.get("character").unwrap_or(&name).to_string();
        spec.year = doc.parse_optional("year")?;
        if let Some(layout) = doc.get("layout") {
            spec.layout = layout.parse().map_err(HarnessError::InvalidSpec)?;
        }
        spec.player_x = doc.parse_or("player_x", spec.player_x)?;
        spec.decorations = doc.parse_or("decorations", spec.decorations)?;
        spec.hud = doc.parse_bool("hud")?.unwrap_or(spec.hud);
        spec.flicker_period = doc.parse_or("flicker_period", 0)?;
        spec.flicker_hide = doc.parse_or("flicker_hide", 0)?;
        spec.stair_period = doc.parse_or("stair_period", spec.stair_period)?;
        spec.jump_button = doc.parse_or("jump_button", Button::A)?;
        if let Some(table) = doc.get("preset") {
            spec.preset = table
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| KvError::BadValue {
                    key: "preset".into(),
                    value: table.into(),
                })?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticState {
    frame: u64,
    sim: SimState,
    /// Frames since the jump started, while airborne or after landing.
    since_press: Option<u64>,
    landed_at: Option<u64>,
    latched: i32,
}

/// A deterministic game rendering one player and optional decorations.
#[derive(Debug, Clone)]
pub struct SyntheticGame {
    spec: SyntheticGameSpec,
    state: SyntheticState,
}

pub fn make_synthetic(spec: SyntheticGameSpec) -> Result<SyntheticGame, HarnessError> {
    spec.validate()?;
    Ok(SyntheticGame {
        spec,
        state: SyntheticState {
            frame: 0,
            sim: SimState::default(),
            since_press: None,
            landed_at: None,
            latched: 0,
        },
    })
}

impl SyntheticGame {
    pub fn spec(&self) -> &SyntheticGameSpec {
        &self.spec
    }

    fn display_height(&mut self, pressed: bool) -> i32 {
        let spec = &self.spec;
        let st = &mut self.state;
        let before = st.sim.mode;
        let h = st.sim.step(&spec.automaton, pressed);
        let after = st.sim.mode;
        if before == Mode::Ground && after != Mode::Ground {
            st.since_press = Some(0);
            st.landed_at = None;
        } else if let Some(n) = st.since_press.as_mut() {
            *n += 1;
        }
        if before != Mode::Ground && after == Mode::Ground {
            st.landed_at = Some(st.frame);
        }
        let physical = quantize(h);
        let since_landing = st.landed_at.map(|f| st.frame - f);
        match spec.archetype {
            Archetype::ParabolicControlled | Archetype::VelocityCut | Archetype::Fixed => physical,
            Archetype::StairStep => {
                if st.since_press.is_some_and(|n| n % spec.stair_period as u64 == 0) || st.since_press.is_none() {
                    st.latched = physical;
                }
                st.latched
            }
            Archetype::PresetTrajectory => st
                .since_press
                .and_then(|n| spec.preset.get(n as usize).copied())
                .unwrap_or(0),
            Archetype::LandingClip => match since_landing {
                Some(n) if n < CLIP_FRAMES => -CLIP_DEPTH,
                _ => physical,
            },
            Archetype::GroundHover => match since_landing {
                Some(n) if (n / HOVER_PERIOD).is_multiple_of(2) => 1,
                _ => physical,
            },
        }
    }

    fn player_visible(&self) -> bool {
        let p = self.spec.flicker_period as u64;
        p == 0 || self.state.frame % p < p - self.spec.flicker_hide as u64
    }

    fn render(&self, height: i32) -> Vec<SpriteEntry> {
        let spec = &self.spec;
        let mut sprites = Vec::new();
        if self.player_visible() {
            let l = spec.layout;
            let bottom = spec.automaton.ground_screen_y - height;
            let left = spec.player_x as i32 - l.cols as i32 * 4;
            for r in 0..l.rows {
                for c in 0..l.cols {
                    sprites.push(SpriteEntry {
                        tile: 0x10 + r * l.cols + c,
                        x: (left + c as i32 * 8) as u8,
                        y: (bottom - (l.rows - r) as i32 * l.sprite_height as i32) as u8,
                        palette: 0,
                        h_flip: false,
                        v_flip: false,
                        background: false,
                        height: l.sprite_height,
                    });
                }
            }
        }
        for e in 0..spec.decorations {
            let phase = (self.state.frame as i32 + 37 * e as i32) % (2 * ENEMY_SPAN);
            let offset = if phase < ENEMY_SPAN { phase } else { 2 * ENEMY_SPAN - phase };
            sprites.push(SpriteEntry {
                tile: 0x80 + e,
                x: (ENEMY_LEFT + offset) as u8,
                y: 60 + 40 * e,
                palette: 1 + e % 3,
                h_flip: phase >= ENEMY_SPAN,
                v_flip: false,
                background: false,
                height: 8,
            });
        }
        if spec.hud {
            for i in 0..3u8 {
                sprites.push(SpriteEntry {
                    tile: 0xC0 + i,
                    x: 16 + 16 * i,
                    y: 16,
                    palette: 2,
                    h_flip: false,
                    v_flip: false,
                    background: true,
                    height: 8,
                });
            }
        }
        sprites
    }
}

impl GameHarness for SyntheticGame {
    type State = SyntheticState;

    fn save_state(&self) -> SyntheticState {
        self.state.clone()
    }

    fn load_state(&mut self, state: &SyntheticState) {
        self.state = state.clone();
    }

    fn step(&mut self, buttons: Buttons) -> Frame {
        let pressed = buttons.contains(self.spec.jump_button);
        let height = self.display_height(pressed);
        let frame = Frame {
            frame_number: self.state.frame,
            sprites: self.render(height),
            buttons,
        };
        self.state.frame += 1;
        frame
    }
}
