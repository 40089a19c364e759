//! Frame logs: per-frame sprite-table dumps plus controller state.
//!
//! The text format is line oriented:
//!
//! ```text
//! #LOG game=<id> character=<id>
//! #TRIAL hold=<k>
//! F <frame_number> <buttons-hex> <tile>,<x>,<y>,<pal>,<hf>,<vf>,<bg>,<h> ...
//! ```
//!
//! Coordinates are raw screen coordinates (y grows downwards). Sprites parked
//! at `y >= 240` are off screen and dropped while parsing.

use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use thiserror::Error;

/// Hardware limit of the sprite table.
pub const MAX_SPRITES: usize = 64;
/// First off-screen scanline; sprites at or below it are invisible.
pub const OFFSCREEN_Y: u8 = 240;
/// All sprites are 8 pixels wide.
pub const SPRITE_WIDTH: u8 = 8;

#[derive(Debug, Error)]
pub enum FrameLogError {
    #[error("empty frame log")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid log: {message}")]
    Validation { line: usize, message: String },
    #[error("frame log is not valid UTF-8")]
    Utf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the eight NES controller buttons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Button {
    A,
    B,
    Select,
    Start,
    Up,
    Down,
    Left,
    Right,
}

impl Button {
    pub const ALL: [Button; 8] = [
        Button::A,
        Button::B,
        Button::Select,
        Button::Start,
        Button::Up,
        Button::Down,
        Button::Left,
        Button::Right,
    ];

    /// Bit in the controller shift register (bit0 = A ... bit7 = Right).
    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Button::A => "A",
            Button::B => "B",
            Button::Select => "Select",
            Button::Start => "Start",
            Button::Up => "Up",
            Button::Down => "Down",
            Button::Left => "Left",
            Button::Right => "Right",
        }
    }
}

impl FromStr for Button {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Button::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown button {s:?}"))
    }
}

impl fmt::Display for Button {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of pressed buttons, stored as the controller bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Buttons(pub u8);

impl Buttons {
    pub const NONE: Buttons = Buttons(0);

    pub fn only(button: Button) -> Self {
        Buttons(button.bit())
    }

    pub fn contains(self, button: Button) -> bool {
        self.0 & button.bit() != 0
    }

    pub fn with(self, button: Button) -> Self {
        Buttons(self.0 | button.bit())
    }

    pub fn pressed(self) -> impl Iterator<Item = Button> {
        Button::ALL.into_iter().filter(move |b| self.contains(*b))
    }
}

/// One sprite-table entry as seen on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpriteEntry {
    pub tile: u8,
    pub x: u8,
    pub y: u8,
    pub palette: u8,
    pub h_flip: bool,
    pub v_flip: bool,
    pub background: bool,
    /// 8 or 16 (8x16 sprite mode).
    pub height: u8,
}

impl SpriteEntry {
    pub fn width(&self) -> u8 {
        SPRITE_WIDTH
    }

    pub fn key(&self) -> SpriteKey {
        SpriteKey {
            tile: self.tile,
            palette: self.palette,
            h_flip: self.h_flip,
            v_flip: self.v_flip,
            background: self.background,
        }
    }
}

/// Identity of a logical sprite for co-occurrence statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpriteKey {
    pub tile: u8,
    pub palette: u8,
    pub h_flip: bool,
    pub v_flip: bool,
    pub background: bool,
}

impl fmt::Display for SpriteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tile={:#04x}/pal={}/hf={}/vf={}/bg={}",
            self.tile, self.palette, self.h_flip as u8, self.v_flip as u8, self.background as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub frame_number: u64,
    pub sprites: Vec<SpriteEntry>,
    pub buttons: Buttons,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub hold_frames: u32,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentLog {
    pub game_id: String,
    pub character_id: String,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentLog {
    pub fn frame_count(&self) -> usize {
        self.trials.iter().map(|t| t.frames.len()).sum()
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.trials.iter().flat_map(|t| t.frames.iter())
    }

    /// Checks the structural invariants that `write_log` relies on.
    pub fn validate(&self) -> Result<(), FrameLogError> {
        let bad = |message: String| FrameLogError::Validation { line: 0, message };
        for id in [&self.game_id, &self.character_id] {
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(bad(format!("identifier {id:?} must be non-empty without spaces")));
            }
        }
        let mut last_hold = None;
        let mut last_frame = None;
        for trial in &self.trials {
            if trial.hold_frames == 0 {
                return Err(bad("hold must be at least 1".into()));
            }
            if last_hold.is_some_and(|h| trial.hold_frames <= h) {
                return Err(bad(format!("trial hold {} out of order", trial.hold_frames)));
            }
            last_hold = Some(trial.hold_frames);
            for frame in &trial.frames {
                if last_frame.is_some_and(|n| frame.frame_number <= n) {
                    return Err(bad(format!("frame {} out of order", frame.frame_number)));
                }
                last_frame = Some(frame.frame_number);
                if frame.sprites.len() > MAX_SPRITES {
                    return Err(bad(format!("frame {} has {} sprites", frame.frame_number, frame.sprites.len())));
                }
                for s in &frame.sprites {
                    if s.y >= OFFSCREEN_Y || s.palette > 3 || !(s.height == 8 || s.height == 16) {
                        return Err(bad(format!("frame {} has invalid sprite {s:?}", frame.frame_number)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads and parses a whole log from a byte stream.
pub fn read_log<R: Read>(mut reader: R) -> Result<ExperimentLog, FrameLogError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_log(&bytes)
}

pub fn parse_log(input: &[u8]) -> Result<ExperimentLog, FrameLogError> {
    let text = std::str::from_utf8(input).map_err(|_| FrameLogError::Utf8)?;
    if text.trim().is_empty() {
        return Err(FrameLogError::Empty);
    }

    let mut log: Option<ExperimentLog> = None;
    let mut last_frame: Option<u64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let perr = |message: String| FrameLogError::Parse { line, message };
        let verr = |message: String| FrameLogError::Validation { line, message };

        let mut words = trimmed.split_whitespace();
        let tag = words.next().unwrap_or_default();
        match (tag, log.as_mut()) {
            ("#LOG", None) => {
                let fields = parse_fields(words, line)?;
                let get = |k: &str| {
                    fields
                        .iter()
                        .find(|(key, _)| *key == k)
                        .map(|(_, v)| v.to_string())
                        .ok_or_else(|| perr(format!("#LOG missing `{k}`")))
                };
                log = Some(ExperimentLog {
                    game_id: get("game")?,
                    character_id: get("character")?,
                    trials: Vec::new(),
                });
            }
            ("#LOG", Some(_)) => return Err(perr("duplicate #LOG header".into())),
            (_, None) => return Err(perr("log must start with a #LOG header".into())),
            ("#TRIAL", Some(log)) => {
                let fields = parse_fields(words, line)?;
                let hold = fields
                    .iter()
                    .find(|(k, _)| *k == "hold")
                    .ok_or_else(|| perr("#TRIAL missing `hold`".into()))?
                    .1;
                let hold: u32 = hold.parse().map_err(|_| perr(format!("bad hold {hold:?}")))?;
                if hold == 0 {
                    return Err(verr("hold must be at least 1".into()));
                }
                if let Some(prev) = log.trials.last() {
                    if hold <= prev.hold_frames {
                        return Err(verr(format!(
                            "trial hold {hold} does not follow {}",
                            prev.hold_frames
                        )));
                    }
                }
                log.trials.push(TrialRecord {
                    hold_frames: hold,
                    frames: Vec::new(),
                });
            }
            ("F", Some(log)) => {
                let Some(trial) = log.trials.last_mut() else {
                    return Err(perr("frame before any #TRIAL".into()));
                };
                let frame_number: u64 = words
                    .next()
                    .ok_or_else(|| perr("missing frame number".into()))?
                    .parse()
                    .map_err(|_| perr("bad frame number".into()))?;
                let buttons = words.next().ok_or_else(|| perr("missing buttons".into()))?;
                let buttons = u8::from_str_radix(buttons, 16)
                    .map_err(|_| perr(format!("bad buttons bitmask {buttons:?}")))?;
                if last_frame.is_some_and(|n| frame_number <= n) {
                    return Err(verr(format!("frame number {frame_number} does not increase")));
                }
                last_frame = Some(frame_number);

                let mut sprites = Vec::new();
                let mut raw_count = 0;
                for tuple in words {
                    raw_count += 1;
                    let sprite = parse_sprite(tuple).map_err(perr)?;
                    if sprite.y < OFFSCREEN_Y {
                        sprites.push(sprite);
                    }
                }
                if raw_count > MAX_SPRITES {
                    return Err(verr(format!("{raw_count} sprites exceed the {MAX_SPRITES}-entry table")));
                }
                trial.frames.push(Frame {
                    frame_number,
                    sprites,
                    buttons: Buttons(buttons),
                });
            }
            (other, Some(_)) => return Err(perr(format!("unknown record {other:?}"))),
        }
    }

    log.ok_or(FrameLogError::Empty)
}

fn parse_fields<'a>(
    words: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec<(&'a str, &'a str)>, FrameLogError> {
    words
        .map(|w| {
            w.split_once('=').ok_or_else(|| FrameLogError::Parse {
                line,
                message: format!("expected key=value, got {w:?}"),
            })
        })
        .collect()
}

fn parse_sprite(tuple: &str) -> Result<SpriteEntry, String> {
    let parts: Vec<&str> = tuple.split(',').collect();
    if parts.len() != 8 {
        return Err(format!("sprite tuple {tuple:?} needs 8 fields"));
    }
    let num = |i: usize, max: u8| -> Result<u8, String> {
        parts[i]
            .parse::<u8>()
            .ok()
            .filter(|v| *v <= max)
            .ok_or_else(|| format!("sprite tuple {tuple:?}: field {} out of range", i + 1))
    };
    let flag = |i: usize| num(i, 1).map(|v| v == 1);
    let height = num(7, 16)?;
    if height != 8 && height != 16 {
        return Err(format!("sprite tuple {tuple:?}: height must be 8 or 16"));
    }
    Ok(SpriteEntry {
        tile: num(0, 255)?,
        x: num(1, 255)?,
        y: num(2, 255)?,
        palette: num(3, 3)?,
        h_flip: flag(4)?,
        v_flip: flag(5)?,
        background: flag(6)?,
        height,
    })
}

pub fn write_log(log: &ExperimentLog) -> Vec<u8> {
    write_log_with_header(log, &[])
}

/// Writes the log, appending extra `key=value` provenance fields to the
/// `#LOG` line. Readers ignore fields they do not know.
pub fn write_log_with_header(log: &ExperimentLog, extra: &[(&str, &str)]) -> Vec<u8> {
    let mut out = String::new();
    write!(out, "#LOG game={} character={}", log.game_id, log.character_id).unwrap();
    for (k, v) in extra {
        write!(out, " {k}={v}").unwrap();
    }
    out.push('\n');
    for trial in &log.trials {
        writeln!(out, "#TRIAL hold={}", trial.hold_frames).unwrap();
        for frame in &trial.frames {
            write!(out, "F {} {:02x}", frame.frame_number, frame.buttons.0).unwrap();
            for s in &frame.sprites {
                write!(
                    out,
                    " {},{},{},{},{},{},{},{}",
                    s.tile,
                    s.x,
                    s.y,
                    s.palette,
                    s.h_flip as u8,
                    s.v_flip as u8,
                    s.background as u8,
                    s.height
                )
                .unwrap();
            }
            out.push('\n');
        }
    }
    out.into_bytes()
}
