//! Independent oracles and helpers shared by the integration tests. Nothing
//! here calls the library code it checks.

#![allow(dead_code)]

use jumpinfer::automaton::ModeParams;
use jumpinfer::fit::JumpModel;
use jumpinfer::harness::SyntheticGameSpec;

/// Best total weight over assignments of every row to a distinct present
/// column, by exhaustive search. `None` when no complete assignment exists.
pub fn brute_force_best(weights: &[Vec<Option<f64>>]) -> Option<f64> {
    fn go(weights: &[Vec<Option<f64>>], row: usize, used: &mut Vec<bool>) -> Option<f64> {
        if row == weights.len() {
            return Some(0.0);
        }
        let mut best: Option<f64> = None;
        for (col, w) in weights[row].iter().enumerate() {
            let Some(w) = *w else { continue };
            if used[col] {
                continue;
            }
            used[col] = true;
            if let Some(rest) = go(weights, row + 1, used) {
                let total = w + rest;
                if best.is_none_or(|b| total > b) {
                    best = Some(total);
                }
            }
            used[col] = false;
        }
        best
    }
    let cols = weights.first().map_or(0, Vec::len);
    go(weights, 0, &mut vec![false; cols])
}

/// Total weight of a given assignment; `None` if it reuses a column or takes
/// a missing edge.
pub fn assignment_weight(weights: &[Vec<Option<f64>>], cols: &[usize]) -> Option<f64> {
    let mut seen = std::collections::HashSet::new();
    let mut total = 0.0;
    for (row, &col) in cols.iter().enumerate() {
        if !seen.insert(col) {
            return None;
        }
        total += weights[row].get(col).copied().flatten()?;
    }
    Some(total)
}

/// Characteristic polynomial coefficients, lowest degree first, with a
/// leading 1, computed by the Faddeev-LeVerrier recurrence.
pub fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| a[i][l] * m[l][j]).sum::<f64>();
            }
            next[i][i] += coeffs[n - k + 1];
        }
        m = next;
        let trace: f64 = (0..n).map(|i| (0..n).map(|l| a[i][l] * m[l][i]).sum::<f64>()).sum();
        coeffs[n - k] = -trace / k as f64;
    }
    coeffs
}

fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect()
}

fn bisect(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = eval(coeffs, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = eval(coeffs, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of a polynomial known to have only real roots, ascending. Roots
/// of the derivative split the line into monotone pieces, each holding at
/// most one root; roots that touch without crossing are taken from the
/// critical points.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }
    let lead = coeffs[degree];
    let bound = 1.0 + coeffs[..degree].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    let critical = real_roots(&derivative(coeffs));
    let mut cuts = vec![-bound];
    cuts.extend(critical.iter().copied());
    cuts.push(bound);
    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (eval(coeffs, a), eval(coeffs, b));
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(bisect(coeffs, a, b));
        }
    }
    if eval(coeffs, bound) == 0.0 {
        roots.push(bound);
    }
    // Even-multiplicity roots sit on critical points without a sign change.
    let mut touching: Vec<f64> = critical.clone();
    touching.sort_by(|x, y| eval(coeffs, *x).abs().total_cmp(&eval(coeffs, *y).abs()));
    for c in touching {
        if roots.len() >= degree {
            break;
        }
        roots.push(c);
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Variance fractions of the sample covariance of `rows`, largest first,
/// one per column. Uses whichever of the covariance or the Gram matrix is
/// smaller, so the polynomial has at most one zero root.
pub fn variance_fractions_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let c: Vec<Vec<f64>> = rows.iter().map(|r| (0..d).map(|j| r[j] - means[j]).collect()).collect();
    let scale = 1.0 / (n as f64 - 1.0);
    let matrix: Vec<Vec<f64>> = if d < n {
        (0..d)
            .map(|i| (0..d).map(|j| scale * (0..n).map(|k| c[k][i] * c[k][j]).sum::<f64>()).collect())
            .collect()
    } else {
        (0..n)
            .map(|i| (0..n).map(|j| scale * (0..d).map(|k| c[i][k] * c[j][k]).sum::<f64>()).collect())
            .collect()
    };
    let mut eig: Vec<f64> = real_roots(&char_poly(&matrix)).into_iter().map(|e| e.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.resize(d, 0.0);
    let total: f64 = eig.iter().sum();
    eig.iter().map(|e| e / total).collect()
}

/// `|found - truth| <= max(rel * |truth|, abs)`.
pub fn within(found: f64, truth: f64, rel: f64, abs: f64) -> bool {
    (found - truth).abs() <= (rel * truth.abs()).max(abs)
}

fn params_within(found: &ModeParams, truth: &ModeParams, pinned_multiplier: bool) -> Result<(), String> {
    let mut errs = Vec::new();
    if !within(found.gravity, truth.gravity, 0.02, 0.01) {
        errs.push(format!("gravity {} vs {}", found.gravity, truth.gravity));
    }
    if !within(found.reset, truth.reset, 0.02, 0.05) {
        errs.push(format!("reset {} vs {}", found.reset, truth.reset));
    }
    if pinned_multiplier && found.multiplier != truth.multiplier {
        errs.push(format!("multiplier {} vs {}", found.multiplier, truth.multiplier));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.join(", "))
    }
}

/// Checks a fitted model against the generator: holds and control exactly,
/// gravities within max(2%, 0.01) and resets within max(2%, 0.05).
pub fn check_recovery(model: &JumpModel, spec: &SyntheticGameSpec) -> Result<(), String> {
    let truth = &spec.automaton;
    let mut errs = Vec::new();
    if model.min_hold != truth.min_hold || model.max_hold != truth.max_hold {
        errs.push(format!(
            "holds {}..{} vs {}..{}",
            model.min_hold, model.max_hold, truth.min_hold, truth.max_hold
        ));
    }
    if model.has_control != truth.up_control.is_some() {
        errs.push(format!("has_control {}", model.has_control));
    }
    let mut mode = |name: &str, found: Option<&ModeParams>, want: Option<&ModeParams>, pinned: bool| {
        match (found, want) {
            (Some(f), Some(w)) => {
                if let Err(e) = params_within(f, w, pinned) {
                    errs.push(format!("{name}: {e}"));
                }
            }
            (None, None) => {}
            _ => errs.push(format!("{name}: presence differs")),
        }
    };
    // A mode entered from rest has its multiplier pinned to zero.
    mode("up_control", model.up_control.as_ref(), truth.up_control.as_ref(), true);
    mode("up_fixed", Some(&model.up_fixed), Some(&truth.up_fixed), !truth.has_control());
    mode("down", Some(&model.down), Some(&truth.down), false);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.join("; "))
    }
}

/// Built-ins whose parameters must be recovered.
pub const RECOVERY_GAMES: [&str; 6] = ["mario", "luigi", "metroid", "megaman", "castlevania", "ninja"];
/// Built-ins exercising landing and plateau quirks.
pub const PRAGMATIC_GAMES: [&str; 3] = ["stair_step", "landing_clip", "ground_hover"];

pub mod strategies {
    use jumpinfer::automaton::ModeParams;
    use jumpinfer::fit::{JumpModel, ResidualStats};
    use jumpinfer::framelog::{Buttons, ExperimentLog, Frame, SpriteEntry, TrialRecord};
    use proptest::prelude::*;

    pub fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e3..1e3f64,
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            Just(0.0),
            Just(-0.0),
        ]
    }

    fn params() -> impl Strategy<Value = ModeParams> {
        (finite(), finite(), finite()).prop_map(|(g, r, m)| ModeParams::new(g, r, m))
    }

    pub fn model() -> impl Strategy<Value = JumpModel> {
        (
            "[A-Za-z0-9][A-Za-z0-9 _.=#-]{0,14}[A-Za-z0-9]",
            "[A-Za-z0-9][A-Za-z0-9_-]{0,10}",
            proptest::option::of(1970u32..2030),
            1u32..60,
            0u32..60,
            params(),
            params(),
            params(),
            (0.0..10.0f64, 0.0..100.0f64),
        )
            .prop_map(|(game, character, year, min, extra, control, rise, fall, (mean, max))| {
                let has_control = extra > 0;
                JumpModel {
                    game,
                    character,
                    year,
                    up_control: has_control.then_some(control),
                    up_fixed: rise,
                    down: fall,
                    min_hold: min,
                    max_hold: min + extra,
                    has_control,
                    residual: ResidualStats {
                        mean_abs: mean,
                        max_abs: max,
                    },
                }
            })
    }

    fn sprite() -> impl Strategy<Value = SpriteEntry> {
        (any::<u8>(), any::<u8>(), 0u8..240, 0u8..4, any::<[bool; 3]>(), any::<bool>()).prop_map(
            |(tile, x, y, palette, [h_flip, v_flip, background], tall)| SpriteEntry {
                tile,
                x,
                y,
                palette,
                h_flip,
                v_flip,
                background,
                height: if tall { 16 } else { 8 },
            },
        )
    }

    fn frame_body() -> impl Strategy<Value = (u64, u8, Vec<SpriteEntry>)> {
        (1u64..4, any::<u8>(), proptest::collection::vec(sprite(), 0..=64))
    }

    /// Valid logs: increasing holds and frame numbers, at most 64 on-screen
    /// sprites per frame.
    pub fn log() -> impl Strategy<Value = ExperimentLog> {
        (
            "[A-Za-z0-9_.-]{1,12}",
            "[A-Za-z0-9_.-]{1,12}",
            proptest::collection::vec(
                (1u32..4, proptest::collection::vec(frame_body(), 0..6)),
                0..5,
            ),
        )
            .prop_map(|(game_id, character_id, trials)| {
                let mut hold = 0;
                let mut frame_number = 0;
                let trials = trials
                    .into_iter()
                    .map(|(step, frames)| {
                        hold += step;
                        TrialRecord {
                            hold_frames: hold,
                            frames: frames
                                .into_iter()
                                .map(|(gap, buttons, sprites)| {
                                    frame_number += gap;
                                    Frame {
                                        frame_number,
                                        sprites,
                                        buttons: Buttons(buttons),
                                    }
                                })
                                .collect(),
                        }
                    })
                    .collect();
                ExperimentLog {
                    game_id,
                    character_id,
                    trials,
                }
            })
    }
}
