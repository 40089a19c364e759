//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without a test harness so the lines are always printed.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use jumpinfer::analysis::{featurize, kmeans_scan, pca, report, synthetic_corpus, AnalysisConfig, CORPUS_GROUPS};
use jumpinfer::automaton::Mode;
use jumpinfer::fit::{export_model, import_model};
use jumpinfer::framelog::{parse_log, write_log, Button, ExperimentLog, SpriteEntry};
use jumpinfer::harness::{Archetype, SyntheticGameSpec};
use jumpinfer::pipeline::{extract, fit_extraction, infer, run_synthetic, PipelineConfig};
use jumpinfer::spritemerge::{
    accumulate_stats, build_merge_map, npmi_from, MergedSprite, DEFAULT_NPMI_THRESHOLD,
};
use jumpinfer::tracker::{assign, likelihood, max_weight_assignment, Assignment, Track, Tracker, TrackerConfig};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{assignment_weight, brute_force_best, check_recovery, variance_fractions_oracle};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn builtin(name: &str) -> SyntheticGameSpec {
    SyntheticGameSpec::builtin(name).unwrap_or_else(|| panic!("missing built-in {name}"))
}

fn log_for(name: &str) -> ExperimentLog {
    run_synthetic(&builtin(name), &PipelineConfig::default()).expect("synthetic run")
}

fn round_trip_recovery() -> Outcome {
    const BUDGET: Duration = Duration::from_secs(30);
    let config = PipelineConfig::default();
    let mut per_archetype: BTreeMap<&str, usize> = BTreeMap::new();
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    for name in common::RECOVERY_GAMES {
        let spec = builtin(name);
        *per_archetype.entry(spec.archetype.name()).or_default() += 1;
        let start = Instant::now();
        let result = run_synthetic(&spec, &config).and_then(|log| infer(&log, &config));
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        match result {
            Ok(model) => {
                if let Err(e) = check_recovery(&model, &spec) {
                    failures.push(format!("{name}: {e}"));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
        if elapsed > BUDGET {
            failures.push(format!("{name}: took {elapsed:?}"));
        }
    }
    for arch in [Archetype::ParabolicControlled, Archetype::VelocityCut, Archetype::Fixed] {
        let n = per_archetype.get(arch.name()).copied().unwrap_or(0);
        if n < 2 {
            failures.push(format!("{} has {n} parameterizations", arch.name()));
        }
    }
    let metroid = builtin("metroid").automaton;
    let mario = builtin("mario").automaton;
    if metroid.up_fixed.gravity != metroid.down.gravity || metroid.up_fixed.reset != metroid.down.reset {
        failures.push("metroid parameterization is not up/down symmetric".into());
    }
    if mario.up_fixed.gravity == mario.down.gravity {
        failures.push("mario parameterization is not asymmetric".into());
    }
    if failures.is_empty() {
        Ok(format!(
            "{} games recovered, slowest {:.2} s",
            common::RECOVERY_GAMES.len(),
            slowest.as_secs_f64()
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn protocol_fidelity() -> Outcome {
    let config = PipelineConfig::default();
    ensure(
        config.protocol.k_start == 1 && config.protocol.wait_frames == 120 && config.protocol.trial_count == 120,
        || format!("default protocol is {:?}", config.protocol),
    )?;
    let log = log_for("mario");
    ensure(log.trials.len() == 120, || format!("{} trials", log.trials.len()))?;
    for (i, trial) in log.trials.iter().enumerate() {
        let k = i as u32 + 1;
        ensure(trial.hold_frames == k, || format!("trial {i} holds {}", trial.hold_frames))?;
        let pressed = trial.frames.iter().filter(|f| f.buttons.contains(Button::A)).count();
        let held_prefix = trial.frames.iter().take(k as usize).all(|f| f.buttons.contains(Button::A));
        ensure(pressed == k as usize && held_prefix, || format!("trial {k}: button pattern"))?;
        let wait = trial.frames.len() - k as usize;
        ensure(wait >= 120, || format!("trial {k}: {wait} wait frames"))?;
    }
    Ok("120 trials, holds 1..120, 120 wait frames each".into())
}

fn sprite_sequence(log: &ExperimentLog, index: usize) -> Vec<&Vec<SpriteEntry>> {
    log.trials[index].frames.iter().map(|f| &f.sprites).collect()
}

fn metroid_hold_bound() -> Outcome {
    let spec = builtin("metroid");
    ensure(
        spec.archetype == Archetype::VelocityCut && spec.automaton.min_hold == 10,
        || "metroid is not a velocity-cut game with min hold 10".into(),
    )?;
    let log = log_for("metroid");
    let first = sprite_sequence(&log, 0);
    for i in 1..10 {
        ensure(sprite_sequence(&log, i)[..first.len()] == first[..], || {
            format!("trial {} differs from trial 1", i + 1)
        })?;
    }
    let eleventh = sprite_sequence(&log, 10);
    ensure(eleventh[..first.len()] != first[..], || "trial 11 matches trial 1".into())?;
    Ok("trials 1-10 identical, trial 11 differs".into())
}

fn merging() -> Outcome {
    let spec = builtin("mario");
    ensure(spec.layout.count() == 8 && spec.decorations >= 3, || {
        "fixture needs 8 sub-sprites and 3 decorations".into()
    })?;
    ensure(DEFAULT_NPMI_THRESHOLD == 0.1, || "default threshold is not 0.1".into())?;
    let log = log_for("mario");
    let stats = accumulate_stats(&log).map_err(|e| e.to_string())?;
    let map = build_merge_map(&stats, 0.1).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = map.groups().iter().map(Vec::len).collect();
    ensure(
        sizes.iter().filter(|&&n| n == 8).count() == 1 && sizes.iter().filter(|&&n| n > 1).count() == 1,
        || format!("group sizes {sizes:?}"),
    )?;
    let anchors = [
        (npmi_from(0.5, 0.5, 0.5), 1.0),
        (npmi_from(0.5, 0.5, 0.25), 0.0),
        (npmi_from(0.5, 0.5, 0.0), -1.0),
        (npmi_from(0.2, 0.2, 0.2), 1.0),
        (npmi_from(0.25, 0.5, 0.125), 0.0),
    ];
    for (got, want) in anchors {
        ensure(got == Ok(want), || format!("npmi anchor {want} gave {got:?}"))?;
    }
    Ok(format!("one 8-member group among {} groups; npmi anchors exact", sizes.len()))
}

fn detection(x: i32, y: i32) -> MergedSprite {
    MergedSprite {
        group: 0,
        bbox: (x - 8, y - 16, x + 8, y),
        anchor_x: x,
        anchor_y: y,
    }
}

fn tracks_with_gap(gap: usize) -> usize {
    let mut tracker = Tracker::new(TrackerConfig::default());
    let total = 10 + gap;
    for frame in 0..total {
        let visible = !(3..3 + gap).contains(&frame);
        let dets: Vec<MergedSprite> = if visible {
            vec![detection(40 + 2 * frame as i32, 100)]
        } else {
            Vec::new()
        };
        tracker.step(frame as u64, &dets);
    }
    tracker.finish().len()
}

/// Same edge structure as the tracker builds: every track column for every
/// detection, plus a private initiation column per detection.
fn tracker_weights(track_rows: &[Vec<f64>], init: f64) -> Vec<Vec<Option<f64>>> {
    let n = track_rows.len();
    track_rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r: Vec<Option<f64>> = row.iter().map(|&w| Some(w)).collect();
            r.extend((0..n).map(|j| (i == j).then_some(init)));
            r
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

fn tracking() -> Outcome {
    for gap in 1..=4 {
        ensure(tracks_with_gap(gap) == 1, || format!("{gap}-frame gap split the track"))?;
    }
    ensure(tracks_with_gap(5) == 2, || "5-frame gap kept one track".into())?;

    // Every instance with at most six nodes over a palette of distances.
    let config = TrackerConfig::default();
    let levels: Vec<f64> = [0.0, 15.0, 35.0, 60.0].iter().map(|&d| likelihood(&config, d)).collect();
    let init = likelihood(&config, config.initiation_distance);
    let mut exhaustive = 0usize;
    for tracks in 0..=5usize {
        for dets in 1..=(6 - tracks) {
            let edges = tracks * dets;
            for code in 0..levels.len().pow(edges as u32) {
                let mut c = code;
                let rows: Vec<Vec<f64>> = (0..dets)
                    .map(|_| {
                        (0..tracks)
                            .map(|_| {
                                let w = levels[c % levels.len()];
                                c /= levels.len();
                                w
                            })
                            .collect()
                    })
                    .collect();
                let weights = tracker_weights(&rows, init);
                let got = assignment_weight(&weights, &max_weight_assignment(&weights));
                let best = brute_force_best(&weights).expect("initiation columns make it feasible");
                ensure(got.is_some_and(|g| close(g, best)), || {
                    format!("{tracks} tracks x {dets} detections: {got:?} vs {best}")
                })?;
                exhaustive += 1;
            }
        }
    }

    // The tracker's own assignment on random positions with at most six nodes.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random = 20_000;
    for _ in 0..random {
        let m = rng.gen_range(0..=5usize);
        let n = rng.gen_range(1..=6 - m);
        let mut pos = || (rng.gen_range(0..80), rng.gen_range(0..80));
        let tracks: Vec<Track> = (0..m)
            .map(|id| {
                let p = pos();
                Track {
                    track_id: id as u32,
                    group: 0,
                    points: BTreeMap::from([(0, p)]),
                    last_update: 0,
                    coasting_for: 0,
                }
            })
            .collect();
        let dets: Vec<MergedSprite> = (0..n)
            .map(|_| {
                let (x, y) = pos();
                detection(x, y)
            })
            .collect();
        let rows: Vec<Vec<f64>> = dets
            .iter()
            .map(|d| {
                tracks
                    .iter()
                    .map(|t| {
                        let (x, y) = t.last_point();
                        likelihood(&config, f64::hypot((d.anchor_x - x) as f64, (d.anchor_y - y) as f64))
                    })
                    .collect()
            })
            .collect();
        let weights = tracker_weights(&rows, init);
        let cols: Vec<usize> = assign(&config, &tracks, &dets)
            .into_iter()
            .enumerate()
            .map(|(i, a)| match a {
                Assignment::Track(id) => id as usize,
                Assignment::New => m + i,
            })
            .collect();
        let got = assignment_weight(&weights, &cols);
        let best = brute_force_best(&weights).expect("feasible");
        ensure(got.is_some_and(|g| close(g, best)), || {
            format!("tracker chose {cols:?} worth {got:?}, optimum {best}")
        })?;
    }
    Ok(format!(
        "gaps 1-4 coast, 5 splits; {exhaustive} exhaustive and {random} positional instances match brute force"
    ))
}

fn segmentation_pragmatics() -> Outcome {
    let config = PipelineConfig::default();
    let mut details = Vec::new();
    for name in common::PRAGMATIC_GAMES {
        let spec = builtin(name);
        let log = log_for(name);
        let ex = extract(&log, &config).map_err(|e| format!("{name}: {e}"))?;
        let diags: Vec<_> = ex.segmentations.iter().map(|s| s.diagnostics).collect();
        match spec.archetype {
            Archetype::StairStep => {
                ensure(diags.iter().all(|d| d.apex_plateau_len() >= 2), || {
                    format!("{name}: a plateau shorter than a stair step")
                })?;
                for seg in &ex.segmentations {
                    let down = seg.find(Mode::Down).ok_or_else(|| format!("{name}: no down segment"))?;
                    ensure(down.start == seg.diagnostics.apex_last + 1, || {
                        format!("{name}: down starts at {} inside the plateau", down.start)
                    })?;
                }
            }
            Archetype::LandingClip => {
                let clamped: usize = diags.iter().map(|d| d.clamped_frames).sum();
                ensure(clamped > 0, || format!("{name}: ground clamp never fired"))?;
            }
            Archetype::GroundHover => {
                ensure(diags.iter().any(|d| d.landing_height == Some(1)), || {
                    format!("{name}: no landing one pixel high")
                })?;
            }
            other => return Err(format!("{name}: unexpected archetype {other}")),
        }
        let (_, model) = fit_extraction(&ex, &log.game_id, &log.character_id, &config)
            .map_err(|e| format!("{name}: {e}"))?;
        let mean = model.residual.mean_abs;
        if spec.archetype.is_physical() {
            ensure(mean <= 1.5, || format!("{name}: mean residual {mean}"))?;
        }
        details.push(format!("{name} residual mean {mean:.3} max {}", model.residual.max_abs));
    }
    Ok(details.join(", "))
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rows = rng.gen_range(2..=6);
    let cols = rng.gen_range(1..=6);
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect()
}

fn pca_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = 2000;
    for case in 0..cases {
        let rows = random_matrix(&mut rng);
        let result = pca(&rows).map_err(|e| format!("case {case}: {e}"))?;
        let f = &result.variance_fractions;
        let sum: f64 = f.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || format!("case {case}: fractions sum {sum}"))?;
        ensure(f.windows(2).all(|w| w[0] >= w[1]), || format!("case {case}: fractions increase"))?;
        let oracle = variance_fractions_oracle(&rows);
        for (a, b) in f.iter().zip(&oracle) {
            ensure((a - b).abs() <= 1e-6, || format!("case {case}: {f:?} vs oracle {oracle:?}"))?;
        }
        for c in &result.contributions {
            let total: f64 = c.iter().sum();
            ensure((total - 100.0).abs() <= 1e-6, || format!("case {case}: contributions sum {total}"))?;
        }
    }
    let corpus = synthetic_corpus(AnalysisConfig::default().seed);
    let models: Vec<_> = corpus.iter().map(|(m, _)| m.clone()).collect();
    ensure(models.len() == 52, || format!("corpus has {} rows", models.len()))?;
    let matrix = featurize(&models).map_err(|e| e.to_string())?;
    let result = pca(&matrix.standardized).map_err(|e| e.to_string())?;
    let needed = result.components_for(0.75);
    ensure(needed <= 5, || format!("corpus needs {needed} components for 75%"))?;
    Ok(format!(
        "{cases} random matrices match the characteristic-polynomial oracle; corpus reaches 75% with {needed} components ({:.1}%)",
        100.0 * result.cumulative()[needed - 1]
    ))
}

/// Best agreement over every relabeling of three clusters.
fn agreement3(found: &[usize], truth: &[usize]) -> f64 {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|p| found.iter().zip(truth).filter(|(f, t)| p[**f] == **t).count())
        .max()
        .unwrap_or(0) as f64
        / truth.len() as f64
}

fn kmeans_criterion() -> Outcome {
    let config = AnalysisConfig::default();
    let corpus = synthetic_corpus(config.seed);
    let models: Vec<_> = corpus.iter().map(|(m, _)| m.clone()).collect();
    let labels: Vec<usize> = corpus.iter().map(|(_, g)| *g).collect();
    let matrix = featurize(&models).map_err(|e| e.to_string())?;
    let result = kmeans_scan(&matrix.standardized, &config).map_err(|e| e.to_string())?;
    let ks: Vec<usize> = result.scan.iter().map(|s| s.0).collect();
    ensure(ks == (2..=15).collect::<Vec<_>>(), || format!("scanned {ks:?}"))?;
    ensure(result.scan.windows(2).all(|w| w[1].1 <= w[0].1), || {
        format!("wcss scan increases: {:?}", result.scan)
    })?;
    ensure(result.chosen.k == 3, || format!("elbow chose k={}", result.chosen.k))?;
    let agreement = agreement3(&result.chosen.assignments, &labels);
    ensure(agreement >= 0.9, || format!("agreement {agreement}"))?;

    // A 21/3/28 split must be expressible in the report.
    let mut split = result.clone();
    split.chosen.assignments = (0..52).map(|i| if i < 21 { 0 } else if i < 24 { 1 } else { 2 }).collect();
    let pca_result = pca(&matrix.standardized).map_err(|e| e.to_string())?;
    let files = report("schema", &matrix, &pca_result, &split, &models);
    let sizes = files
        .iter()
        .find(|(n, _)| n == "cluster_sizes.csv")
        .map(|(_, t)| t.clone())
        .ok_or("no cluster_sizes.csv")?;
    let body: Vec<&str> = sizes.lines().filter(|l| !l.starts_with('#')).collect();
    ensure(body == ["cluster,size", "0,21", "1,3", "2,28"], || format!("sizes table {body:?}"))?;
    let group_sizes: Vec<usize> = CORPUS_GROUPS.iter().map(|g| g.1).collect();
    Ok(format!(
        "wcss non-increasing over 2..15, k=3, agreement {:.1}% on groups {group_sizes:?}; 21/3/28 representable",
        100.0 * agreement
    ))
}

fn format_round_trips() -> Outcome {
    let cases = 1000;
    let mut runner = TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&common::strategies::log(), |log| {
            let bytes = write_log(&log);
            let back = parse_log(&bytes).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(&back, &log);
            proptest::prop_assert_eq!(write_log(&back), bytes);
            Ok(())
        })
        .map_err(|e| format!("frame log: {e}"))?;
    let mut runner = TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&common::strategies::model(), |model| {
            let text = export_model(&model);
            let back = import_model(&text).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(&back, &model);
            proptest::prop_assert_eq!(export_model(&back), text);
            Ok(())
        })
        .map_err(|e| format!("model file: {e}"))?;
    Ok(format!("{cases} frame logs and {cases} model files round-trip"))
}

fn jumpinfer(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_jumpinfer"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn snapshot(dir: &Path, into: &mut BTreeMap<String, Vec<u8>>, prefix: &str) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let name = format!("{prefix}{}", path.file_name().unwrap().to_string_lossy());
        if path.is_dir() {
            snapshot(&path, into, &format!("{name}/"));
        } else {
            into.insert(name, fs::read(&path).unwrap());
        }
    }
}

/// Every subcommand, with a config file and global flags.
fn cli_session(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::write(dir.join("tuned.conf"), "tracker.sigma = 7.5\nanalysis.restarts = 8\n").map_err(|e| e.to_string())?;
    let steps: &[&[&str]] = &[
        &["template", "mario", "--out", "mario.spec"],
        &["template", "--list"],
        &["config", "--config", "tuned.conf", "--seed", "3", "--out", "effective.conf"],
        &["run", "--synthetic", "mario.spec", "--out", "mario.log"],
        &["run", "--builtin", "castlevania", "--out", "castlevania.log", "--config", "tuned.conf"],
        &["run", "--log", "mario.log", "--out", "mario.copy.log"],
        &[
            "extract",
            "--log",
            "mario.log",
            "--out",
            "segments.csv",
            "--dump-groups",
            "groups.txt",
            "--dump-tracks",
            "tracks.csv",
        ],
        &["fit", "--log", "mario.log", "--out", "mario.model"],
        &["fit", "--log", "mario.log,castlevania.log", "--out", "models", "--jobs", "2", "--year", "1985"],
        &["simulate", "--model", "mario.model", "--hold", "1", "--hold-median", "--hold-max", "--out", "arcs.csv"],
        &["simulate", "--model", "mario.model", "--hold-min", "--frames", "30"],
        &["corpus", "--out", "corpus", "--seed", "7"],
        &["analyze", "--models", "corpus", "--out", "analysis", "--seed", "7", "--config", "tuned.conf"],
        &["compare", "--models", "models/mario_mario.model,models/castlevania_castlevania.model", "--hold", "max"],
    ];
    let mut outputs = BTreeMap::new();
    for (i, args) in steps.iter().enumerate() {
        let stdout = jumpinfer(dir, args)?;
        outputs.insert(format!("stdout/{i:02}-{}", args[0]), stdout);
    }
    snapshot(dir, &mut outputs, "");
    Ok(outputs)
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = cli_session(a.path())?;
    let second = cli_session(b.path())?;
    let names: Vec<&String> = first.keys().collect();
    ensure(names == second.keys().collect::<Vec<_>>(), || "different output file sets".into())?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
        if name.ends_with(".csv") || name.ends_with(".model") || name.ends_with(".txt") {
            ensure(bytes.starts_with(b"# jumpinfer "), || format!("{name} lacks the version header"))?;
        }
        if name.ends_with(".log") {
            ensure(bytes.windows(7).any(|w| w == b"config="), || format!("{name} lacks the config hash"))?;
        }
    }
    // An empty models directory is an explicit error.
    fs::create_dir(a.path().join("empty")).map_err(|e| e.to_string())?;
    let empty = jumpinfer(a.path(), &["analyze", "--models", "empty", "--out", "x"]);
    ensure(empty.is_err_and(|e| e.contains("no .model files")), || "empty analyze did not fail".into())?;
    Ok(format!("{} outputs byte-identical across two sessions", first.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("round-trip parameter recovery", round_trip_recovery),
        ("protocol fidelity", protocol_fidelity),
        ("metroid hold-bound fixture", metroid_hold_bound),
        ("sprite merging", merging),
        ("tracking", tracking),
        ("segmentation pragmatics", segmentation_pragmatics),
        ("pca", pca_criterion),
        ("k-means", kmeans_criterion),
        ("format round-trips", format_round_trips),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
