//! Cross-character comparison: feature vectors, principal components and
//! k-means clustering with an elbow scan.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automaton::ModeParams;
use crate::fit::{JumpModel, ResidualStats};

pub const FEATURE_NAMES: [&str; 11] = [
    "max_hold",
    "min_hold",
    "initial_gravity",
    "initial_reset",
    "up_fixed_gravity",
    "up_fixed_multiplier",
    "up_fixed_reset",
    "down_gravity",
    "down_multiplier",
    "down_reset",
    "has_control",
];

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no models to analyze")]
    Empty,
    #[error("model {game}/{character} is incomplete: {reason}")]
    BadModel {
        game: String,
        character: String,
        reason: String,
    },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("all rows are identical, so there is no variance to decompose")]
    NoVariance,
    #[error("invalid analysis settings: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    /// Relative WCSS improvement below which adding a cluster stops paying.
    pub elbow_threshold: f64,
    pub restarts: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            elbow_threshold: 0.10,
            restarts: 32,
            k_min: 2,
            k_max: 15,
            seed: 0x5eed,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.elbow_threshold > 0.0 && self.elbow_threshold < 1.0) {
            return Err(AnalysisError::Config("elbow threshold must be in (0, 1)".into()));
        }
        if self.restarts == 0 || self.k_min == 0 || self.k_min > self.k_max {
            return Err(AnalysisError::Config(
                "restarts must be positive and 1 <= k_min <= k_max".into(),
            ));
        }
        Ok(())
    }
}

/// The shared features of one model, in `FEATURE_NAMES` order. Initial
/// parameters come from up-control when the jump has control.
pub fn feature_vector(model: &JumpModel) -> [f64; 11] {
    let initial = model.initial();
    [
        model.max_hold as f64,
        model.min_hold as f64,
        initial.gravity,
        initial.reset,
        model.up_fixed.gravity,
        model.up_fixed.multiplier,
        model.up_fixed.reset,
        model.down.gravity,
        model.down.multiplier,
        model.down.reset,
        if model.has_control { 1.0 } else { 0.0 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub labels: Vec<(String, String)>,
    pub raw: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub standardized: Vec<Vec<f64>>,
}

/// Z-scores each column with the sample standard deviation. Constant columns
/// become all zeros.
pub fn standardize(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = if n > 1 {
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        means[j] = mean;
        stds[j] = var.sqrt();
    }
    let scaled = rows
        .iter()
        .map(|r| {
            (0..d)
                .map(|j| {
                    let centered = r[j] - means[j];
                    // Relative guard so constant columns with rounding noise stay zero.
                    if stds[j] <= 1e-12 * (1.0 + means[j].abs()) {
                        0.0
                    } else {
                        centered / stds[j]
                    }
                })
                .collect()
        })
        .collect();
    (scaled, means, stds)
}

pub fn featurize(models: &[JumpModel]) -> Result<FeatureMatrix, AnalysisError> {
    if models.is_empty() {
        return Err(AnalysisError::Empty);
    }
    for m in models {
        m.validate().map_err(|e| AnalysisError::BadModel {
            game: m.game.clone(),
            character: m.character.clone(),
            reason: e.to_string(),
        })?;
    }
    let raw: Vec<Vec<f64>> = models.iter().map(|m| feature_vector(m).to_vec()).collect();
    let (standardized, means, std_devs) = standardize(&raw);
    Ok(FeatureMatrix {
        labels: models.iter().map(|m| (m.game.clone(), m.character.clone())).collect(),
        raw,
        means,
        std_devs,
        standardized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Covariance eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    /// Unit loading vectors, one per component, in eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub variance_fractions: Vec<f64>,
    /// `contributions[c][f]`: percentage of component `c` carried by feature `f`.
    pub contributions: Vec<Vec<f64>>,
}

impl PcaResult {
    pub fn cumulative(&self) -> Vec<f64> {
        self.variance_fractions
            .iter()
            .scan(0.0, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect()
    }

    /// Fewest leading components whose variance reaches `fraction`.
    pub fn components_for(&self, fraction: f64) -> usize {
        self.cumulative()
            .iter()
            .position(|&c| c >= fraction - 1e-12)
            .map_or(self.variance_fractions.len(), |i| i + 1)
    }

    /// Coordinates of `rows` on the first `dims` components.
    pub fn project(&self, rows: &[Vec<f64>], dims: usize) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                self.components
                    .iter()
                    .take(dims)
                    .map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }
}

/// Sample covariance of already centered or standardized rows.
pub fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut means = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            means[j] += r[j] / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += (r[i] - means[i]) * (r[j] - means[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov
}

/// Unrotated principal components of the covariance of `rows`.
pub fn pca(rows: &[Vec<f64>]) -> Result<PcaResult, AnalysisError> {
    if rows.len() < 2 {
        return Err(AnalysisError::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let cov = covariance(rows);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(AnalysisError::NoVariance);
    }
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map_or(0, |(j, _)| j);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let contributions = components
        .iter()
        .map(|c| {
            let sq: f64 = c.iter().map(|x| x * x).sum();
            c.iter().map(|x| 100.0 * x * x / sq).collect()
        })
        .collect();
    Ok(PcaResult {
        variance_fractions: eigenvalues.iter().map(|e| e / total).collect(),
        eigenvalues,
        components,
        contributions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations from the given centroids. Returns the run and the WCSS
/// after each assignment step. An emptied cluster keeps its centroid.
pub fn lloyd(rows: &[Vec<f64>], init: Vec<Vec<f64>>) -> (KMeansRun, Vec<f64>) {
    let k = init.len();
    let d = rows[0].len();
    let mut centroids = init;
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..500 {
        let step: Vec<(usize, f64)> = rows.iter().map(|r| nearest(r, &centroids)).collect();
        let next: Vec<usize> = step.iter().map(|s| s.0).collect();
        history.push(step.iter().map(|s| s.1).sum());
        if next == assignments {
            break;
        }
        assignments = next;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in rows.iter().zip(&assignments) {
            counts[a] += 1;
            for j in 0..d {
                sums[a][j] += r[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let wcss = rows
        .iter()
        .zip(&assignments)
        .map(|(r, &a)| dist2(r, &centroids[a]))
        .sum();
    (
        KMeansRun {
            k,
            assignments,
            centroids,
            wcss,
        },
        history,
    )
}

/// Adds farthest points to `centroids` until there are `k`.
fn farthest_fill(rows: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, k: usize) -> Vec<Vec<f64>> {
    while centroids.len() < k {
        let far = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, nearest(r, &centroids).1))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("rows are non-empty");
        centroids.push(rows[far].clone());
    }
    centroids
}

/// Best of `restarts` farthest-point-seeded runs plus any warm starts.
pub fn kmeans(
    rows: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
    warm: &[Vec<Vec<f64>>],
) -> Result<KMeansRun, AnalysisError> {
    if k == 0 || k > rows.len() {
        return Err(AnalysisError::TooFewRows {
            needed: k.max(1),
            got: rows.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut firsts: Vec<usize> = (0..rows.len()).collect();
    firsts.shuffle(&mut rng);
    let mut best: Option<KMeansRun> = None;
    let mut consider = |run: KMeansRun| {
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    };
    for r in 0..restarts {
        let first = if r < firsts.len() { firsts[r] } else { rng.gen_range(0..rows.len()) };
        let init = farthest_fill(rows, vec![rows[first].clone()], k);
        consider(lloyd(rows, init).0);
    }
    for w in warm {
        consider(lloyd(rows, farthest_fill(rows, w.clone(), k)).0);
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub chosen: KMeansRun,
    /// `(k, wcss)` over the scanned range.
    pub scan: Vec<(usize, f64)>,
    pub runs: Vec<KMeansRun>,
}

/// Smallest `k` whose relative WCSS improvement to `k + 1` is below the
/// threshold; the largest scanned `k` if none is.
pub fn elbow(scan: &[(usize, f64)], threshold: f64) -> usize {
    for pair in scan.windows(2) {
        let (k, w) = pair[0];
        let (_, next) = pair[1];
        if w <= 0.0 || (w - next) / w < threshold {
            return k;
        }
    }
    scan.last().map_or(0, |s| s.0)
}

/// Runs k-means for every k in range. Each k is also warm started from the
/// best k - 1 solution, so WCSS never increases along the scan.
pub fn kmeans_scan(rows: &[Vec<f64>], config: &AnalysisConfig) -> Result<KMeansResult, AnalysisError> {
    config.validate()?;
    if rows.len() < config.k_max {
        return Err(AnalysisError::TooFewRows {
            needed: config.k_max,
            got: rows.len(),
        });
    }
    let mut runs: Vec<KMeansRun> = Vec::new();
    for k in config.k_min..=config.k_max {
        let warm: Vec<Vec<Vec<f64>>> = runs.last().map(|r| vec![r.centroids.clone()]).unwrap_or_default();
        runs.push(kmeans(rows, k, config.restarts, config.seed, &warm)?);
    }
    let scan: Vec<(usize, f64)> = runs.iter().map(|r| (r.k, r.wcss)).collect();
    let k = elbow(&scan, config.elbow_threshold);
    let chosen = runs.iter().find(|r| r.k == k).expect("elbow is a scanned k").clone();
    Ok(KMeansResult { chosen, scan, runs })
}

/// Fraction of points whose label agrees with the reference after the best
/// one-to-one relabeling.
pub fn label_agreement(found: &[usize], reference: &[usize]) -> f64 {
    let kf = found.iter().max().map_or(0, |m| m + 1);
    let kr = reference.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; kr]; kf];
    for (&f, &r) in found.iter().zip(reference) {
        counts[f][r] += 1;
    }
    // Exhaustive search over injective maps; cluster counts here are small.
    fn search(counts: &[Vec<usize>], row: usize, used: &mut Vec<bool>) -> usize {
        if row == counts.len() {
            return 0;
        }
        let mut best = search(counts, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(counts[row][c] + search(counts, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let matched = search(&counts, 0, &mut vec![false; kr]);
    matched as f64 / found.len().max(1) as f64
}

fn csv_float(x: f64) -> String {
    format!("{x}")
}

/// CSV files keyed by file name. Every file starts with `header`.
pub fn report(
    header: &str,
    matrix: &FeatureMatrix,
    pca: &PcaResult,
    kmeans: &KMeansResult,
    models: &[JumpModel],
) -> Vec<(String, String)> {
    let start = || {
        let mut s = String::new();
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s
    };
    let mut files = Vec::new();

    let mut scree = start();
    scree.push_str("component,variance_fraction,cumulative\n");
    for (i, (f, c)) in pca.variance_fractions.iter().zip(pca.cumulative()).enumerate() {
        let _ = writeln!(scree, "{},{},{}", i + 1, csv_float(*f), csv_float(c));
    }
    files.push(("scree.csv".to_string(), scree));

    let mut contrib = start();
    contrib.push_str("feature");
    for i in 0..pca.components.len() {
        let _ = write!(contrib, ",pc{}", i + 1);
    }
    contrib.push('\n');
    for (f, name) in FEATURE_NAMES.iter().enumerate() {
        contrib.push_str(name);
        for c in &pca.contributions {
            let _ = write!(contrib, ",{}", csv_float(c[f]));
        }
        contrib.push('\n');
    }
    files.push(("contributions.csv".to_string(), contrib));

    let mut clusters = start();
    clusters.push_str("game,character,cluster\n");
    for ((g, c), a) in matrix.labels.iter().zip(&kmeans.chosen.assignments) {
        let _ = writeln!(clusters, "{g},{c},{a}");
    }
    files.push(("clusters.csv".to_string(), clusters));

    let mut sizes = start();
    sizes.push_str("cluster,size\n");
    for c in 0..kmeans.chosen.k {
        let n = kmeans.chosen.assignments.iter().filter(|&&a| a == c).count();
        let _ = writeln!(sizes, "{c},{n}");
    }
    files.push(("cluster_sizes.csv".to_string(), sizes));

    let mut proj = start();
    proj.push_str("game,character,pc1,pc2\n");
    for ((g, c), p) in matrix.labels.iter().zip(pca.project(&matrix.standardized, 2)) {
        let x = p.first().copied().unwrap_or(0.0);
        let y = p.get(1).copied().unwrap_or(0.0);
        let _ = writeln!(proj, "{g},{c},{},{}", csv_float(x), csv_float(y));
    }
    files.push(("projection.csv".to_string(), proj));

    let mut wcss = start();
    wcss.push_str("k,wcss\n");
    for (k, w) in &kmeans.scan {
        let _ = writeln!(wcss, "{k},{}", csv_float(*w));
    }
    files.push(("wcss.csv".to_string(), wcss));

    if models.iter().any(|m| m.year.is_some()) {
        let mut control: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        let mut by_cluster: BTreeMap<(u32, usize), usize> = BTreeMap::new();
        for (m, &a) in models.iter().zip(&kmeans.chosen.assignments) {
            let Some(year) = m.year else { continue };
            let entry = control.entry(year).or_default();
            if m.has_control {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
            *by_cluster.entry((year, a)).or_default() += 1;
        }
        let mut s = start();
        s.push_str("year,with_control,without_control\n");
        for (y, (w, wo)) in &control {
            let _ = writeln!(s, "{y},{w},{wo}");
        }
        files.push(("control_by_year.csv".to_string(), s));
        let mut s = start();
        s.push_str("year,cluster,count\n");
        for ((y, c), n) in &by_cluster {
            let _ = writeln!(s, "{y},{c},{n}");
        }
        files.push(("cluster_by_year.csv".to_string(), s));
    }
    files
}

/// Group sizes and names of the bundled synthetic corpus.
pub const CORPUS_GROUPS: [(&str, usize); 3] = [("controlled", 18), ("floaty", 16), ("fixed", 18)];

/// Per-group centers of max hold, min hold, up-control gravity and reset,
/// up-fixed gravity, multiplier and reset, down gravity and down reset.
/// Groups without control take their hold and initial values from the rules
/// for fixed jumps instead.
const CORPUS_CENTERS: [[f64; 9]; 3] = [
    [22.0, 4.5, -0.08, 4.0, -0.35, 1.0, 0.0, -0.45, 0.0],
    [45.0, 12.0, -0.03, 3.0, -0.10, 0.3, 0.6, -0.12, 0.3],
    [1.0, 1.0, -0.30, 5.0, -0.30, 0.0, 5.0, -0.35, -0.1],
];
/// Within-group spread as a fraction of each feature's range of centers.
const CORPUS_SPREAD: f64 = 0.1;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// `rows x cols` standard normal draws whitened so that the sample mean is
/// zero and the sample covariance is exactly the identity. Needs
/// `rows > cols`.
fn whitened_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let mut z = DMatrix::from_fn(rows, cols, |_, _| gaussian(rng));
        for mut col in z.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let cov = z.transpose() * &z / (rows as f64 - 1.0);
        if let Some(chol) = cov.cholesky() {
            // z * L^-T has identity sample covariance.
            let lt = chol.l().transpose();
            if let Some(inv) = lt.try_inverse() {
                return z * inv;
            }
        }
    }
}

/// Fifty-two synthetic models drawn from three archetype distributions,
/// with their generating group index. Each group's noise is whitened so its
/// shape is the same for every seed.
pub fn synthetic_corpus(seed: u64) -> Vec<(JumpModel, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spread = [0.0; 9];
    for (j, s) in spread.iter_mut().enumerate() {
        let lo = CORPUS_CENTERS.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min);
        let hi = CORPUS_CENTERS.iter().map(|c| c[j]).fold(f64::NEG_INFINITY, f64::max);
        *s = CORPUS_SPREAD * (hi - lo);
    }
    let mut out = Vec::new();
    for (label, &(name, count)) in CORPUS_GROUPS.iter().enumerate() {
        let controlled = label < 2;
        // Fixed jumps keep unit holds and reuse up-fixed as the initial mode,
        // so that mode's noise must fit the tighter of its two columns.
        let noisy: Vec<(usize, f64)> = if controlled {
            (0..9).map(|j| (j, spread[j])).collect()
        } else {
            vec![
                (4, spread[2].min(spread[4])),
                (6, spread[3].min(spread[6])),
                (7, spread[7]),
                (8, spread[8]),
            ]
        };
        let noise = whitened_noise(&mut rng, count, noisy.len());
        for i in 0..count {
            let mut f = CORPUS_CENTERS[label];
            for (k, &(j, s)) in noisy.iter().enumerate() {
                f[j] += s * noise[(i, k)];
            }
            let (control, min_hold, max_hold) = if controlled {
                let min_hold = f[1].round().max(1.0) as u32;
                let max_hold = (f[0].round() as u32).max(min_hold + 1);
                (Some(ModeParams::new(f[2], f[3], 0.0)), min_hold, max_hold)
            } else {
                (None, 1, 1)
            };
            let multiplier = if controlled { f[5] } else { 0.0 };
            let year = 1983 + rng.gen_range(0..12);
            out.push((
                JumpModel {
                    game: format!("{name}{i:02}"),
                    character: format!("{name}{i:02}"),
                    year: Some(year),
                    has_control: controlled,
                    up_control: control,
                    up_fixed: ModeParams::new(f[4], f[6], multiplier),
                    down: ModeParams::new(f[7], f[8], 1.0),
                    min_hold,
                    max_hold,
                    residual: ResidualStats::default(),
                },
                label,
            ));
        }
    }
    out
}
