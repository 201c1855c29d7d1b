//! Diagonal-covariance Gaussian mixtures with EM training and average
//! log-likelihood scoring: the "normal" vs "abnormal" transmission models.
//!
//! Everything is deterministic for a given seed: k-means initialization
//! uses farthest-point starts, EM accumulates in fixed frame order, and the
//! model file round-trips exactly through 17-significant-digit decimals.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mfcc::FeatureMatrix;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("too few frames: {frames}, need at least {needed} for K={k}")]
    TooFewFrames { frames: usize, needed: usize, k: usize },
    #[error("dimension mismatch: model dim {model}, features dim {features}")]
    DimMismatch { model: usize, features: usize },
    #[error("malformed model file: {0}")]
    MalformedModelFile(String),
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

pub const DEFAULT_COMPONENTS: usize = 16;
const KMEANS_ITERS: usize = 10;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub variance_floor_factor: f64,
    pub seed: u64,
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings {
            max_iters: 100,
            rel_tol: 1e-5,
            variance_floor_factor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmMeta {
    pub training_frames: usize,
    pub final_avg_log_likelihood: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub num_components: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub meta: GmmMeta,
}

/// Per-iteration training trace, used to check the EM guarantees.
#[derive(Debug, Clone)]
pub struct EmIteration {
    pub avg_log_likelihood: f64,
    pub weight_sum: f64,
    pub min_variance_to_floor: f64,
}

fn check_frames(features: &FeatureMatrix, k: usize) -> Result<(), GmmError> {
    let needed = 10 * k;
    if features.len() < needed {
        return Err(GmmError::TooFewFrames {
            frames: features.len(),
            needed,
            k,
        });
    }
    Ok(())
}

fn dims(features: &FeatureMatrix) -> usize {
    features.rows.first().map(|r| r.len()).unwrap_or(0)
}

/// Per-dimension variance of the whole training set (floor basis).
fn global_variance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in var.iter_mut() {
        *s /= n;
    }
    var
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means initialization: one random start, then farthest-point
/// seeding, a fixed number of Lloyd iterations, and per-cluster statistics.
pub fn init_model(features: &FeatureMatrix, k: usize, seed: u64) -> Result<GmmModel, GmmError> {
    check_frames(features, k)?;
    let rows = &features.rows;
    let dim = dims(features);
    let n = rows.len();
    let gvar = global_variance(rows);
    let floor: Vec<f64> = gvar.iter().map(|v| (v * 1e-3).max(1e-12)).collect();

    // farthest-point seeding from one seeded pick
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centers: Vec<Vec<f64>> = vec![rows[first].clone()];
    let mut min_d2: Vec<f64> = rows.iter().map(|r| dist2(r, &centers[0])).collect();
    while centers.len() < k {
        let (best, _) = min_d2
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        centers.push(rows[best].clone());
        for (d, r) in min_d2.iter_mut().zip(rows) {
            let nd = dist2(r, centers.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        for (a, r) in assign.iter_mut().zip(rows) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(r, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            *a = best;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (a, r) in assign.iter().zip(rows) {
            counts[*a] += 1;
            for (s, v) in sums[*a].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // deterministic re-seed: the point farthest from its center
                let far = (0..n)
                    .max_by(|&i, &j| {
                        dist2(&rows[i], &centers[assign[i]])
                            .partial_cmp(&dist2(&rows[j], &centers[assign[j]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = rows[far].clone();
            } else {
                for (ctr, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *ctr = s / counts[c] as f64;
                }
            }
        }
    }

    // final assignment and per-cluster stats
    for (a, r) in assign.iter_mut().zip(rows) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = dist2(r, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *a = best;
    }
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; dim]; k];
    for (a, r) in assign.iter().zip(rows) {
        counts[*a] += 1;
        for (m, v) in means[*a].iter_mut().zip(r) {
            *m += v;
        }
    }
    for c in 0..k {
        let cnt = counts[c].max(1) as f64;
        for m in means[c].iter_mut() {
            *m /= cnt;
        }
    }
    let mut variances = vec![floor.clone(); k];
    let mut acc = vec![vec![0.0; dim]; k];
    for (a, r) in assign.iter().zip(rows) {
        for ((s, v), m) in acc[*a].iter_mut().zip(r).zip(&means[*a]) {
            *s += (v - m) * (v - m);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for ((var, s), fl) in variances[c].iter_mut().zip(&acc[c]).zip(&floor) {
                *var = (s / counts[c] as f64).max(*fl);
            }
        }
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    Ok(GmmModel {
        num_components: k,
        dim,
        weights,
        means,
        variances,
        meta: GmmMeta {
            training_frames: n,
            final_avg_log_likelihood: f64::NEG_INFINITY,
            seed,
        },
    })
}

/// Log-density terms reused across frames: `log w_k - 0.5 sum log(2 pi s^2)`.
fn component_constants(model: &GmmModel) -> Vec<f64> {
    model
        .weights
        .iter()
        .zip(&model.variances)
        .map(|(w, vars)| {
            let log_w = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            let log_det: f64 = vars.iter().map(|v| LN_2PI + v.ln()).sum();
            log_w - 0.5 * log_det
        })
        .collect()
}

fn log_joint(model: &GmmModel, consts: &[f64], x: &[f64], out: &mut [f64]) {
    for k in 0..model.num_components {
        let mut maha = 0.0;
        let mean = &model.means[k];
        let var = &model.variances[k];
        for d in 0..model.dim {
            let diff = x[d] - mean[d];
            maha += diff * diff / var[d];
        }
        out[k] = consts[k] - 0.5 * maha;
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m.is_infinite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// One EM iteration; returns the updated model and the average
/// log-likelihood of the *input* model on the data.
fn em_step(model: &GmmModel, rows: &[Vec<f64>], floor: &[f64]) -> (GmmModel, f64) {
    let k = model.num_components;
    let dim = model.dim;
    let consts = component_constants(model);

    let mut total_ll = 0.0;
    let mut resp_sum = vec![0.0f64; k];
    let mut mean_acc = vec![vec![0.0f64; dim]; k];
    let mut var_acc = vec![vec![0.0f64; dim]; k];
    let mut joint = vec![0.0f64; k];
    for x in rows {
        log_joint(model, &consts, x, &mut joint);
        let lse = log_sum_exp(&joint);
        total_ll += lse;
        for c in 0..k {
            let r = (joint[c] - lse).exp();
            if r == 0.0 {
                continue;
            }
            resp_sum[c] += r;
            for d in 0..dim {
                mean_acc[c][d] += r * x[d];
                var_acc[c][d] += r * x[d] * x[d];
            }
        }
    }
    let n = rows.len() as f64;

    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; dim]; k];
    let mut variances = vec![vec![0.0; dim]; k];
    for c in 0..k {
        let nk = resp_sum[c];
        weights[c] = nk / n;
        if nk > 0.0 {
            for d in 0..dim {
                let m = mean_acc[c][d] / nk;
                means[c][d] = m;
                variances[c][d] = (var_acc[c][d] / nk - m * m).max(floor[d]);
            }
        } else {
            // dead component: keep its parameters, floored
            means[c] = model.means[c].clone();
            for d in 0..dim {
                variances[c][d] = model.variances[c][d].max(floor[d]);
            }
        }
    }
    // keep the simplex exact against drift
    let wsum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= wsum;
    }

    (
        GmmModel {
            num_components: k,
            dim,
            weights,
            means,
            variances,
            meta: model.meta,
        },
        total_ll / n,
    )
}

/// EM training from the k-means initialization, with a per-iteration trace.
pub fn train_em_traced(
    features: &FeatureMatrix,
    settings: &EmSettings,
    k: usize,
) -> Result<(GmmModel, Vec<EmIteration>), GmmError> {
    check_frames(features, k)?;
    let rows = &features.rows;
    let gvar = global_variance(rows);
    let floor: Vec<f64> = gvar
        .iter()
        .map(|v| (v * settings.variance_floor_factor).max(1e-12))
        .collect();

    let mut model = init_model(features, k, settings.seed)?;
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..settings.max_iters {
        let (next, avg_ll) = em_step(&model, rows, &floor);
        model = next;
        last_ll = avg_ll;
        trace.push(EmIteration {
            avg_log_likelihood: avg_ll,
            weight_sum: model.weights.iter().sum(),
            min_variance_to_floor: model
                .variances
                .iter()
                .flatten()
                .zip(floor.iter().cycle())
                .map(|(v, f)| v / f)
                .fold(f64::INFINITY, f64::min),
        });
        if avg_ll - prev_ll < settings.rel_tol && prev_ll.is_finite() {
            break;
        }
        prev_ll = avg_ll;
    }
    model.meta = GmmMeta {
        training_frames: rows.len(),
        final_avg_log_likelihood: last_ll,
        seed: settings.seed,
    };
    Ok((model, trace))
}

/// Standard diagonal-covariance EM training.
pub fn train_em(
    features: &FeatureMatrix,
    settings: &EmSettings,
    k: usize,
) -> Result<GmmModel, GmmError> {
    train_em_traced(features, settings, k).map(|(m, _)| m)
}

/// Mean per-frame log-likelihood of the features under the model, in nats.
pub fn avg_log_likelihood(model: &GmmModel, features: &FeatureMatrix) -> Result<f64, GmmError> {
    let fdim = dims(features);
    if fdim != model.dim {
        return Err(GmmError::DimMismatch {
            model: model.dim,
            features: fdim,
        });
    }
    if features.is_empty() {
        return Err(GmmError::TooFewFrames {
            frames: 0,
            needed: 1,
            k: model.num_components,
        });
    }
    let consts = component_constants(model);
    let mut joint = vec![0.0f64; model.num_components];
    let mut total = 0.0;
    for x in &features.rows {
        log_joint(model, &consts, x, &mut joint);
        total += log_sum_exp(&joint);
    }
    Ok(total / features.len() as f64)
}

/// Line-oriented text model file:
/// "GMM1", "K dim", one weights line, K mean lines, K variance lines, one
/// trailing "meta frames final_ll seed" line. All reals carry 17 significant
/// digits so loading reproduces the exact f64 values.
pub fn save_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<(), GmmError> {
    let fmt_line = |xs: &[f64]| {
        xs.iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    out.push_str("GMM1\n");
    out.push_str(&format!("{} {}\n", model.num_components, model.dim));
    out.push_str(&fmt_line(&model.weights));
    out.push('\n');
    for m in &model.means {
        out.push_str(&fmt_line(m));
        out.push('\n');
    }
    for v in &model.variances {
        out.push_str(&fmt_line(v));
        out.push('\n');
    }
    out.push_str(&format!(
        "meta {} {:.16e} {}\n",
        model.meta.training_frames, model.meta.final_avg_log_likelihood, model.meta.seed
    ));
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel, GmmError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| GmmError::MalformedModelFile(msg.to_string());

    if lines.next().ok_or_else(|| bad("empty file"))? != "GMM1" {
        return Err(bad("missing GMM1 version line"));
    }
    let header = lines.next().ok_or_else(|| bad("missing K/dim line"))?;
    let mut parts = header.split_whitespace();
    let k: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad K"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad dim"))?;
    if k == 0 || dim == 0 {
        return Err(bad("K and dim must be positive"));
    }

    let parse_line = |line: Option<&str>, n: usize, what: &str| -> Result<Vec<f64>, GmmError> {
        let line = line.ok_or_else(|| bad(&format!("truncated file at {what}")))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(|s| s.parse()).collect();
        let vals = vals.map_err(|_| bad(&format!("bad number in {what}")))?;
        if vals.len() != n {
            return Err(bad(&format!(
                "{what} has {} values, expected {n}",
                vals.len()
            )));
        }
        Ok(vals)
    };

    let weights = parse_line(lines.next(), k, "weights")?;
    let mut means = Vec::with_capacity(k);
    for i in 0..k {
        means.push(parse_line(lines.next(), dim, &format!("mean {i}"))?);
    }
    let mut variances = Vec::with_capacity(k);
    for i in 0..k {
        variances.push(parse_line(lines.next(), dim, &format!("variance {i}"))?);
    }
    let meta_line = lines.next().ok_or_else(|| bad("missing meta line"))?;
    let mut mp = meta_line.split_whitespace();
    if mp.next() != Some("meta") {
        return Err(bad("missing meta line"));
    }
    let training_frames: usize = mp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad meta frames"))?;
    let final_avg_log_likelihood: f64 = mp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad meta log-likelihood"))?;
    let seed: u64 = mp
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad meta seed"))?;

    Ok(GmmModel {
        num_components: k,
        dim,
        weights,
        means,
        variances,
        meta: GmmMeta {
            training_frames,
            final_avg_log_likelihood,
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix {
            num_coeffs: rows[0].len(),
            rows,
            source_id: "test".into(),
        }
    }

    fn two_cluster_data(n_per: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for _ in 0..n_per {
            // Box-Muller pairs around -10 and +10
            for center in [-10.0, 10.0] {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                rows.push(vec![center + z]);
            }
        }
        matrix(rows)
    }

    #[test]
    fn init_is_deterministic() {
        let f = two_cluster_data(100, 3);
        let a = init_model(&f, 4, 9).unwrap();
        let b = init_model(&f, 4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_k1_is_global_stats() {
        let f = matrix(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0],
                            vec![6.0], vec![7.0], vec![8.0], vec![9.0], vec![10.0]]);
        let m = init_model(&f, 1, 0).unwrap();
        assert!((m.means[0][0] - 5.5).abs() < 1e-12);
        assert!((m.variances[0][0] - 8.25).abs() < 1e-12);
        assert!((m.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_recovers_repeated_distinct_points() {
        let mut rows = Vec::new();
        for _ in 0..20 {
            rows.push(vec![-5.0]);
            rows.push(vec![0.0]);
            rows.push(vec![5.0]);
        }
        let m = init_model(&matrix(rows), 3, 1).unwrap();
        let mut got: Vec<f64> = m.means.iter().map(|m| m[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![-5.0, 0.0, 5.0]);
    }

    #[test]
    fn too_few_frames_rejected() {
        let f = matrix(vec![vec![0.0]; 19]);
        assert!(matches!(
            init_model(&f, 2, 0),
            Err(GmmError::TooFewFrames { needed: 20, .. })
        ));
    }

    #[test]
    fn em_recovers_two_separated_gaussians() {
        let f = two_cluster_data(1000, 42);
        let settings = EmSettings { seed: 7, ..Default::default() };
        let m = train_em(&f, &settings, 2).unwrap();
        let mut means: Vec<f64> = m.means.iter().map(|m| m[0]).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] + 10.0).abs() < 0.3, "mean {}", means[0]);
        assert!((means[1] - 10.0).abs() < 0.3, "mean {}", means[1]);
        for w in &m.weights {
            assert!((w - 0.5).abs() < 0.05, "weight {w}");
        }
    }

    #[test]
    fn em_likelihood_never_decreases_and_invariants_hold() {
        let f = two_cluster_data(200, 5);
        let settings = EmSettings { seed: 3, ..Default::default() };
        let (_, trace) = train_em_traced(&f, &settings, 3).unwrap();
        for w in trace.windows(2) {
            assert!(
                w[1].avg_log_likelihood >= w[0].avg_log_likelihood - 1e-9,
                "ll dropped: {} -> {}",
                w[0].avg_log_likelihood,
                w[1].avg_log_likelihood
            );
        }
        for it in &trace {
            assert!((it.weight_sum - 1.0).abs() < 1e-12);
            assert!(it.min_variance_to_floor >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn em_k1_matches_closed_form() {
        let f = matrix((0..50).map(|i| vec![i as f64]).collect());
        let settings = EmSettings { max_iters: 1, seed: 0, ..Default::default() };
        let m = train_em(&f, &settings, 1).unwrap();
        let mean = 24.5;
        let var = (0..50).map(|i| (i as f64 - mean).powi(2)).sum::<f64>() / 50.0;
        assert!((m.means[0][0] - mean).abs() < 1e-9);
        assert!((m.variances[0][0] - var).abs() < 1e-6);
    }

    #[test]
    fn single_component_density_at_mean() {
        let model = GmmModel {
            num_components: 1,
            dim: 2,
            weights: vec![1.0],
            means: vec![vec![3.0, -1.0]],
            variances: vec![vec![2.0, 0.5]],
            meta: GmmMeta { training_frames: 0, final_avg_log_likelihood: 0.0, seed: 0 },
        };
        let f = matrix(vec![vec![3.0, -1.0]]);
        let got = avg_log_likelihood(&model, &f).unwrap();
        let want = -0.5 * ((LN_2PI + 2.0f64.ln()) + (LN_2PI + 0.5f64.ln()));
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn scoring_is_frame_order_invariant() {
        let f = two_cluster_data(100, 8);
        let settings = EmSettings { seed: 1, ..Default::default() };
        let m = train_em(&f, &settings, 2).unwrap();
        let fwd = avg_log_likelihood(&m, &f).unwrap();
        let mut rows = f.rows.clone();
        rows.reverse();
        let rev = avg_log_likelihood(&m, &matrix(rows)).unwrap();
        assert!((fwd - rev).abs() < 1e-12 * fwd.abs().max(1.0));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let f = two_cluster_data(50, 2);
        let m = train_em(&f, &EmSettings::default(), 1).unwrap();
        let wide = matrix(vec![vec![0.0, 0.0]; 10]);
        assert!(matches!(
            avg_log_likelihood(&m, &wide),
            Err(GmmError::DimMismatch { model: 1, features: 2 })
        ));
    }

    #[test]
    fn model_file_round_trips_exactly() {
        let f = two_cluster_data(100, 13);
        let settings = EmSettings { seed: 4, ..Default::default() };
        let m = train_em(&f, &settings, 2).unwrap();
        let path = std::env::temp_dir().join(format!("transteg-{}.gmm", std::process::id()));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(m, back);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn truncated_model_file_rejected() {
        let f = two_cluster_data(100, 13);
        let m = train_em(&f, &EmSettings::default(), 2).unwrap();
        let path = std::env::temp_dir().join(format!("transteg-tr-{}.gmm", std::process::id()));
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(GmmError::MalformedModelFile(_))
        ));
        std::fs::write(&path, "NOPE\n").unwrap();
        assert!(matches!(
            load_model(&path),
            Err(GmmError::MalformedModelFile(_))
        ));
        std::fs::remove_file(&path).unwrap();
    }
}
