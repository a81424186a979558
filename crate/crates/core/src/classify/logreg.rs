//! Multinomial logistic regression with an L2 penalty on the weights.
//!
//! The objective is `Σ_i CE(softmax(W x_i + b), y_i) + ‖W‖² / (2C)`; the
//! bias is not penalized. Full-batch descent starts from zero with a
//! backtracking (Armijo) step, either along the negative gradient or along
//! an L-BFGS direction. Every iterate keeps the form `W = X̃ᵀ A` with `X̃`
//! the training rows centred on their mean, so the descent runs on the
//! `n × K` coefficients `A` through the Gram matrix `X̃ X̃ᵀ`. Centring only
//! moves the unpenalized bias, so the minimizer is unchanged; it removes the
//! large common-mode direction that otherwise dominates the Gram matrix.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClassifyError, Dataset, Split};
use crate::model::Task;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Inverse regularization strength `C`.
    pub inverse_reg: f64,
    /// Stop once the gradient's ∞-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    /// Curvature pairs kept for quasi-Newton directions; 0 is plain
    /// steepest descent.
    pub history: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { inverse_reg: 0.5, tol: 1e-5, max_iter: 2000, armijo_c1: 1e-4, history: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    /// Objective before the first step and after every accepted step.
    pub losses: Vec<f64>,
    pub converged: bool,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub task: Task,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub inverse_reg: f64,
    pub bias: Vec<f64>,
    /// Class-major: `weights[k * feature_dim + j]`.
    pub weights: Vec<f64>,
}

impl LrModel {
    pub fn class_weights(&self, k: usize) -> &[f64] {
        &self.weights[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    pub fn scores(&self, x: &[f32]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|k| self.bias[k] + self.class_weights(k).iter().zip(x).map(|(w, &v)| w * f64::from(v)).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, x: &[f32]) -> Vec<f64> {
        let mut s = self.scores(x);
        softmax_in_place(&mut s);
        s
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn predict(&self, x: &[f32]) -> usize {
        argmax(&self.scores(x))
    }

    const MAGIC: &'static [u8; 4] = b"AWLR";
    const VERSION: u16 = 1;

    /// `AWLR`, version u16, task u8, classes u32, feature dim u64, C f64,
    /// biases then class-major weights as f64; all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&[task_code(self.task)])?;
        w.write_all(&(self.n_classes as u32).to_le_bytes())?;
        w.write_all(&(self.feature_dim as u64).to_le_bytes())?;
        w.write_all(&self.inverse_reg.to_le_bytes())?;
        for v in self.bias.iter().chain(&self.weights) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelFormatError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(ModelFormatError::BadMagic(magic));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != Self::VERSION {
            return Err(ModelFormatError::Version(version));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let task = match b1[0] {
            0 => Task::Terrain,
            1 => Task::ObstacleShape,
            other => return Err(ModelFormatError::Task(other)),
        };
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n_classes = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let feature_dim = u64::from_le_bytes(b8) as usize;
        if n_classes != task.n_classes() {
            return Err(ModelFormatError::Classes { task, found: n_classes });
        }
        r.read_exact(&mut b8)?;
        let inverse_reg = f64::from_le_bytes(b8);
        let mut read_f64s = |n: usize| -> io::Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let bias = read_f64s(n_classes)?;
        let weights = read_f64s(n_classes * feature_dim)?;
        Ok(Self { task, n_classes, feature_dim, inverse_reg, bias, weights })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, ModelFormatError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("not a model file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported model version {0}")]
    Version(u16),
    #[error("unknown task code {0}")]
    Task(u8),
    #[error("task {task:?} expects a different class count than {found}")]
    Classes { task: Task, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn task_code(task: Task) -> u8 {
    match task {
        Task::Terrain => 0,
        Task::ObstacleShape => 1,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(s: &mut [f64]) {
    let lse = log_sum_exp(s);
    s.iter_mut().for_each(|v| *v = (*v - lse).exp());
}

/// Objective and gradient at `(weights, bias)` on dense rows, evaluated
/// directly in weight space.
pub fn objective_and_gradient(
    weights: &[f64],
    bias: &[f64],
    rows: &[Vec<f64>],
    labels: &[usize],
    inverse_reg: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let k = bias.len();
    let dim = if k == 0 { 0 } else { weights.len() / k };
    let mut loss = weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * inverse_reg);
    let mut gw: Vec<f64> = weights.iter().map(|w| w / inverse_reg).collect();
    let mut gb = vec![0.0; k];
    for (x, &y) in rows.iter().zip(labels) {
        let mut s: Vec<f64> =
            (0..k).map(|c| bias[c] + weights[c * dim..(c + 1) * dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).collect();
        loss += log_sum_exp(&s) - s[y];
        softmax_in_place(&mut s);
        s[y] -= 1.0;
        for c in 0..k {
            gb[c] += s[c];
            for (g, v) in gw[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *g += s[c] * v;
            }
        }
    }
    (loss, gw, gb)
}

fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let mut ia = a.chunks_exact(8);
    let mut ib = b.chunks_exact(8);
    for (xa, xb) in (&mut ia).zip(&mut ib) {
        for l in 0..8 {
            lanes[l] += f64::from(xa[l]) * f64::from(xb[l]);
        }
    }
    let tail: f64 = ia.remainder().iter().zip(ib.remainder()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    lanes.iter().sum::<f64>() + tail
}

fn column_mean(rows: &[&[f32]], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for row in rows {
        mean.iter_mut().zip(row.iter()).for_each(|(m, &x)| *m += f64::from(x));
    }
    let n = rows.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Gram matrix of the rows centred on `mean`.
fn centred_gram(rows: &[&[f32]], mean: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let proj: Vec<f64> = rows.iter().map(|r| r.iter().zip(mean).map(|(&x, m)| f64::from(x) * m).sum()).collect();
    let mm: f64 = mean.iter().map(|m| m * m).sum();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = dot_f32(rows[i], rows[j]) - proj[i] - proj[j] + mm;
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

/// `G · M` for an `n × n` Gram matrix and an `n × k` matrix.
fn gram_times(g: &[f64], m: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let gi = &g[i * n..(i + 1) * n];
        let oi = &mut out[i * k..(i + 1) * k];
        for (j, &gij) in gi.iter().enumerate() {
            for c in 0..k {
                oi[c] += gij * m[j * k + c];
            }
        }
    }
    out
}

struct Objective<'a> {
    labels: &'a [usize],
    k: usize,
    inverse_reg: f64,
}

impl Objective<'_> {
    /// Loss from scores `s` and `ga = G·A`.
    fn value(&self, s: &[f64], a: &[f64], ga: &[f64]) -> f64 {
        let ce: f64 =
            s.chunks(self.k).zip(self.labels).map(|(row, &y)| log_sum_exp(row) - row[y]).sum();
        let reg: f64 = a.iter().zip(ga).map(|(x, y)| x * y).sum();
        ce + reg / (2.0 * self.inverse_reg)
    }
}

/// `X̃ᵀ A`, class-major.
fn weights_from_coefficients(rows: &[&[f32]], mean: &[f64], a: &[f64], k: usize, dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; k * dim];
    for c in 0..k {
        let total: f64 = (0..rows.len()).map(|i| a[i * k + c]).sum();
        w[c * dim..(c + 1) * dim].iter_mut().zip(mean).for_each(|(wj, m)| *wj = -total * m);
    }
    for (i, row) in rows.iter().enumerate() {
        for c in 0..k {
            let coef = a[i * k + c];
            if coef == 0.0 {
                continue;
            }
            for (wj, &x) in w[c * dim..(c + 1) * dim].iter_mut().zip(row.iter()) {
                *wj += coef * f64::from(x);
            }
        }
    }
    w
}

fn inf_norm_xt(rows: &[&[f32]], mean: &[f64], r: &[f64], k: usize, dim: usize) -> f64 {
    weights_from_coefficients(rows, mean, r, k, dim).iter().fold(0.0, |m, v| m.max(v.abs()))
}

const EXACT_CHECK_EVERY: usize = 25;

struct Pending {
    sa: Vec<f64>,
    sb: Vec<f64>,
    gs: Vec<f64>,
    r: Vec<f64>,
    gr: Vec<f64>,
    gb: Vec<f64>,
}

/// Curvature pair in weight space carried by coefficients: `s`, `y` and
/// their Gram images.
struct Pair {
    sa: Vec<f64>,
    sb: Vec<f64>,
    gs: Vec<f64>,
    ya: Vec<f64>,
    yb: Vec<f64>,
    gy: Vec<f64>,
    rho: f64,
    gamma: f64,
}

/// L-BFGS two-loop recursion under the weight-space inner product
/// `⟨u, v⟩ = u_Aᵀ G v_A + u_b · v_b`. Returns `(d_A, G d_A, d_b)`.
fn two_loop(pairs: &[Pair], r: &[f64], gr: &[f64], gb: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut qa = r.to_vec();
    let mut gq = gr.to_vec();
    let mut qb = gb.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        let alpha = p.rho * (qa.iter().zip(&p.gs).map(|(x, y)| x * y).sum::<f64>() + qb.iter().zip(&p.sb).map(|(x, y)| x * y).sum::<f64>());
        alphas[i] = alpha;
        qa.iter_mut().zip(&p.ya).for_each(|(q, y)| *q -= alpha * y);
        gq.iter_mut().zip(&p.gy).for_each(|(q, y)| *q -= alpha * y);
        qb.iter_mut().zip(&p.yb).for_each(|(q, y)| *q -= alpha * y);
    }
    let gamma = pairs.last().map_or(1.0, |p| p.gamma);
    qa.iter_mut().chain(gq.iter_mut()).chain(qb.iter_mut()).for_each(|v| *v *= gamma);
    for (p, &alpha) in pairs.iter().zip(&alphas) {
        let beta = p.rho * (qa.iter().zip(&p.gy).map(|(x, y)| x * y).sum::<f64>() + qb.iter().zip(&p.yb).map(|(x, y)| x * y).sum::<f64>());
        let c = alpha - beta;
        qa.iter_mut().zip(&p.sa).for_each(|(q, s)| *q += c * s);
        gq.iter_mut().zip(&p.gs).for_each(|(q, s)| *q += c * s);
        qb.iter_mut().zip(&p.sb).for_each(|(q, s)| *q += c * s);
    }
    (qa.iter().map(|v| -v).collect(), gq.iter().map(|v| -v).collect(), qb.iter().map(|v| -v).collect())
}

/// Fits the model on the training split.
pub fn train_lr(data: &Dataset, cfg: &TrainConfig) -> Result<(LrModel, TrainReport), ClassifyError> {
    let train: Vec<_> = data.split(Split::Train).collect();
    if train.is_empty() {
        return Err(ClassifyError::EmptySplit(Split::Train));
    }
    // Classes absent from training are left out of the fit and can never
    // be predicted.
    let present: Vec<usize> =
        train.iter().map(|s| s.label).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if present.len() < 2 {
        return Err(ClassifyError::Degenerate(present.len()));
    }
    let k = present.len();
    let rows: Vec<&[f32]> = train.iter().map(|s| s.features.as_slice()).collect();
    let labels: Vec<usize> =
        train.iter().map(|s| present.iter().position(|&c| c == s.label).expect("present")).collect();
    let n = rows.len();
    let dim = data.feature_dim;
    let mean = column_mean(&rows, dim);
    let g = centred_gram(&rows, &mean);
    let obj = Objective { labels: &labels, k, inverse_reg: cfg.inverse_reg };

    let mut a = vec![0.0; n * k];
    let mut b = vec![0.0; k];
    let mut ga = vec![0.0; n * k];
    let mut s = vec![0.0; n * k];
    let mut loss = obj.value(&s, &a, &ga);
    let mut losses = vec![loss];
    let mut step = 1.0;
    let mut converged = false;
    let mut grad_inf = f64::INFINITY;
    let mut iterations = 0;
    let inf_bound = ((dim * k + k) as f64).sqrt();
    let x_max = rows.iter().fold(0.0f64, |m, r| r.iter().zip(&mean).fold(m, |m, (&x, mu)| m.max((f64::from(x) - mu).abs())));
    let mut pairs: Vec<Pair> = Vec::new();
    let mut pending: Option<Pending> = None;

    loop {
        // Residual R = P − Y + A / C; weight gradient is Xᵀ R.
        let mut r = vec![0.0; n * k];
        let mut gb = vec![0.0; k];
        for i in 0..n {
            let mut p = s[i * k..(i + 1) * k].to_vec();
            softmax_in_place(&mut p);
            p[labels[i]] -= 1.0;
            for c in 0..k {
                gb[c] += p[c];
                r[i * k + c] = p[c] + a[i * k + c] / cfg.inverse_reg;
            }
        }
        let gr = gram_times(&g, &r, n, k);
        let norm2 = r.iter().zip(&gr).map(|(x, y)| x * y).sum::<f64>().max(0.0) + gb.iter().map(|v| v * v).sum::<f64>();
        let norm = norm2.sqrt();
        let gb_inf = gb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(p) = pending.take() {
            let ya: Vec<f64> = r.iter().zip(&p.r).map(|(x, y)| x - y).collect();
            let yb: Vec<f64> = gb.iter().zip(&p.gb).map(|(x, y)| x - y).collect();
            let gy: Vec<f64> = gr.iter().zip(&p.gr).map(|(x, y)| x - y).collect();
            let sy = p.gs.iter().zip(&ya).map(|(x, y)| x * y).sum::<f64>() + p.sb.iter().zip(&yb).map(|(x, y)| x * y).sum::<f64>();
            if sy > 1e-12 * norm2.max(1e-300) {
                if pairs.len() == cfg.history {
                    pairs.remove(0);
                }
                let yy = ya.iter().zip(&gy).map(|(x, y)| x * y).sum::<f64>() + yb.iter().map(|v| v * v).sum::<f64>();
                pairs.push(Pair { sa: p.sa, sb: p.sb, gs: p.gs, ya, yb, gy, rho: 1.0 / sy, gamma: sy / yy });
            }
        }
        if norm < cfg.tol {
            grad_inf = inf_norm_xt(&rows, &mean, &r, k, dim).max(gb_inf);
            converged = true;
        } else if norm < cfg.tol * inf_bound {
            // |Σ_i x_ij r_ic| ≤ max|x| Σ_i |r_ic| is cheap; the exact
            // product is only formed every few iterations.
            let l1 = (0..k).map(|c| (0..n).map(|i| r[i * k + c].abs()).sum::<f64>()).fold(0.0, f64::max);
            if (l1 * x_max).max(gb_inf) < cfg.tol {
                grad_inf = inf_norm_xt(&rows, &mean, &r, k, dim).max(gb_inf);
                converged = true;
            } else if iterations % EXACT_CHECK_EVERY == 0 {
                grad_inf = inf_norm_xt(&rows, &mean, &r, k, dim).max(gb_inf);
                converged = grad_inf < cfg.tol;
            }
        }
        if converged || iterations >= cfg.max_iter {
            if !converged {
                grad_inf = inf_norm_xt(&rows, &mean, &r, k, dim).max(gb_inf);
            }
            break;
        }

        // Search direction `d` (coefficient and bias parts) with its image `G d`.
        let (d, gd, db) = if pairs.is_empty() {
            step *= 2.0;
            (r.iter().map(|v| -v).collect::<Vec<_>>(), gr.iter().map(|v| -v).collect::<Vec<_>>(), gb.iter().map(|v| -v).collect::<Vec<_>>())
        } else {
            step = 1.0;
            two_loop(&pairs, &r, &gr, &gb)
        };
        let slope = d.iter().zip(&gr).map(|(x, y)| x * y).sum::<f64>() + db.iter().zip(&gb).map(|(x, y)| x * y).sum::<f64>();
        let accepted = loop {
            let a_new: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + step * y).collect();
            let b_new: Vec<f64> = b.iter().zip(&db).map(|(x, y)| x + step * y).collect();
            let ga_new: Vec<f64> = ga.iter().zip(&gd).map(|(x, y)| x + step * y).collect();
            let s_new: Vec<f64> = (0..n * k).map(|idx| ga_new[idx] + b_new[idx % k]).collect();
            let l = obj.value(&s_new, &a_new, &ga_new);
            if l <= loss + cfg.armijo_c1 * step * slope {
                break Some((a_new, b_new, ga_new, s_new, l));
            }
            step *= 0.5;
            if step < 1e-30 {
                break None;
            }
        };
        let Some((a_new, b_new, ga_new, s_new, l)) = accepted else {
            grad_inf = inf_norm_xt(&rows, &mean, &r, k, dim).max(gb_inf);
            break;
        };
        if cfg.history > 0 {
            let sa: Vec<f64> = a_new.iter().zip(&a).map(|(x, y)| x - y).collect();
            let sb: Vec<f64> = b_new.iter().zip(&b).map(|(x, y)| x - y).collect();
            let gs: Vec<f64> = ga_new.iter().zip(&ga).map(|(x, y)| x - y).collect();
            pending = Some(Pending { sa, sb, gs, r: r.clone(), gr: gr.clone(), gb: gb.clone() });
        }
        a = a_new;
        b = b_new;
        ga = ga_new;
        s = s_new;
        loss = l;
        losses.push(loss);
        iterations += 1;
    }

    let fitted = weights_from_coefficients(&rows, &mean, &a, k, dim);
    let n_classes = data.n_classes();
    let mut weights = vec![0.0; n_classes * dim];
    let mut bias = vec![f64::NEG_INFINITY; n_classes];
    for (j, &c) in present.iter().enumerate() {
        weights[c * dim..(c + 1) * dim].copy_from_slice(&fitted[j * dim..(j + 1) * dim]);
        let w = &fitted[j * dim..(j + 1) * dim];
        bias[c] = b[j] - w.iter().zip(&mean).map(|(x, m)| x * m).sum::<f64>();
    }
    let model = LrModel { task: data.task, n_classes, feature_dim: dim, inverse_reg: cfg.inverse_reg, bias, weights };
    log::debug!("logistic regression: {iterations} iterations, loss {loss:.6}, converged {converged}");
    Ok((model, TrainReport { iterations, losses, converged, grad_inf_norm: grad_inf }))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dataset(task: Task, rows: &[Vec<f64>], labels: &[usize]) -> Dataset {
        let mut d = Dataset::new(task, rows[0].len(), 0);
        for (i, (x, &y)) in rows.iter().zip(labels).enumerate() {
            d.push(x.iter().map(|&v| v as f32).collect(), y, Split::Train, i as u64, "").unwrap();
        }
        d
    }

    #[test]
    fn separable_pair_is_fit() {
        let d = dataset(Task::ObstacleShape, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 2]);
        let (m, report) = train_lr(&d, &TrainConfig::default()).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]), 0);
        assert_eq!(m.predict(&[0.0, 1.0]), 2);
        assert!(report.converged, "{report:?}");
        assert!(report.grad_inf_norm < 1e-5);
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = dataset(Task::Terrain, &[vec![1.0], vec![2.0]], &[1, 1]);
        assert!(matches!(train_lr(&d, &TrainConfig::default()), Err(ClassifyError::Degenerate(1))));
    }

    #[test]
    fn weak_regularization_keeps_decreasing() {
        let d = dataset(Task::Terrain, &[vec![1.0, 0.5], vec![-1.0, 0.2], vec![0.3, -2.0]], &[0, 1, 2]);
        let cfg = TrainConfig { inverse_reg: 1e12, max_iter: 40, tol: 0.0, ..TrainConfig::default() };
        let (_, report) = train_lr(&d, &cfg).unwrap();
        assert!(report.losses.windows(2).all(|w| w[1] < w[0]), "{:?}", report.losses);
        let cfg = TrainConfig { max_iter: 80, ..cfg };
        let (_, longer) = train_lr(&d, &cfg).unwrap();
        assert!(longer.losses.last() < report.losses.last());
    }

    #[test]
    fn coefficient_descent_matches_weight_space_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0f32) as f64).collect()).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let d = dataset(Task::ObstacleShape, &rows, &labels);
        let cfg = TrainConfig { max_iter: 30, history: 0, ..TrainConfig::default() };
        let (m, report) = train_lr(&d, &cfg).unwrap();

        // Reference: the same Armijo descent written directly on (W, b) over
        // centred rows.
        let mean: Vec<f64> = (0..7).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 12.0).collect();
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
        let (mut w, mut b) = (vec![0.0; 21], vec![0.0; 3]);
        let mut step = 1.0;
        let (mut loss, mut gw, mut gb) = objective_and_gradient(&w, &b, &rows, &labels, cfg.inverse_reg);
        let mut losses = vec![loss];
        for _ in 0..report.iterations {
            let norm2: f64 = gw.iter().chain(&gb).map(|v| v * v).sum();
            step *= 2.0;
            loop {
                let wn: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - step * g).collect();
                let bn: Vec<f64> = b.iter().zip(&gb).map(|(x, g)| x - step * g).collect();
                let (l, _, _) = objective_and_gradient(&wn, &bn, &rows, &labels, cfg.inverse_reg);
                if l <= loss - cfg.armijo_c1 * step * norm2 {
                    w = wn;
                    b = bn;
                    break;
                }
                step *= 0.5;
            }
            (loss, gw, gb) = objective_and_gradient(&w, &b, &rows, &labels, cfg.inverse_reg);
            losses.push(loss);
        }
        for (x, y) in losses.iter().zip(&report.losses) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
        for (x, y) in w.iter().zip(&m.weights) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        for c in 0..3 {
            let shift: f64 = w[c * 7..(c + 1) * 7].iter().zip(&mean).map(|(x, m)| x * m).sum();
            assert!((b[c] - shift - m.bias[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn bias_shift_keeps_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = LrModel {
            task: Task::ObstacleShape,
            n_classes: 3,
            feature_dim: 4,
            inverse_reg: 0.5,
            bias: vec![0.1, -0.3, 0.2],
            weights: (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let mut shifted = m.clone();
        shifted.bias.iter_mut().for_each(|b| *b += 17.5);
        for _ in 0..50 {
            let x: Vec<f32> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_eq!(m.predict(&x), shifted.predict(&x));
        }
    }

    #[test]
    fn model_file_round_trips() {
        let m = LrModel {
            task: Task::Terrain,
            n_classes: 5,
            feature_dim: 2,
            inverse_reg: 0.5,
            bias: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            weights: (0..10).map(|i| i as f64 * 0.25 - 1.0).collect(),
        };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AWLR");
        assert_eq!(buf.len(), 4 + 2 + 1 + 4 + 8 + 8 + 15 * 8);
        assert_eq!(LrModel::read_from(buf.as_slice()).unwrap(), m);
        buf[0] = b'X';
        assert!(matches!(LrModel::read_from(buf.as_slice()), Err(ModelFormatError::BadMagic(_))));
    }
}
