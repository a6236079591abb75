//! Inference learners, each small enough to own: ridge regression solved
//! through the normal equations, k-nearest-neighbor averaging, and a
//! one-hidden-layer perceptron trained by full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Which learner to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    RidgeRegression,
    KNearestAverage,
    MultiLayerPerceptron,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::RidgeRegression,
        ModelKind::KNearestAverage,
        ModelKind::MultiLayerPerceptron,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::RidgeRegression => "ridge",
            ModelKind::KNearestAverage => "knn",
            ModelKind::MultiLayerPerceptron => "mlp",
        }
    }
}

/// Learner settings; the defaults are the ones every attack run uses.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    pub ridge_alpha: f64,
    pub knn_neighbors: usize,
    pub mlp_hidden: usize,
    pub mlp_learning_rate: f64,
    pub mlp_epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            ridge_alpha: 1e-3,
            knn_neighbors: 5,
            mlp_hidden: 64,
            mlp_learning_rate: 0.1,
            mlp_epochs: 300,
        }
    }
}

/// Feature/label matrix pair; rows are samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn label_dim(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }
}

/// Per-column z-score statistics fitted on the training features.
#[derive(Debug, Clone)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// A trained, immutable inference model.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    pub kind: ModelKind,
    normalizer: Normalizer,
    label_dim: usize,
    inner: ModelInner,
}

#[derive(Debug, Clone)]
enum ModelInner {
    Ridge {
        /// (feature_dim x label_dim) weights on normalized features.
        weights: Vec<Vec<f64>>,
        intercept: Vec<f64>,
    },
    Knn {
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        k: usize,
    },
    Mlp(MlpNet),
}

/// Train `kind` on `set`; features are z-scored with training statistics.
pub fn train_model(
    kind: ModelKind,
    set: &TrainingSet,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<InferenceModel> {
    if set.is_empty() {
        return Err(Error::EmptyTrainingSet("no training samples".into()));
    }
    if set.features.len() != set.labels.len() {
        return Err(Error::LengthMismatch {
            left: set.features.len(),
            right: set.labels.len(),
        });
    }
    let normalizer = Normalizer::fit(&set.features);
    let normed: Vec<Vec<f64>> = set.features.iter().map(|r| normalizer.apply(r)).collect();
    let label_dim = set.label_dim();
    let inner = match kind {
        ModelKind::RidgeRegression => {
            let (weights, intercept) = fit_ridge(&normed, &set.labels, hyper.ridge_alpha)?;
            ModelInner::Ridge { weights, intercept }
        }
        ModelKind::KNearestAverage => ModelInner::Knn {
            features: normed,
            labels: set.labels.clone(),
            k: hyper.knn_neighbors.clamp(1, set.len()),
        },
        ModelKind::MultiLayerPerceptron => {
            let mut net = MlpNet::new(
                set.feature_dim(),
                hyper.mlp_hidden,
                label_dim,
                &set.labels,
                seed,
            );
            net.fit(&normed, set, hyper)?;
            ModelInner::Mlp(net)
        }
    };
    Ok(InferenceModel {
        kind,
        normalizer,
        label_dim,
        inner,
    })
}

impl InferenceModel {
    pub fn feature_dim(&self) -> usize {
        self.normalizer.mean.len()
    }

    pub fn label_dim(&self) -> usize {
        self.label_dim
    }

    /// Raw prediction; arity-checked, not clamped.
    pub fn predict(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.feature_dim() {
            return Err(Error::LengthMismatch {
                left: query.len(),
                right: self.feature_dim(),
            });
        }
        let x = self.normalizer.apply(query);
        Ok(match &self.inner {
            ModelInner::Ridge { weights, intercept } => {
                let mut out = intercept.clone();
                for (xi, w_row) in x.iter().zip(weights) {
                    for (o, w) in out.iter_mut().zip(w_row) {
                        *o += xi * w;
                    }
                }
                out
            }
            ModelInner::Knn {
                features,
                labels,
                k,
            } => {
                let mut order: Vec<usize> = (0..features.len()).collect();
                let dist = |row: &[f64]| -> f64 {
                    row.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum()
                };
                order.sort_by(|&i, &j| {
                    dist(&features[i])
                        .partial_cmp(&dist(&features[j]))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(i.cmp(&j))
                });
                let mut out = vec![0.0; self.label_dim];
                for &i in order.iter().take(*k) {
                    for (o, v) in out.iter_mut().zip(&labels[i]) {
                        *o += v;
                    }
                }
                for o in out.iter_mut() {
                    *o /= *k as f64;
                }
                out
            }
            ModelInner::Mlp(net) => net.predict(&x),
        })
    }
}

/// Solve `(XᵀX + αI) W = XᵀY` on centered labels; the intercept soaks up
/// the label means.
fn fit_ridge(
    features: &[Vec<f64>],
    labels: &[Vec<f64>],
    alpha: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if alpha < 0.0 {
        return Err(Error::InvalidConfig("ridge alpha must be >= 0".into()));
    }
    let n = features.len();
    let d = features.first().map_or(0, Vec::len);
    let m = labels.first().map_or(0, Vec::len);
    let mut label_mean = vec![0.0; m];
    for row in labels {
        for (s, v) in label_mean.iter_mut().zip(row) {
            *s += v;
        }
    }
    for s in label_mean.iter_mut() {
        *s /= n as f64;
    }

    // gram matrix and cross products
    let mut gram = vec![vec![0.0; d]; d];
    let mut cross = vec![vec![0.0; m]; d];
    for (x, y) in features.iter().zip(labels) {
        for i in 0..d {
            for j in i..d {
                gram[i][j] += x[i] * x[j];
            }
            for (c, (yv, ym)) in cross[i].iter_mut().zip(y.iter().zip(&label_mean)) {
                *c += x[i] * (yv - ym);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] += alpha;
    }

    // Gaussian elimination with partial pivoting on [gram | cross]
    let scale = gram
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for col in 0..d {
        let (pivot_row, pivot) = (col..d)
            .map(|r| (r, gram[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or((col, 0.0));
        if pivot <= 1e-12 * scale {
            return Err(Error::SingularSystem(
                "normal system is singular; use a ridge strength alpha > 0".into(),
            ));
        }
        gram.swap(col, pivot_row);
        cross.swap(col, pivot_row);
        for r in col + 1..d {
            let f = gram[r][col] / gram[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..d {
                gram[r][c] -= f * gram[col][c];
            }
            for c in 0..m {
                cross[r][c] -= f * cross[col][c];
            }
        }
    }
    let mut weights = vec![vec![0.0; m]; d];
    for row in (0..d).rev() {
        for c in 0..m {
            let mut v = cross[row][c];
            for col in row + 1..d {
                v -= gram[row][col] * weights[col][c];
            }
            weights[row][c] = v / gram[row][row];
        }
    }
    Ok((weights, label_mean))
}

/// One hidden tanh layer, linear output, trained full-batch. Labels are
/// standardized internally so one learning rate works across tap scales.
#[derive(Debug, Clone)]
pub struct MlpNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// `input_dim * hidden_dim`, row i holding weights out of input i.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden_dim * output_dim`, row h holding weights out of hidden h.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    label_mean: Vec<f64>,
    label_std: Vec<f64>,
}

impl MlpNet {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        labels: &[Vec<f64>],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let lim2 = (6.0 / (hidden_dim + output_dim) as f64).sqrt();
        let n = labels.len().max(1) as f64;
        let mut label_mean = vec![0.0; output_dim];
        for row in labels {
            for (s, v) in label_mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        for s in label_mean.iter_mut() {
            *s /= n;
        }
        let mut label_var = vec![0.0; output_dim];
        for row in labels {
            for ((s, v), m) in label_var.iter_mut().zip(row).zip(&label_mean) {
                *s += (v - m) * (v - m);
            }
        }
        let label_std = label_var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        MlpNet {
            input_dim,
            hidden_dim,
            output_dim,
            w1: (0..input_dim * hidden_dim)
                .map(|_| rng.gen_range(-lim1..lim1))
                .collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..hidden_dim * output_dim)
                .map(|_| rng.gen_range(-lim2..lim2))
                .collect(),
            b2: vec![0.0; output_dim],
            label_mean,
            label_std,
        }
    }

    fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.label_mean)
            .zip(&self.label_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hidden = self.b1.clone();
        for (i, xi) in x.iter().enumerate() {
            let row = &self.w1[i * self.hidden_dim..(i + 1) * self.hidden_dim];
            for (h, w) in hidden.iter_mut().zip(row) {
                *h += xi * w;
            }
        }
        for h in hidden.iter_mut() {
            *h = h.tanh();
        }
        let mut out = self.b2.clone();
        for (h, hv) in hidden.iter().enumerate() {
            let row = &self.w2[h * self.output_dim..(h + 1) * self.output_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += hv * w;
            }
        }
        (hidden, out)
    }

    /// Prediction in label units (query already feature-normalized).
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let (_, out) = self.forward(x);
        out.iter()
            .zip(&self.label_mean)
            .zip(&self.label_std)
            .map(|((o, m), s)| o * s + m)
            .collect()
    }

    /// Mean squared-error loss (halved) and its gradient on standardized
    /// labels, for the whole batch. Exposed so the analytic gradient can be
    /// checked against finite differences.
    pub fn loss_and_grad(&self, features: &[Vec<f64>], std_labels: &[Vec<f64>]) -> (f64, MlpGrads) {
        let batch = features.len() as f64;
        let mut grads = MlpGrads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut loss = 0.0;
        for (x, y) in features.iter().zip(std_labels) {
            let (hidden, out) = self.forward(x);
            let dout: Vec<f64> = out
                .iter()
                .zip(y)
                .map(|(o, yv)| {
                    let e = o - yv;
                    loss += 0.5 * e * e;
                    e / batch
                })
                .collect();
            let mut dhidden = vec![0.0; self.hidden_dim];
            for (h, hv) in hidden.iter().enumerate() {
                let row = h * self.output_dim;
                let mut acc = 0.0;
                for (o, d) in dout.iter().enumerate() {
                    grads.w2[row + o] += hv * d;
                    acc += self.w2[row + o] * d;
                }
                dhidden[h] = acc * (1.0 - hv * hv);
            }
            for (g, d) in grads.b2.iter_mut().zip(&dout) {
                *g += d;
            }
            for (i, xi) in x.iter().enumerate() {
                let row = i * self.hidden_dim;
                for (h, d) in dhidden.iter().enumerate() {
                    grads.w1[row + h] += xi * d;
                }
            }
            for (g, d) in grads.b1.iter_mut().zip(&dhidden) {
                *g += d;
            }
        }
        (loss / batch, grads)
    }

    fn fit(&mut self, normed: &[Vec<f64>], set: &TrainingSet, hyper: &Hyperparams) -> Result<()> {
        let std_labels: Vec<Vec<f64>> = set.labels.iter().map(|y| self.standardize(y)).collect();
        for epoch in 0..hyper.mlp_epochs {
            let (loss, grads) = self.loss_and_grad(normed, &std_labels);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "loss became non-finite at epoch {epoch}; lower the learning rate"
                )));
            }
            let lr = hyper.mlp_learning_rate;
            for (w, g) in self.w1.iter_mut().zip(&grads.w1) {
                *w -= lr * g;
            }
            for (w, g) in self.b1.iter_mut().zip(&grads.b1) {
                *w -= lr * g;
            }
            for (w, g) in self.w2.iter_mut().zip(&grads.w2) {
                *w -= lr * g;
            }
            for (w, g) in self.b2.iter_mut().zip(&grads.b2) {
                *w -= lr * g;
            }
        }
        Ok(())
    }
}

/// Gradient of [`MlpNet::loss_and_grad`], in parameter layout order.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}
