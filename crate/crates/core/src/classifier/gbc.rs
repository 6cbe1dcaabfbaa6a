use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, RegressionTree, TreeParams};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "microseg-gbc/v1";

/// Keeps Newton steps finite where a class probability saturates.
const MIN_HESSIAN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbcParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples: usize,
    /// Fraction of rows drawn without replacement for each round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbcParams {
    fn default() -> Self {
        Self { rounds: 100, learning_rate: 0.1, max_depth: 3, min_samples: 2, subsample: 1.0, seed: 0 }
    }
}

impl GbcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        Ok(())
    }
}

/// Softmax boosting: one tree per class and round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbcModel {
    pub format: String,
    /// Schema of the feature vectors the model was trained on.
    pub feature_schema: String,
    pub n_features: usize,
    pub n_classes: usize,
    /// Training class frequencies, used to break exact probability ties.
    pub prior: Vec<f64>,
    pub learning_rate: f64,
    /// `trees[round][class]`
    pub trees: Vec<Vec<RegressionTree>>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_loss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    scores.iter().zip(y).map(|(s, &c)| -softmax(s)[c].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / y.len() as f64
}

fn check_matrix(x: &[Vec<f64>], n_features: Option<usize>) -> Result<usize> {
    let width = n_features.unwrap_or_else(|| x.first().map_or(0, Vec::len));
    if let Some(r) = x.iter().find(|r| r.len() != width) {
        return Err(Error::Schema { expected: format!("{width} features"), got: format!("{} features", r.len()) });
    }
    Ok(width)
}

pub fn gbc_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, feature_schema: &str, params: &GbcParams) -> Result<GbcModel> {
    params.validate()?;
    if x.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let n_features = check_matrix(x, None)?;
    if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {c} out of range for {n_classes} classes")));
    }
    let mut counts = vec![0usize; n_classes];
    y.iter().for_each(|&c| counts[c] += 1);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument("training labels contain a single class".into()));
    }
    let n = x.len();
    let tree_params = TreeParams { max_depth: params.max_depth, min_samples: params.min_samples };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut scores = vec![vec![0.0; n_classes]; n];
    let mut train_loss = vec![log_loss(&scores, y)];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let rows: Vec<usize> = if params.subsample < 1.0 {
            let k = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
            let mut r = sample(&mut rng, n, k).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let mut targets = vec![0.0; n];
            let mut weights = vec![0.0; n];
            for i in 0..n {
                let p = probs[i][k];
                let g = p - if y[i] == k { 1.0 } else { 0.0 };
                let h = (p * (1.0 - p)).max(MIN_HESSIAN);
                targets[i] = -g / h;
                weights[i] = h;
            }
            round.push(fit_tree(x, &rows, &targets, &weights, &tree_params)?);
        }
        for (s, xi) in scores.iter_mut().zip(x) {
            for (k, t) in round.iter().enumerate() {
                s[k] += params.learning_rate * t.predict(xi);
            }
        }
        train_loss.push(log_loss(&scores, y));
        trees.push(round);
    }
    Ok(GbcModel {
        format: MODEL_FORMAT.into(),
        feature_schema: feature_schema.into(),
        n_features,
        n_classes,
        prior: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub label: usize,
}

impl GbcModel {
    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Raw class scores using only the first `rounds` rounds.
    pub fn scores_at(&self, x: &[f64], rounds: usize) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Schema {
                expected: format!("{} features", self.n_features),
                got: format!("{} features", x.len()),
            });
        }
        let mut s = vec![0.0; self.n_classes];
        for round in self.trees.iter().take(rounds) {
            for (k, t) in round.iter().enumerate() {
                s[k] += self.learning_rate * t.predict(x);
            }
        }
        Ok(s)
    }

    pub fn predict_at(&self, x: &[f64], rounds: usize) -> Result<Prediction> {
        let probabilities = softmax(&self.scores_at(x, rounds)?);
        // highest probability, then highest prior, then lowest index
        let mut label = 0;
        for k in 1..self.n_classes {
            let (p, q) = (probabilities[k], probabilities[label]);
            if p > q || (p == q && self.prior[k] > self.prior[label]) {
                label = k;
            }
        }
        Ok(Prediction { probabilities, label })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.predict_at(x, self.rounds())
    }

    /// Prediction for a vector tagged with its schema.
    pub fn predict_checked(&self, schema: &str, x: &[f64]) -> Result<Prediction> {
        if schema != self.feature_schema {
            return Err(Error::Schema { expected: self.feature_schema.clone(), got: schema.into() });
        }
        self.predict(x)
    }

    /// Split gain summed per feature over all trees.
    pub fn feature_gains(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        self.trees.iter().flatten().for_each(|t| t.add_gains(&mut g));
        g
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Schema { expected: MODEL_FORMAT.into(), got: m.format });
        }
        if m.prior.len() != m.n_classes || m.trees.iter().any(|r| r.len() != m.n_classes) {
            return Err(Error::Config("model ensembles do not match the class count".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Three disjoint blobs of 20 points around (0, 0), (10, 0) and (5, 10).
    pub(crate) fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [(0.0, 0.0), (10.0, 0.0), (5.0, 10.0)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = i % 3;
            x.push(vec![centres[c].0 + rng.random_range(-2.0..2.0), centres[c].1 + rng.random_range(-2.0..2.0)]);
            y.push(c);
        }
        (x, y)
    }

    fn accuracy(m: &GbcModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
        x.iter().zip(y).filter(|(xi, &c)| m.predict(xi).unwrap().label == c).count() as f64 / y.len() as f64
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let (x, y) = blobs(1);
        let m = gbc_fit(&x, &y, 3, "s", &GbcParams { rounds: 50, ..GbcParams::default() }).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
        for w in m.train_loss[..6].windows(2) {
            assert!(w[1] < w[0]);
        }
        for (xi, &c) in x.iter().zip(&y) {
            assert!(m.predict(xi).unwrap().probabilities[c] > 0.9);
        }
    }

    #[test]
    fn null_model() {
        let x: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let y = vec![0, 1, 1, 1, 2, 2, 0];
        let m = gbc_fit(&x, &y, 3, "s", &GbcParams { rounds: 0, ..GbcParams::default() }).unwrap();
        let p = m.predict(&[3.0]).unwrap();
        for v in &p.probabilities {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(p.label, 1);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(gbc_fit(&x, &[1, 1], 3, "s", &GbcParams::default()).is_err());
        assert!(gbc_fit(&x, &[1, 3], 3, "s", &GbcParams::default()).is_err());
    }

    #[test]
    fn duplicated_samples_give_the_same_model() {
        let (x, y) = blobs(2);
        let p = GbcParams { rounds: 20, ..GbcParams::default() };
        let a = gbc_fit(&x, &y, 3, "s", &p).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
        let y2: Vec<usize> = y.iter().flat_map(|&c| [c, c]).collect();
        let b = gbc_fit(&x2, &y2, 3, "s", &p).unwrap();
        fn same(a: &super::super::tree::Node, b: &super::super::tree::Node) -> bool {
            use super::super::tree::Node::*;
            match (a, b) {
                (Leaf { value: u }, Leaf { value: v }) => (u - v).abs() < 1e-9 * (1.0 + u.abs()),
                (Split { feature: f, threshold: t, left: l, right: r, .. }, Split { feature: g, threshold: s, left: l2, right: r2, .. }) => {
                    f == g && t == s && same(l, l2) && same(r, r2)
                }
                _ => false,
            }
        }
        for (ra, rb) in a.trees.iter().zip(&b.trees) {
            for (ta, tb) in ra.iter().zip(rb) {
                assert!(same(&ta.root, &tb.root));
            }
        }
    }

    #[test]
    fn probabilities_are_distributions_and_schema_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| normal.sample(&mut rng)).collect()).collect();
        let y: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
        let m = gbc_fit(&x, &y, 3, "s1", &GbcParams { rounds: 30, ..GbcParams::default() }).unwrap();
        for _ in 0..200 {
            let q: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng) * 5.0).collect();
            let p = m.predict(&q).unwrap();
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.probabilities.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(m.predict(&[0.0; 3]).is_err());
        assert!(m.predict_checked("s2", &[0.0; 4]).is_err());
        assert!(m.predict_checked("s1", &[0.0; 4]).is_ok());
    }

    #[test]
    fn reproducible_and_serializable() {
        let (x, y) = blobs(3);
        let p = GbcParams { rounds: 15, subsample: 0.7, seed: 4, ..GbcParams::default() };
        let a = gbc_fit(&x, &y, 3, "s", &p).unwrap();
        let b = gbc_fit(&x, &y, 3, "s", &p).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = GbcModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        let c = gbc_fit(&x, &y, 3, "s", &GbcParams { seed: 5, ..p }).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }
}
