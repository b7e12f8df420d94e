//! Synthetic federated datasets with Dirichlet label skew.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::task::TaskKind;
use crate::error::{Error, Result};
use crate::hash::{stream_rng, Stream};

/// Client id used for the shared held-out test set.
pub const TEST_SET_ID: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes(Vec<u32>),
    /// Real-valued regression targets (quadratic task).
    Targets(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientData {
    pub client_id: u32,
    /// Row-major `len() × features`.
    pub features: Vec<f64>,
    pub num_features: usize,
    pub labels: Labels,
}

impl ClientData {
    pub fn len(&self) -> usize {
        match &self.labels {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.num_features..(r + 1) * self.num_features]
    }

    /// Class labels; empty for regression data.
    pub fn classes(&self) -> &[u32] {
        match &self.labels {
            Labels::Classes(c) => c,
            Labels::Targets(_) => &[],
        }
    }

    pub fn targets(&self) -> &[f64] {
        match &self.labels {
            Labels::Targets(t) => t,
            Labels::Classes(_) => &[],
        }
    }

    /// Per-class counts over `classes` classes.
    pub fn label_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for &y in self.classes() {
            h[y as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub kind: TaskKind,
    pub clients: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub features: usize,
    pub classes: usize,
    /// Dirichlet concentration of per-client label distributions.
    pub concentration: f64,
    /// Scale of class centers relative to unit within-class noise.
    pub separation: f64,
    /// Target noise for the quadratic task.
    pub noise: f64,
    /// Per-client test shard size; `None` keeps only the shared test set.
    pub client_test_samples: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub clients: Vec<ClientData>,
    pub test: ClientData,
    pub client_tests: Option<Vec<ClientData>>,
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Symmetric Dirichlet sample via normalized Gamma draws.
pub fn sample_dirichlet(rng: &mut impl Rng, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration checked positive");
    let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        // Every draw underflowed: put all mass on one class.
        let mut one_hot = vec![0.0; dim];
        one_hot[rng.random_range(0..dim)] = 1.0;
        one_hot
    }
}

fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

struct Generator {
    kind: TaskKind,
    features: usize,
    centers: Vec<Vec<f64>>,
    w_true: Vec<f64>,
    scales: Vec<f64>,
    noise: f64,
}

impl Generator {
    fn new(spec: &DataSpec) -> Self {
        let mut rng = stream_rng(spec.seed, Stream::Data, u64::MAX, 0);
        let p = spec.features;
        let centers = (0..spec.classes)
            .map(|_| (0..p).map(|_| spec.separation * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let w_true = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let scales = (0..p)
            .map(|j| if p > 1 { 0.5 + j as f64 / (p - 1) as f64 } else { 1.0 })
            .collect();
        Generator {
            kind: spec.kind,
            features: p,
            centers,
            w_true,
            scales,
            noise: spec.noise,
        }
    }

    fn classification(&self, id: u32, labels: Vec<u32>, rng: &mut impl Rng) -> ClientData {
        let mut features = Vec::with_capacity(labels.len() * self.features);
        for &y in &labels {
            for mu in &self.centers[y as usize] {
                features.push(f32_round(mu + rng.sample::<f64, _>(StandardNormal)));
            }
        }
        ClientData {
            client_id: id,
            features,
            num_features: self.features,
            labels: Labels::Classes(labels),
        }
    }

    fn regression(&self, id: u32, m: usize, rng: &mut impl Rng) -> ClientData {
        let mut features = Vec::with_capacity(m * self.features);
        let mut targets = Vec::with_capacity(m);
        for _ in 0..m {
            let x: Vec<f64> = self
                .scales
                .iter()
                .map(|s| f32_round(s * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let y = x.iter().zip(&self.w_true).map(|(a, b)| a * b).sum::<f64>()
                + self.noise * rng.sample::<f64, _>(StandardNormal);
            features.extend_from_slice(&x);
            targets.push(f32_round(y));
        }
        ClientData {
            client_id: id,
            features,
            num_features: self.features,
            labels: Labels::Targets(targets),
        }
    }

    fn make(&self, id: u32, m: usize, probs: Option<&[f64]>, balanced: bool, rng: &mut impl Rng) -> ClientData {
        if self.kind == TaskKind::Quadratic {
            return self.regression(id, m, rng);
        }
        let c = self.centers.len();
        let labels: Vec<u32> = (0..m)
            .map(|r| match (balanced, probs) {
                (true, _) | (false, None) => (r % c) as u32,
                (false, Some(p)) => sample_categorical(rng, p) as u32,
            })
            .collect();
        self.classification(id, labels, rng)
    }
}

pub fn generate_federated_data(spec: &DataSpec) -> Result<FederatedData> {
    if spec.clients == 0 {
        return Err(Error::config("topology.nodes", "need at least one client"));
    }
    if spec.samples_per_client == 0 {
        return Err(Error::config("task.samples_per_client", "must be at least 1"));
    }
    if spec.test_samples == 0 {
        return Err(Error::config("task.test_samples", "must be at least 1"));
    }
    if spec.client_test_samples == Some(0) {
        return Err(Error::config("task.client_test_samples", "must be at least 1"));
    }
    if !(spec.concentration > 0.0 && spec.concentration.is_finite()) {
        return Err(Error::config("task.concentration", "must be a finite positive number"));
    }
    if spec.features == 0 {
        return Err(Error::config("task.features", "must be at least 1"));
    }
    if spec.kind != TaskKind::Quadratic && spec.classes < 2 {
        return Err(Error::config("task.classes", "classification needs at least 2 classes"));
    }
    let generator = Generator::new(spec);
    let mut clients = Vec::with_capacity(spec.clients);
    let mut client_tests = spec.client_test_samples.map(|_| Vec::with_capacity(spec.clients));
    for i in 0..spec.clients {
        let mut rng = stream_rng(spec.seed, Stream::Data, i as u64, 0);
        let probs = (spec.kind != TaskKind::Quadratic).then(|| sample_dirichlet(&mut rng, spec.concentration, spec.classes));
        clients.push(generator.make(i as u32, spec.samples_per_client, probs.as_deref(), false, &mut rng));
        if let (Some(tests), Some(m)) = (client_tests.as_mut(), spec.client_test_samples) {
            let mut rng = stream_rng(spec.seed, Stream::Data, i as u64, 1);
            tests.push(generator.make(i as u32, m, probs.as_deref(), false, &mut rng));
        }
    }
    let mut rng = stream_rng(spec.seed, Stream::Data, u64::MAX, 1);
    let test = generator.make(TEST_SET_ID, spec.test_samples, None, true, &mut rng);
    Ok(FederatedData {
        clients,
        test,
        client_tests,
    })
}
