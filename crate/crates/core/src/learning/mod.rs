//! Desk-scale learning tasks, local SGD and test-error evaluation.

pub mod data;
pub mod fixture;
pub mod task;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub use data::{generate_federated_data, ClientData, DataSpec, FederatedData, Labels};
pub use task::{Task, TaskKind};

use crate::error::{Error, Result};
use crate::hash::{stream_rng, Stream};
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Plain minibatch SGD on one client's data. Each epoch visits every row
/// once in an order drawn from `rng`; a batch covering the whole dataset is
/// processed in natural row order.
pub fn local_update(
    task: &Task,
    w: &ParamVector,
    data: &ClientData,
    sgd: &SgdSettings,
    rng: &mut impl Rng,
) -> Result<ParamVector> {
    if !(sgd.lr >= 0.0 && sgd.lr.is_finite()) {
        return Err(Error::config("run.lr", "learning rate must be finite and non-negative"));
    }
    if sgd.epochs == 0 || sgd.batch_size == 0 {
        return Err(Error::config("run.local_epochs", "epochs and batch size must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::config("task.samples_per_client", "client has no data"));
    }
    let client = data.client_id as usize;
    let mut w = w.clone();
    let m = data.len();
    let mut order: Vec<usize> = (0..m).collect();
    for _ in 0..sgd.epochs {
        if sgd.batch_size < m {
            order.shuffle(rng);
        }
        for batch in order.chunks(sgd.batch_size) {
            let (loss, grad) = task.loss_and_grad(&w, data, Some(batch));
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Divergence {
                    client,
                    message: format!("non-finite loss {loss}"),
                });
            }
            w.axpy(-sgd.lr, &grad);
        }
    }
    if !w.is_finite() {
        return Err(Error::Divergence {
            client,
            message: "non-finite parameters after local update".into(),
        });
    }
    Ok(w)
}

/// Shared initial model. Linear tasks start at zero; the MLP draws scaled
/// Gaussian weights from `seed`.
pub fn initial_model(task: &Task, seed: u64) -> ParamVector {
    let mut w = vec![0.0; task.dim()];
    if task.kind == TaskKind::TinyMlp {
        let mut rng = stream_rng(seed, Stream::Init, 0, 0);
        let (p, h, c) = (task.features, task.hidden, task.classes);
        let s1 = 1.0 / (p as f64).sqrt();
        let s2 = 1.0 / (h as f64).sqrt();
        for v in &mut w[..h * p] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let o_w2 = h * p + h;
        for v in &mut w[o_w2..o_w2 + c * h] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ParamVector::new(w)
}

/// Closed-form facts about the global least-squares objective.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    pub mu: f64,
    pub l_smooth: f64,
    pub w_star: ParamVector,
    pub f_star: f64,
    pub f_init: f64,
    pooled: ClientData,
    task: Task,
}

impl QuadraticOracle {
    pub fn new(task: &Task, clients: &[ClientData], init: &ParamVector) -> Result<Self> {
        if task.kind != TaskKind::Quadratic {
            return Err(Error::config("task.kind", "quadratic oracle needs the quadratic task"));
        }
        let p = task.features;
        let mut pooled = ClientData {
            client_id: data::TEST_SET_ID,
            features: Vec::new(),
            num_features: p,
            labels: Labels::Targets(Vec::new()),
        };
        let mut targets = Vec::new();
        for c in clients {
            pooled.features.extend_from_slice(&c.features);
            targets.extend_from_slice(c.targets());
        }
        pooled.labels = Labels::Targets(targets);
        let n = pooled.len() as f64;
        let x = DMatrix::from_row_slice(pooled.len(), p, &pooled.features);
        let y = DVector::from_column_slice(pooled.targets());
        let hessian = x.transpose() * &x / n + DMatrix::identity(p, p) * task.l2;
        let rhs = x.transpose() * y / n;
        let eig = hessian.clone().symmetric_eigen();
        let mu = eig.eigenvalues.min();
        let l_smooth = eig.eigenvalues.max();
        if !(mu > 0.0) {
            return Err(Error::config("task", "quadratic objective is not strongly convex"));
        }
        let solution = hessian
            .cholesky()
            .ok_or_else(|| Error::Invariant("Hessian is not positive definite".into()))?
            .solve(&rhs);
        let mut w_star = vec![0.0; task.dim()];
        w_star[..p].copy_from_slice(solution.as_slice());
        let w_star = ParamVector::new(w_star);
        let f_star = task.loss(&w_star, &pooled);
        let f_init = task.loss(init, &pooled);
        Ok(QuadraticOracle {
            mu,
            l_smooth,
            w_star,
            f_star,
            f_init,
            pooled,
            task: *task,
        })
    }

    pub fn objective(&self, w: &ParamVector) -> f64 {
        self.task.loss(w, &self.pooled)
    }

    pub fn gradient(&self, w: &ParamVector) -> ParamVector {
        self.task.loss_and_grad(w, &self.pooled, None).1
    }

    /// `(F(w) − F*) / (F(w₀) − F*)`
    pub fn normalized_suboptimality(&self, w: &ParamVector) -> f64 {
        (self.objective(w) - self.f_star) / (self.f_init - self.f_star)
    }
}

/// Per-node test metric: misclassification rate for classifiers, normalized
/// suboptimality for the quadratic task.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Classification {
        task: Task,
        test: ClientData,
        client_tests: Option<Vec<ClientData>>,
    },
    Quadratic(Box<QuadraticOracle>),
}

impl Evaluator {
    pub fn new(task: &Task, data: &FederatedData, init: &ParamVector, per_client: bool) -> Result<Self> {
        if task.kind == TaskKind::Quadratic {
            return Ok(Evaluator::Quadratic(Box::new(QuadraticOracle::new(task, &data.clients, init)?)));
        }
        if per_client && data.client_tests.is_none() {
            return Err(Error::config("run.per_client_test", "per-client shards were not generated"));
        }
        Ok(Evaluator::Classification {
            task: *task,
            test: data.test.clone(),
            client_tests: if per_client { data.client_tests.clone() } else { None },
        })
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Evaluator::Classification { .. } => "test_error_rate",
            Evaluator::Quadratic(_) => "normalized_suboptimality",
        }
    }

    pub fn evaluate(&self, node: usize, w: &ParamVector) -> f64 {
        match self {
            Evaluator::Classification { task, test, client_tests } => {
                let set = client_tests.as_ref().map_or(test, |shards| &shards[node]);
                test_error_rate(task, w, set)
            }
            Evaluator::Quadratic(oracle) => oracle.normalized_suboptimality(w),
        }
    }
}

/// `1 − accuracy` on a labelled set.
pub fn test_error_rate(task: &Task, w: &ParamVector, test: &ClientData) -> f64 {
    task.error_rate(w, test)
}
