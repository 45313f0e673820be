use std::collections::VecDeque;
use std::time::Instant;

use super::config::{DatasetSpec, ExperimentConfig, Metric};
use crate::data::{self, BatchStream, ChannelMeans, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::optim::make_optimizer;

/// Number of recent per-layer gradient norm vectors kept for diagnostics.
pub const NORM_HISTORY: usize = 10;

/// One checkpoint of one run.
///
/// `train_loss` is the mean minibatch loss over the iterations since the
/// previous checkpoint. `test_metric` is error % or accuracy % depending on
/// the config. `wall_ms` is informational and excluded from equality.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub seed: u64,
    pub iteration: u64,
    pub train_loss: f64,
    pub test_metric: f64,
    pub wall_ms: f64,
}

impl PartialEq for MetricsRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.iteration == other.iteration
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.test_metric.to_bits() == other.test_metric.to_bits()
    }
}

/// Why and where a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct AbortDiagnostic {
    pub seed: u64,
    pub iteration: u64,
    pub message: String,
    /// Per-layer gradient norms of the last few iterations, oldest first.
    pub recent_layer_norms: Vec<Vec<f64>>,
}

impl AbortDiagnostic {
    pub fn to_error(&self) -> Error {
        Error::Numeric {
            iteration: Some(self.iteration),
            message: format!(
                "seed {}: {}; recent layer gradient norms {:?}",
                self.seed, self.message, self.recent_layer_norms
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    /// Loss of the very first minibatch at the initial parameters.
    pub initial_train_loss: f64,
    pub records: Vec<MetricsRecord>,
    pub abort: Option<AbortDiagnostic>,
}

/// Loads train and test splits for `cfg`, applying size limits and, for
/// CIFAR-10, channel-mean subtraction.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = match &cfg.dataset {
        DatasetSpec::Mnist { dir } => data::load_mnist_dir(dir)?,
        DatasetSpec::Cifar10 { dir } => {
            let (mut train, mut test) = data::load_cifar10_dir(dir)?;
            let means = ChannelMeans::from_train(&train);
            means.apply(&mut train);
            means.apply(&mut test);
            (train, test)
        }
        &DatasetSpec::Blobs {
            n,
            test_n,
            classes,
            dim,
            seed,
            separation,
        } => {
            // one draw split in two keeps both halves class-balanced
            let all = data::synth_blobs_with_separation(seed, n + test_n, classes, dim, separation)?;
            let (x, labels) = all.slice(0, n);
            let train = Dataset::new(x, labels.to_vec(), classes, Split::Train)?;
            let (x, labels) = all.slice(n, n + test_n);
            let test = Dataset::new(x, labels.to_vec(), classes, Split::Test)?;
            (train, test)
        }
    };
    if let Some(n) = cfg.train_limit {
        train = train.truncate(n);
    }
    if let Some(n) = cfg.test_limit {
        test = test.truncate(n);
    }
    let want = cfg.arch.input_shape();
    if train.sample_shape() != want.as_slice() {
        return Err(Error::Config(format!(
            "dataset `{}` samples have shape {:?} but `{}` expects {:?}",
            cfg.dataset.name(),
            train.sample_shape(),
            cfg.arch,
            want
        )));
    }
    Ok((train, test))
}

/// Error or accuracy percentage of `net` on `ds`, evaluated in chunks of
/// `chunk` samples. Takes the network by shared reference, so evaluation
/// cannot touch training state.
pub fn evaluate(net: &Network, ds: &Dataset, chunk: usize, metric: Metric) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut wrong = 0usize;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + chunk).min(ds.len());
        let (x, labels) = ds.slice(start, end);
        let predicted = net.predict(&x)?.argmax_rows();
        wrong += predicted.iter().zip(labels).filter(|(p, l)| p != l).count();
        start = end;
    }
    let error = 100.0 * wrong as f64 / ds.len() as f64;
    Ok(match metric {
        Metric::ErrorPercent => error,
        Metric::AccuracyPercent => 100.0 - error,
    })
}

/// Loads data and trains one seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let (train, test) = load_datasets(cfg)?;
    run_on(cfg, seed, &train, &test)
}

/// Trains one seed on already loaded data.
///
/// The seed fixes both the weight initialization and the minibatch order.
/// A non-finite loss or gradient stops the run; the outcome then carries an
/// [`AbortDiagnostic`] and the checkpoints reached so far.
pub fn run_on(cfg: &ExperimentConfig, seed: u64, train: &Dataset, test: &Dataset) -> Result<RunOutcome> {
    if let Some(w) = cfg.baseline_rate_warning() {
        log::warn!("{w}");
    }
    let mut net = cfg.arch.build(seed)?;
    if net.output_width() != train.num_classes() {
        return Err(Error::Config(format!(
            "`{}` has {} outputs but the dataset has {} classes",
            cfg.arch,
            net.output_width(),
            train.num_classes()
        )));
    }
    let mut opt = make_optimizer(cfg.optimizer, cfg.hyperparams, cfg.layerwise)?;
    let mut stream = BatchStream::new(train, cfg.batch_size, seed);
    let mut norms: VecDeque<Vec<f64>> = VecDeque::with_capacity(NORM_HISTORY);
    let mut records = Vec::with_capacity(cfg.checkpoints.len());
    let mut next_checkpoint = 0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut initial_train_loss = f64::NAN;
    let started = Instant::now();

    let abort = |k: u64, err: Error, norms: &VecDeque<Vec<f64>>| AbortDiagnostic {
        seed,
        iteration: k,
        message: err.to_string(),
        recent_layer_norms: norms.iter().cloned().collect(),
    };

    for k in 1..=cfg.max_iterations {
        let (x, y) = stream.next_batch();
        // NAG evaluates the gradient at the lookahead point
        let saved = if opt.needs_lookahead() {
            let current = net.params();
            net.set_params(opt.lookahead(&current))?;
            Some(current)
        } else {
            None
        };
        let evaluated = net.forward(&x, &y).and_then(|(loss, cache)| Ok((loss, net.backward(&cache, &y)?)));
        if let Some(current) = saved {
            net.set_params(current)?;
        }
        let (loss, grads) = match evaluated {
            Ok(v) => v,
            Err(e) => {
                return Ok(RunOutcome {
                    seed,
                    initial_train_loss,
                    records,
                    abort: Some(abort(k, e, &norms)),
                })
            }
        };
        if k == 1 {
            initial_train_loss = loss;
        }
        if norms.len() == NORM_HISTORY {
            norms.pop_front();
        }
        norms.push_back(grads.layer_norms());
        let rate = cfg.schedule.rate(k - 1);
        if let Err(e) = opt.step(&mut net.params_mut(), &grads, rate) {
            return Ok(RunOutcome {
                seed,
                initial_train_loss,
                records,
                abort: Some(abort(k, e, &norms)),
            });
        }
        loss_sum += loss;
        loss_count += 1;
        if cfg.checkpoints.get(next_checkpoint) == Some(&k) {
            let test_metric = evaluate(&net, test, cfg.eval_batch, cfg.metric)?;
            records.push(MetricsRecord {
                seed,
                iteration: k,
                train_loss: loss_sum / loss_count as f64,
                test_metric,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            log::info!(
                "seed {seed} iter {k}: train loss {:.4}, test {:.3}%",
                loss_sum / loss_count as f64,
                test_metric
            );
            loss_sum = 0.0;
            loss_count = 0;
            next_checkpoint += 1;
        }
    }
    Ok(RunOutcome {
        seed,
        initial_train_loss,
        records,
        abort: None,
    })
}
