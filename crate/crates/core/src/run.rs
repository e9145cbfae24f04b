//! A complete training run: model construction, training, final evaluation,
//! and the artifacts written to the output directory.

use std::path::Path;

use crate::analysis::report::{emit_run_report, RunSummary, CHECKPOINT_FILE};
use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;
use crate::tensor::Scalar;
use crate::train::{check_compatible, evaluate, train, EpochMetrics};

/// Runs `f` on a pool of `threads` workers. Results never depend on the
/// count; it only bounds the parallelism of evaluation.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub struct RunResult<T> {
    pub model: Seq2SeqModel<T>,
    pub history: Vec<EpochMetrics>,
    pub summary: RunSummary,
}

/// Trains a model on `dataset` as described by `config`. Without `resume`
/// the model is freshly initialized from the config seed.
pub fn train_run<T: Scalar>(
    config: &RunConfig,
    dataset: &Dataset,
    resume: Option<Seq2SeqModel<T>>,
    on_epoch: impl FnMut(&EpochMetrics) + Send,
) -> Result<RunResult<T>> {
    let model_config = config.model_config()?;
    let train_config = config.train_config()?;
    let mut model = match resume {
        Some(m) => {
            if m.config() != &model_config {
                return Err(Error::Checkpoint(format!(
                    "resumed model has V={} H={}, the run expects V={} H={}",
                    m.config().vocab_size,
                    m.config().hidden_size,
                    model_config.vocab_size,
                    model_config.hidden_size
                )));
            }
            m
        }
        None => Seq2SeqModel::new(model_config, config.seed)?,
    };
    check_compatible(&model, dataset)?;
    with_threads(config.threads, move || {
        let outcome = train(&mut model, dataset, &train_config, on_epoch)?;
        let summary = RunSummary {
            best_epoch: outcome.best_epoch,
            stop_epoch: outcome.history.last().map_or(0, |m| m.epoch),
            stop: outcome.stop,
            parameters: model.param_count(),
            train: evaluate(&model, &dataset.train)?,
            val: evaluate(&model, &dataset.val)?,
            test: if dataset.test.is_empty() {
                None
            } else {
                Some(evaluate(&model, &dataset.test)?)
            },
            config: config.clone(),
        };
        Ok(RunResult {
            model,
            history: outcome.history,
            summary,
        })
    })?
}

/// `model.ckpt`, `metrics.csv` and `summary.json` under `dir`.
pub fn write_run<T: Scalar>(dir: &Path, run: &RunResult<T>) -> Result<()> {
    emit_run_report(dir, &run.history, &run.summary)?;
    save_checkpoint(
        &run.model,
        run.summary.config.seed,
        run.summary.best_epoch,
        &dir.join(CHECKPOINT_FILE),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::report::{METRICS_FILE, SUMMARY_FILE};
    use crate::data::{make_dataset, SplitSizes};
    use crate::tasks::TaskKind;

    fn tiny_config() -> RunConfig {
        RunConfig {
            task: Some(TaskKind::Reverse),
            vocab_size: Some(5),
            length: Some(3),
            hidden_size: 6,
            embed_dim: 4,
            batch_size: 8,
            max_epochs: 3,
            record_wall_time: false,
            ..Default::default()
        }
    }

    #[test]
    fn writes_all_artifacts_deterministically() {
        let cfg = tiny_config();
        let ds = make_dataset(cfg.task_spec().unwrap(), SplitSizes::new(20, 6, 6), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let read = |sub: &str| -> Vec<Vec<u8>> {
            [METRICS_FILE, SUMMARY_FILE, CHECKPOINT_FILE]
                .iter()
                .map(|f| std::fs::read(dir.path().join(sub).join(f)).unwrap())
                .collect()
        };
        for sub in ["a", "b"] {
            let run = train_run::<f32>(&cfg, &ds, None, |_| {}).unwrap();
            write_run(&dir.path().join(sub), &run).unwrap();
        }
        assert_eq!(read("a"), read("b"));
        assert_eq!(String::from_utf8(read("a")[0].clone()).unwrap().lines().count(), 4);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = tiny_config();
        let ds = make_dataset(cfg.task_spec().unwrap(), SplitSizes::new(20, 600, 6), 2).unwrap();
        let one = train_run::<f64>(&cfg, &ds, None, |_| {}).unwrap();
        let four = train_run::<f64>(&RunConfig { threads: 4, ..cfg }, &ds, None, |_| {}).unwrap();
        let strip = |h: &[EpochMetrics]| -> Vec<EpochMetrics> {
            h.iter()
                .map(|m| EpochMetrics {
                    wall_time: 0.0,
                    ..m.clone()
                })
                .collect()
        };
        assert_eq!(strip(&one.history), strip(&four.history));
        assert_eq!(one.model, four.model);
    }

    #[test]
    fn resume_with_other_vocabulary_refused() {
        let cfg = tiny_config();
        let ds = make_dataset(cfg.task_spec().unwrap(), SplitSizes::new(4, 2, 2), 2).unwrap();
        let other = Seq2SeqModel::<f32>::new(
            RunConfig {
                vocab_size: Some(7),
                ..tiny_config()
            }
            .model_config()
            .unwrap(),
            1,
        )
        .unwrap();
        assert!(train_run(&cfg, &ds, Some(other), |_| {}).is_err());
    }
}
