//! Sweeps over configuration keys: each setting is trained from scratch and
//! scored on the same evaluation set.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::evaluate::{evaluate, EvalOptions};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Model, ModelConfig};
use crate::text::Example;
use crate::train::{train, Checkpoint, TrainConfig, TrainOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub label: String,
    pub config: TrainConfig,
}

/// Expands `key=v1,v2,...` entries into their Cartesian product, applied on
/// top of `base`. The first value of every key comes first.
pub fn parse_grid(base: &TrainConfig, entries: &[String]) -> Result<Vec<Setting>> {
    let mut axes = Vec::new();
    for entry in entries {
        let (key, values) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid entry `{entry}` is not key=v1,v2,...")))?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_owned())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!("grid entry `{entry}` has no values")));
        }
        axes.push((key.trim().to_owned(), values));
    }
    let mut settings = vec![Setting {
        label: String::new(),
        config: base.clone(),
    }];
    for (key, values) in &axes {
        let mut next = Vec::with_capacity(settings.len() * values.len());
        for s in &settings {
            for v in values {
                let mut config = s.config.clone();
                config.set(key, v)?;
                let sep = if s.label.is_empty() { "" } else { " " };
                next.push(Setting {
                    label: format!("{}{sep}{key}={v}", s.label),
                    config,
                });
            }
        }
        settings = next;
    }
    if axes.is_empty() {
        settings[0].label = "base".into();
    }
    Ok(settings)
}

/// The full model followed by one setting per removed component.
pub fn layer_ablations(base: &TrainConfig) -> Vec<Setting> {
    let variant = |label: &str, f: fn(&mut ModelConfig)| {
        let mut config = base.clone();
        f(&mut config.model);
        Setting {
            label: label.into(),
            config,
        }
    };
    vec![
        variant("full model", |_| {}),
        variant("w/o character LSTM", |c| c.use_char = false),
        variant("w/o filter", |c| c.use_filter = false),
        variant("w/o full matching", |c| c.use_full = false),
        variant("w/o max matching", |c| c.use_max = false),
        variant("w/o mean matching", |c| c.use_mean = false),
        variant("w/o aggregation", |c| c.use_aggregation = false),
    ]
    .into_iter()
    .filter(|s| s.config.validate().is_ok())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub exact_match: f64,
    pub f1: f64,
    pub parameters: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max(7);
        writeln!(
            f,
            "{:<width$}  {:>7}  {:>7}  {:>8}  {:>10}",
            "setting", "EM", "F1", "ΔF1", "params"
        )?;
        let base = self.rows.first().map(|r| r.f1);
        for r in &self.rows {
            let delta = base.map_or(0.0, |b| r.f1 - b);
            writeln!(
                f,
                "{:<width$}  {:>7.2}  {:>7.2}  {:>+8.2}  {:>10}",
                r.label, r.exact_match, r.f1, delta, r.parameters
            )?;
        }
        Ok(())
    }
}

/// Builds a fresh model for a configuration and seed.
pub type ModelBuilder<'a> = dyn Fn(&ModelConfig, u64) -> Result<Model> + Sync + 'a;

/// Trains every setting on `train_set`, scores it on `eval_set` and
/// collects one row per setting. With `out_dir`, each run keeps its
/// checkpoints in a numbered subdirectory.
pub fn run_ablation(
    settings: &[Setting],
    build: &ModelBuilder,
    train_set: &[Example],
    eval_set: &[Example],
    exec: Exec,
    out_dir: Option<&Path>,
) -> Result<AblationTable> {
    let mut table = AblationTable::default();
    for (i, s) in settings.iter().enumerate() {
        log::info!("ablation {}/{}: {}", i + 1, settings.len(), s.label);
        s.config.validate()?;
        let model = build(&s.config.model, s.config.hyper.seed)?;
        let parameters = model.params.trainable.size();
        let dir = out_dir.map(|d| d.join(format!("run-{:02}", i + 1)));
        let outcome = train(
            Checkpoint::initial(model, s.config.hyper.clone()),
            train_set,
            TrainOptions {
                exec,
                out_dir: dir.as_deref(),
                dev: Some(eval_set),
                on_epoch: None,
            },
        )?;
        let opts = EvalOptions {
            max_span_len: s.config.hyper.span_cap(),
            exec,
        };
        let report = evaluate(&outcome.best.model, eval_set, opts)?.report;
        table.rows.push(AblationRow {
            label: s.label.clone(),
            exact_match: report.exact_match,
            f1: report.f1,
            parameters,
            epochs: outcome.history.len(),
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_a_cartesian_product() {
        let base = TrainConfig::default();
        let entries = vec![
            "perspectives=1,10,50".to_string(),
            "use_filter=true,false".to_string(),
        ];
        let g = parse_grid(&base, &entries).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].label, "perspectives=1 use_filter=true");
        assert_eq!(g[5].config.model.perspectives, 50);
        assert!(!g[5].config.model.use_filter);
        assert_eq!(parse_grid(&base, &[]).unwrap()[0].config, base);
    }

    #[test]
    fn grid_rejects_bad_entries() {
        let base = TrainConfig::default();
        assert!(parse_grid(&base, &["perspectives".into()]).is_err());
        assert!(parse_grid(&base, &["nope=1".into()]).is_err());
        assert!(parse_grid(&base, &["perspectives=".into()]).is_err());
    }

    #[test]
    fn layer_preset_removes_one_component_each() {
        let rows = layer_ablations(&TrainConfig::default());
        assert_eq!(rows.len(), 7);
        for r in &rows[1..] {
            let off = r.config.model.flags().iter().filter(|f| !**f).count();
            assert_eq!(off, 1, "{}", r.label);
        }
    }
}
