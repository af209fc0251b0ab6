//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "bn-domain"
//! output_dir = "runs/bn-domain"
//!
//! [model]
//! preset = "desk8"            # desk8 | resnet38
//! multiplier = 1              # 1 | 2 | 4
//! input_size = 8              # optional, defaults to the preset's size
//! sharing = "deep_sharing"    # no_sharing | full_sharing | deep_sharing | partial
//! shared_stages = [1]         # partial only
//!
//! [norm]
//! kind = "bn"                 # bn | bn_plus | in | none
//! scale_scope = "domain"      # universal | domain
//! moment_scope = "domain"     # universal | domain | none
//! eps = 1e-5
//!
//! [train]
//! steps = 2000
//! batch_size = 32
//! warmup_lr = 0.01
//! base_lr = 0.1
//! final_lr = 1e-4
//! momentum = 0.9
//! weight_decay = 1e-4
//! eval_every = 500            # 0: evaluate at the end only
//! eval_batch_size = 32        # defaults to batch_size
//! augment = true
//! parallel_domains = false
//! moment_window = 100         # optional
//!
//! [seeds]
//! model = 0
//! data = 0
//! augment = 0
//!
//! [[domain]]
//! name = "a"
//! path = "data/a.udrd"        # a UDRD file, or a synthetic table:
//! whiten = true
//! split_ratio = 0.8
//! rgb = false                 # replicate a single channel to three
//!
//! [[domain]]
//! name = "b"
//! [domain.synthetic]
//! classes = 10
//! n_per_class = 60
//! size = 8
//! mean_offset = 3.0
//! ```
//!
//! Relative paths (data files and the output directory) are taken relative
//! to the working directory.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::network::{build_blueprint, Blueprint, Preset, SharingConfig, SharingMode};
use crate::norm::{MomentScope, NormKind, NormStrategy, ScaleScope};
use crate::train::{Schedule, SgdConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub preset: Preset,
    pub multiplier: usize,
    pub input_size: Option<usize>,
    pub sharing: SharingMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub warmup_lr: f64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub eval_every: usize,
    pub eval_batch_size: usize,
    pub augment: bool,
    pub parallel_domains: bool,
    pub moment_window: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub data: u64,
    pub augment: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSource {
    Synthetic(SynthSpec),
    Path(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub source: DomainSource,
    pub whiten: bool,
    pub split_ratio: f64,
    pub rgb: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub norm: NormStrategy,
    pub eps: f64,
    pub train: TrainSection,
    pub seeds: Seeds,
    pub domains: Vec<DomainSpec>,
}

struct Reader {
    errs: Vec<String>,
}

impl Reader {
    fn field<T: DeserializeOwned>(&mut self, t: &mut Table, path: &str, key: &str) -> Option<T> {
        let v = t.remove(key)?;
        match v.try_into::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                self.errs.push(format!("`{path}{key}`: {}", e.to_string().trim()));
                None
            }
        }
    }

    fn or<T: DeserializeOwned>(&mut self, t: &mut Table, path: &str, key: &str, default: T) -> T {
        self.field(t, path, key).unwrap_or(default)
    }

    fn section(&mut self, t: &mut Table, key: &str) -> Table {
        match t.remove(key) {
            None => Table::new(),
            Some(Value::Table(s)) => s,
            Some(_) => {
                self.errs.push(format!("`{key}` must be a table"));
                Table::new()
            }
        }
    }

    fn finish(&mut self, t: Table, path: &str) {
        for k in t.keys() {
            self.errs.push(format!("unknown key `{path}{k}`"));
        }
    }
}

impl ExperimentConfig {
    /// The schedule, optimizer and loop settings for the trainer.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let schedule = Schedule::scaled(t.steps, t.warmup_lr, t.base_lr, t.final_lr)?;
        Ok(TrainConfig {
            batch_size: t.batch_size,
            schedule,
            sgd: SgdConfig {
                momentum: t.momentum,
                weight_decay: t.weight_decay,
            },
            parallel_domains: t.parallel_domains,
            eval_every: t.eval_every,
            eval_batch_size: t.eval_batch_size,
            data_seed: self.seeds.data,
            aug_seed: self.seeds.augment,
            augment: t.augment,
            moment_window: t.moment_window,
            active: None,
        })
    }

    pub fn sharing(&self) -> SharingConfig {
        SharingConfig::new(self.model.sharing.clone(), self.model.multiplier)
    }

    /// Blueprint for the given per-domain class counts and input channels.
    pub fn blueprint(&self, classes: &[usize], channels: usize) -> Result<Blueprint> {
        let bp = build_blueprint(self.model.preset, self.model.multiplier, self.norm, classes)?;
        let size = self.model.input_size.unwrap_or(bp.input.0);
        bp.with_input(size, channels)
    }

    /// SHA-256 over everything that determines the trained parameters; the
    /// run name and output directory are excluded.
    pub fn hash(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.name = String::new();
        c.output_dir = None;
        // Evaluation settings do not touch the parameters.
        c.train.eval_every = 0;
        c.train.eval_batch_size = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("TOML syntax: {}", e.to_string().trim())))?;
    let mut r = Reader { errs: Vec::new() };

    let name = r.or(&mut root, "", "name", "experiment".to_string());
    let output_dir = r.field(&mut root, "", "output_dir");

    let mut m = r.section(&mut root, "model");
    let preset = r.or(&mut m, "model.", "preset", Preset::Desk8);
    let multiplier = r.or(&mut m, "model.", "multiplier", 1usize);
    let input_size = r.field(&mut m, "model.", "input_size");
    let sharing_name: String = r.or(&mut m, "model.", "sharing", "deep_sharing".to_string());
    let stages: Option<Vec<usize>> = r.field(&mut m, "model.", "shared_stages");
    r.finish(m, "model.");
    let sharing = match sharing_name.as_str() {
        "no_sharing" => SharingMode::NoSharing,
        "full_sharing" => SharingMode::FullSharing,
        "deep_sharing" => SharingMode::DeepSharing,
        "partial" => SharingMode::Partial(stages.clone().unwrap_or_default()),
        other => {
            r.errs.push(format!(
                "`model.sharing`: unknown mode `{other}` (no_sharing, full_sharing, deep_sharing, partial)"
            ));
            SharingMode::DeepSharing
        }
    };
    if stages.is_some() && !matches!(sharing, SharingMode::Partial(_)) {
        r.errs.push("`model.shared_stages` is only valid with sharing = \"partial\"".into());
    }

    let mut n = r.section(&mut root, "norm");
    let norm = NormStrategy {
        kind: r.or(&mut n, "norm.", "kind", NormKind::Bn),
        scale_scope: r.or(&mut n, "norm.", "scale_scope", ScaleScope::Domain),
        moment_scope: r.or(&mut n, "norm.", "moment_scope", MomentScope::Domain),
    };
    let eps = r.or(&mut n, "norm.", "eps", 1e-5);
    r.finish(n, "norm.");
    if let Err(e) = norm.validate() {
        r.errs.push(e.to_string());
    }
    if !(eps > 0.0) {
        r.errs.push(format!("`norm.eps` must be positive, got {eps}"));
    }

    let mut t = r.section(&mut root, "train");
    let batch_size = r.or(&mut t, "train.", "batch_size", 32usize);
    let train = TrainSection {
        steps: r.or(&mut t, "train.", "steps", 2000),
        batch_size,
        warmup_lr: r.or(&mut t, "train.", "warmup_lr", 0.01),
        base_lr: r.or(&mut t, "train.", "base_lr", 0.1),
        final_lr: r.or(&mut t, "train.", "final_lr", 1e-4),
        momentum: r.or(&mut t, "train.", "momentum", 0.9),
        weight_decay: r.or(&mut t, "train.", "weight_decay", 1e-4),
        eval_every: r.or(&mut t, "train.", "eval_every", 0),
        eval_batch_size: r.or(&mut t, "train.", "eval_batch_size", batch_size),
        augment: r.or(&mut t, "train.", "augment", true),
        parallel_domains: r.or(&mut t, "train.", "parallel_domains", false),
        moment_window: r.field(&mut t, "train.", "moment_window"),
    };
    r.finish(t, "train.");
    if train.batch_size == 0 || train.eval_batch_size == 0 {
        r.errs.push("batch sizes must be positive".into());
    }
    if !(0.0..1.0).contains(&train.momentum) {
        r.errs.push(format!("`train.momentum` must be in [0, 1), got {}", train.momentum));
    }
    if !(train.weight_decay >= 0.0) {
        r.errs.push(format!("`train.weight_decay` must be ≥ 0, got {}", train.weight_decay));
    }
    if let Err(Error::ConfigViolations(v)) =
        Schedule::scaled(train.steps, train.warmup_lr, train.base_lr, train.final_lr)
    {
        r.errs.extend(v);
    }

    let mut s = r.section(&mut root, "seeds");
    let seeds = Seeds {
        model: r.or(&mut s, "seeds.", "model", 0),
        data: r.or(&mut s, "seeds.", "data", 0),
        augment: r.or(&mut s, "seeds.", "augment", 0),
    };
    r.finish(s, "seeds.");

    let mut domains = Vec::new();
    match root.remove("domain") {
        None => r.errs.push("at least one `[[domain]]` is required".into()),
        Some(Value::Array(items)) => {
            for (i, item) in items.into_iter().enumerate() {
                let path = format!("domain[{i}].");
                let Value::Table(mut d) = item else {
                    r.errs.push(format!("`domain[{i}]` must be a table"));
                    continue;
                };
                let name = r.or(&mut d, &path, "name", format!("domain{}", i + 1));
                let file: Option<PathBuf> = r.field(&mut d, &path, "path");
                let synth = match d.remove("synthetic") {
                    None => None,
                    Some(mut v) => {
                        if let Value::Table(t) = &mut v {
                            t.entry("name").or_insert_with(|| Value::String(name.clone()));
                        }
                        match v.try_into::<SynthSpec>() {
                            Ok(s) => {
                                r.errs.extend(s.violations());
                                Some(s)
                            }
                            Err(e) => {
                                r.errs.push(format!("`{path}synthetic`: {}", e.to_string().trim()));
                                None
                            }
                        }
                    }
                };
                let whiten = r.or(&mut d, &path, "whiten", true);
                let split_ratio = r.or(&mut d, &path, "split_ratio", 0.8);
                let rgb = r.or(&mut d, &path, "rgb", false);
                r.finish(d, &path);
                if !(split_ratio > 0.0 && split_ratio < 1.0) {
                    r.errs.push(format!("`{path}split_ratio` must be in (0, 1), got {split_ratio}"));
                }
                let source = match (file, synth) {
                    (Some(p), None) => DomainSource::Path(p),
                    (None, Some(s)) => DomainSource::Synthetic(s),
                    (Some(_), Some(_)) => {
                        r.errs.push(format!("`{path}` sets both `path` and `synthetic`"));
                        continue;
                    }
                    (None, None) => {
                        r.errs.push(format!("`{path}` needs `path` or a `synthetic` table"));
                        continue;
                    }
                };
                domains.push(DomainSpec {
                    name,
                    source,
                    whiten,
                    split_ratio,
                    rgb,
                });
            }
        }
        Some(_) => r.errs.push("`domain` must be an array of tables (`[[domain]]`)".into()),
    }
    r.finish(root, "");

    let cfg = ExperimentConfig {
        name,
        output_dir,
        model: ModelSection {
            preset,
            multiplier,
            input_size,
            sharing,
        },
        norm,
        eps,
        train,
        seeds,
        domains,
    };

    // Constraints that need the network shape; class counts are known here
    // for synthetic domains only.
    let synth: Vec<&SynthSpec> = cfg
        .domains
        .iter()
        .filter_map(|d| match &d.source {
            DomainSource::Synthetic(s) => Some(s),
            DomainSource::Path(_) => None,
        })
        .collect();
    let mut class_error = None;
    if r.errs.is_empty() && !cfg.domains.is_empty() {
        let classes: Vec<usize> = if synth.len() == cfg.domains.len() {
            synth.iter().map(|s| s.classes).collect()
        } else {
            vec![2; cfg.domains.len()]
        };
        match cfg.blueprint(&classes, 3) {
            Ok(bp) => {
                r.errs.extend(cfg.sharing().violations(&bp));
                if let Err(e @ Error::ClassCount(_)) = cfg.sharing().validate(&bp) {
                    class_error = Some(e);
                }
                for s in &synth {
                    if s.size != bp.input.0 {
                        r.errs.push(format!(
                            "synthetic domain `{}` is {}×{}, the network input is {}×{}",
                            s.name, s.size, s.size, bp.input.0, bp.input.1
                        ));
                    }
                }
            }
            Err(Error::ConfigViolations(v)) => r.errs.extend(v),
            Err(e) => r.errs.push(e.to_string()),
        }
        if cfg.train.parallel_domains && cfg.train.eval_every % cfg.domains.len() != 0 {
            r.errs.push(format!(
                "`train.eval_every` must be a multiple of the domain count ({}) with parallel_domains",
                cfg.domains.len()
            ));
        }
    }
    if !r.errs.is_empty() {
        return Err(Error::ConfigViolations(r.errs));
    }
    if let Some(e) = class_error {
        return Err(e);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[domain]]
        [domain.synthetic]
        classes = 4
        n_per_class = 10
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.eps, 1e-5);
        assert_eq!(c.train.momentum, 0.9);
        assert_eq!(c.train.weight_decay, 1e-4);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.norm, NormStrategy::default());
        assert_eq!(c.domains[0].name, "domain1");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = format!("{MINIMAL}\n[train]\nbatchsize = 3\nmomentum = 2.0\n[norm]\nkind = \"in\"\nmoment_scope = \"domain\"\n");
        let Err(Error::ConfigViolations(v)) = parse_config(&text) else {
            panic!("expected violations")
        };
        assert!(v.iter().any(|e| e.contains("train.batchsize")), "{v:?}");
        assert!(v.iter().any(|e| e.contains("momentum")), "{v:?}");
        assert!(v.iter().any(|e| e.contains("moment_scope")), "{v:?}");
    }

    #[test]
    fn full_sharing_needs_equal_classes() {
        let text = r#"
            [model]
            sharing = "full_sharing"
            [[domain]]
            synthetic = { classes = 10, n_per_class = 2 }
            [[domain]]
            synthetic = { classes = 5, n_per_class = 2 }
        "#;
        assert!(matches!(parse_config(text), Err(Error::ClassCount(_))));
    }

    #[test]
    fn hash_ignores_name_and_output() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.name = "other".into();
        b.output_dir = Some("x".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds.model = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
