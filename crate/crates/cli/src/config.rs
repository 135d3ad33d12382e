//! Config files.
//!
//! All three commands read TOML. A run is described by `name`, a `[dataset]`
//! table, a `[train]` table, a `[sparsity]` table and an optional `trace`
//! flag. `compare` and `sweep` files hold the same tables at the top level as
//! shared defaults; `compare` adds `[[runs]]` entries that are deep-merged over
//! them, `sweep` adds a `[grid]` of values to cross.
//!
//! Relative dataset paths resolve against the directory holding the config.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sparseprop::data::{load_mnist_idx, synth_blobs, Dataset};
use sparseprop::network::{relu_classifier, LayerSpec};
use sparseprop::numerics::Prng;
use sparseprop::selector::SparsityConfig;
use sparseprop::trainer::{TrainConfig, DEFAULT_HIDDEN};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// IDX image/label pairs, optionally gzipped. Limits keep the first `n`
    /// samples of each split.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// Gaussian blobs, shuffled and split into train and test.
    Synth {
        n: usize,
        classes: usize,
        dim: usize,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

impl DatasetSpec {
    fn resolve(mut self, base: &Path) -> Self {
        if let DatasetSpec::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        self
    }

    /// Returns `(train, test)`.
    pub fn load(&self) -> CliResult<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let load = |imgs: &Path, labs: &Path, limit: &Option<usize>| {
                    let d =
                        load_mnist_idx(imgs, labs).map_err(|e| CliError::Data(e.to_string()))?;
                    Ok::<_, CliError>(match limit {
                        Some(n) => d.take(*n),
                        None => d,
                    })
                };
                Ok((
                    load(train_images, train_labels, train_limit)?,
                    load(test_images, test_labels, test_limit)?,
                ))
            }
            DatasetSpec::Synth {
                n,
                classes,
                dim,
                test_fraction,
                seed,
            } => {
                let mut rng = Prng::new(*seed);
                let data = synth_blobs(*n, *classes, *dim, &mut rng)
                    .map_err(|e| CliError::config("dataset", e))?;
                data.split_shuffle(*test_fraction, &mut rng)
                    .map_err(|e| CliError::from_core(e, ""))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr0: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Hidden widths of a relu classifier sized to the dataset.
    pub hidden: Vec<usize>,
    /// Explicit layer list; overrides `hidden`.
    pub architecture: Option<Vec<LayerSpec>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::new(Vec::new(), SparsityConfig::default());
        Self {
            epochs: base.epochs,
            lr0: base.lr0,
            warmup_epochs: base.warmup_epochs,
            seed: base.seed,
            eval_every: base.eval_every,
            hidden: DEFAULT_HIDDEN.to_vec(),
            architecture: None,
        }
    }
}

/// Thresholds enforced under `--check`. Unset entries are not checked.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Final accuracy floor for `train` runs and for the `compare` baseline.
    pub min_accuracy: Option<f64>,
    /// Largest allowed baseline-minus-run accuracy gap in `compare`.
    pub max_accuracy_drop: Option<f64>,
    /// Effort-ratio ceiling for each non-baseline `compare` run.
    pub max_effort_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sparsity: SparsityConfig,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub check: CheckSection,
}

impl RunSpec {
    /// Validation that does not need the dataset. `prefix` is prepended to
    /// reported field paths.
    pub fn validate(&self, prefix: &str) -> CliResult<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(CliError::config(
                format!("{prefix}name"),
                format!(
                    "{:?} must be non-empty and use only [A-Za-z0-9_.-]",
                    self.name
                ),
            ));
        }
        self.train_config(Vec::new())
            .validate_hyperparameters()
            .map_err(|e| CliError::from_core(e, prefix))
    }

    pub fn train_config(&self, architecture: Vec<LayerSpec>) -> TrainConfig {
        let t = &self.train;
        TrainConfig::new(architecture, self.sparsity)
            .epochs(t.epochs)
            .lr0(t.lr0)
            .warmup_epochs(t.warmup_epochs)
            .seed(t.seed)
            .eval_every(t.eval_every)
    }

    pub fn architecture_for(&self, data: &Dataset) -> Vec<LayerSpec> {
        match &self.train.architecture {
            Some(a) => a.clone(),
            None => relu_classifier(data.feature_dim, &self.train.hidden, data.num_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub runs: Vec<RunSpec>,
    pub baseline: usize,
    pub parallel: usize,
    pub check: CheckSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub s_min: Option<Vec<f64>>,
    pub s_max: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
    pub skip_threshold: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub s_min: f64,
    pub s_max: f64,
    pub zeta: f64,
    pub skip_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunSpec,
    pub points: Vec<GridPoint>,
    pub seeds: Vec<u64>,
    pub parallel: usize,
}

impl SweepSpec {
    /// The run for `point` and `seed`, named `<base>-c<config>-s<seed>`.
    pub fn run(&self, config: usize, seed: u64) -> RunSpec {
        let p = self.points[config];
        let mut run = self.base.clone();
        run.name = format!("{}-c{config}-s{seed}", self.base.name);
        run.train.seed = seed;
        run.sparsity.s_min = p.s_min;
        run.sparsity.s_max = p.s_max;
        run.sparsity.zeta = p.zeta;
        run.sparsity.skip_threshold = p.skip_threshold;
        run
    }
}

fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<Table>()
        .map_err(|e| CliError::config("<file>", e.message().trim().to_string()))
}

fn base_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn deserialize<T: DeserializeOwned>(value: Value, prefix: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = match (prefix, path.as_str()) {
            (p, ".") => p.trim_end_matches('.').to_string(),
            (p, rest) => format!("{p}{rest}"),
        };
        let path = if path.is_empty() {
            "<root>".to_string()
        } else {
            path
        };
        CliError::config(path, e.into_inner())
    })
}

fn parse_run(
    table: Table,
    base: &Path,
    prefix: &str,
    seed_override: Option<u64>,
) -> CliResult<RunSpec> {
    let mut run: RunSpec = deserialize(Value::Table(table), prefix)?;
    run.dataset = run.dataset.resolve(base);
    if let Some(seed) = seed_override {
        run.train.seed = seed;
    }
    run.validate(prefix)?;
    Ok(run)
}

pub fn load_run(path: &Path, seed_override: Option<u64>) -> CliResult<RunSpec> {
    parse_run(read_table(path)?, &base_dir(path), "", seed_override)
}

/// Recursively overlays `over` onto `base`. Tables merge key by key; any
/// other value replaces.
pub fn deep_merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn take_parallel(table: &mut Table) -> CliResult<usize> {
    match table.remove("parallel") {
        None => Ok(1),
        Some(Value::Integer(n)) if n >= 1 => Ok(n as usize),
        Some(other) => Err(CliError::config(
            "parallel",
            format!("expected a positive integer, found {other}"),
        )),
    }
}

fn take_check(table: &mut Table) -> CliResult<CheckSection> {
    match table.remove("check") {
        None => Ok(CheckSection::default()),
        Some(v) => deserialize(v, "check."),
    }
}

pub fn load_compare(path: &Path, seed_override: Option<u64>) -> CliResult<CompareSpec> {
    let mut table = read_table(path)?;
    let parallel = take_parallel(&mut table)?;
    let check = take_check(&mut table)?;
    let runs = match table.remove("runs") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(CliError::config("runs", "expected an array of tables")),
        None => return Err(CliError::config("runs", "missing `[[runs]]` entries")),
    };
    table.remove("name");
    if runs.len() < 2 {
        return Err(CliError::config(
            "runs",
            format!("need at least 2 runs, found {}", runs.len()),
        ));
    }
    let base = base_dir(path);
    let mut specs = Vec::with_capacity(runs.len());
    let mut baselines = Vec::new();
    for (i, entry) in runs.into_iter().enumerate() {
        let prefix = format!("runs[{i}].");
        let Value::Table(mut entry) = entry else {
            return Err(CliError::config(format!("runs[{i}]"), "expected a table"));
        };
        match entry.remove("baseline") {
            None | Some(Value::Boolean(false)) => {}
            Some(Value::Boolean(true)) => baselines.push(i),
            Some(_) => {
                return Err(CliError::config(
                    format!("{prefix}baseline"),
                    "expected a boolean",
                ))
            }
        }
        let mut merged = table.clone();
        deep_merge(&mut merged, entry);
        let run = parse_run(merged, &base, &prefix, seed_override)?;
        if specs.iter().any(|r: &RunSpec| r.name == run.name) {
            return Err(CliError::config(
                format!("{prefix}name"),
                format!("duplicate run name {:?}", run.name),
            ));
        }
        specs.push(run);
    }
    let baseline = match baselines.as_slice() {
        [] => {
            return Err(CliError::config(
                "runs",
                "no run is marked `baseline = true`",
            ))
        }
        [b] => *b,
        _ => {
            return Err(CliError::config(
                "runs",
                "more than one run is marked as baseline",
            ))
        }
    };
    if specs[baseline].sparsity.strategy != sparseprop::selector::Strategy::Full {
        return Err(CliError::config(
            format!("runs[{baseline}].sparsity.strategy"),
            "the baseline run must use strategy \"full\"",
        ));
    }
    Ok(CompareSpec {
        runs: specs,
        baseline,
        parallel,
        check,
    })
}

pub fn load_sweep(path: &Path, seed_override: Option<u64>) -> CliResult<SweepSpec> {
    let mut table = read_table(path)?;
    let parallel = take_parallel(&mut table)?;
    let grid: Grid = match table.remove("grid") {
        Some(v) => deserialize(v, "grid.")?,
        None => return Err(CliError::config("grid", "missing `[grid]` table")),
    };
    let base = parse_run(table, &base_dir(path), "", seed_override)?;

    let lists = [
        ("grid.s_min", &grid.s_min),
        ("grid.s_max", &grid.s_max),
        ("grid.zeta", &grid.zeta),
        ("grid.skip_threshold", &grid.skip_threshold),
    ];
    if lists.iter().all(|(_, l)| l.is_none()) && grid.seeds.is_none() {
        return Err(CliError::config("grid", "grid is empty"));
    }
    for (field, list) in lists {
        if matches!(list, Some(l) if l.is_empty()) {
            return Err(CliError::config(field, "grid list is empty"));
        }
    }
    let seeds = match (&grid.seeds, seed_override) {
        (Some(s), _) if s.is_empty() => {
            return Err(CliError::config("grid.seeds", "grid list is empty"))
        }
        (_, Some(seed)) => vec![seed],
        (Some(s), None) => s.clone(),
        (None, None) => vec![base.train.seed],
    };
    let or_base = |l: &Option<Vec<f64>>, v: f64| l.clone().unwrap_or_else(|| vec![v]);
    let sp = &base.sparsity;
    let mut points = Vec::new();
    for &s_min in &or_base(&grid.s_min, sp.s_min) {
        for &s_max in &or_base(&grid.s_max, sp.s_max) {
            for &zeta in &or_base(&grid.zeta, sp.zeta) {
                for &skip_threshold in &or_base(&grid.skip_threshold, sp.skip_threshold) {
                    points.push(GridPoint {
                        s_min,
                        s_max,
                        zeta,
                        skip_threshold,
                    });
                }
            }
        }
    }
    let spec = SweepSpec {
        base,
        points,
        seeds,
        parallel,
    };
    for c in 0..spec.points.len() {
        spec.run(c, spec.seeds[0])
            .validate("")
            .map_err(|e| match e {
                CliError::Config { path, message } => {
                    CliError::config(path, format!("{message} (grid point {c})"))
                }
                other => other,
            })?;
    }
    Ok(spec)
}
