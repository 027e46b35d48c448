use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use swing_pinn::dataset::DatasetSpec;
use swing_pinn::eval::BenchmarkSpec;
use swing_pinn::pinn::OutputMode;
use swing_pinn::swing::SwingParams;
use swing_pinn::trainer::{TrainConfig, TrainMode};

/// Settings for the inertia/damping identification study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Ground-truth pairs drawn by Latin hypercube when `pairs` is empty.
    pub n_pairs: usize,
    pub m_range: (f64, f64),
    pub d_range: (f64, f64),
    /// Explicit `(m, d)` ground-truth pairs.
    pub pairs: Vec<(f64, f64)>,
    /// Trajectories generated per ground-truth pair.
    pub n_trajectories: usize,
    pub layers: Vec<usize>,
    pub n_u: usize,
    pub n_f: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            n_pairs: 10,
            m_range: (0.1, 0.4),
            d_range: (0.05, 0.15),
            pairs: Vec::new(),
            n_trajectories: 40,
            layers: vec![2, 30, 30, 30, 30, 30, 1],
            n_u: 100,
            n_f: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into the dataset and training seeds.
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSpec,
    pub physics: SwingParams,
    pub layers: Vec<usize>,
    pub n_u: usize,
    pub n_f: usize,
    pub train: TrainConfig,
    pub identify: IdentifyConfig,
    pub benchmark: BenchmarkSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            dataset: DatasetSpec::default(),
            physics: SwingParams::default(),
            layers: vec![2, 10, 10, 10, 10, 10, 1],
            n_u: 40,
            n_f: 8_000,
            train: TrainConfig::default(),
            identify: IdentifyConfig::default(),
            benchmark: BenchmarkSpec::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_u: Option<usize>,
    pub n_f: Option<usize>,
    pub layers: Option<Vec<usize>>,
    pub iters: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `overrides`. `identify` selects which architecture and sample
    /// counts the size flags refer to.
    pub fn apply(&mut self, o: &Overrides, identify: bool) {
        let seed = o.seed.unwrap_or(self.seed);
        self.seed = seed;
        self.dataset.seed = seed;
        self.train.seed = seed;
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(iters) = o.iters {
            self.train.max_iterations = iters;
        }
        let (layers, n_u, n_f) = if identify {
            (&mut self.identify.layers, &mut self.identify.n_u, &mut self.identify.n_f)
        } else {
            (&mut self.layers, &mut self.n_u, &mut self.n_f)
        };
        if let Some(l) = &o.layers {
            *layers = l.clone();
        }
        if let Some(v) = o.n_u {
            *n_u = v;
        }
        if let Some(v) = o.n_f {
            *n_f = v;
        }
        self.train.mode = if identify { TrainMode::Identify } else { TrainMode::Forward };
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.physics.validate()?;
        self.train.validate()?;
        let outputs = self.train.output.n_outputs();
        for (name, layers) in [("layers", &self.layers), ("identify.layers", &self.identify.layers)] {
            if layers.len() < 2 || layers[0] != 2 || layers.iter().any(|&n| n == 0) {
                bail!("{name} must start with 2 inputs and have no empty layer, got {layers:?}");
            }
            if *layers.last().unwrap() != outputs {
                bail!(
                    "{name} must end with {outputs} output(s) for {} mode, got {layers:?}",
                    mode_name(self.train.output)
                );
            }
        }
        if self.n_u == 0 || self.n_f == 0 || self.identify.n_u == 0 || self.identify.n_f == 0 {
            bail!("n_u and n_f must be >= 1");
        }
        if self.identify.n_trajectories == 0 {
            bail!("identify.n_trajectories must be >= 1");
        }
        let (m, d) = (self.identify.m_range, self.identify.d_range);
        if !(0.0 < m.0 && m.0 <= m.1) || !(0.0 <= d.0 && d.0 <= d.1) {
            bail!("identify ranges must be ordered with m > 0 and d >= 0");
        }
        if self.identify.pairs.is_empty() && self.identify.n_pairs == 0 {
            bail!("identify needs n_pairs >= 1 or an explicit pair list");
        }
        Ok(())
    }
}

fn mode_name(mode: OutputMode) -> &'static str {
    match mode {
        OutputMode::Single => "single-output",
        OutputMode::TwoOutput => "two-output",
    }
}

/// Layer sizes given on the command line as `2,10,10,1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerList(pub Vec<usize>);

impl std::str::FromStr for LayerList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("bad layer size {x:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(LayerList)
    }
}
