//! File configuration merged with flags. A flag that is given always wins.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabal_core::corpus::GeneratorConfig;
use tabal_core::experiment::ExperimentConfig;

use crate::args::{CorpusArgs, GenArgs, ServeArgs, SimulateArgs};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub data_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub generator: GeneratorConfig,
    pub experiment: ExperimentConfig,
    pub serve: ServeConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Core(tabal_core::Error::Config(format!("{}: {e}", path.display()))))
    }

    pub fn generator(&self, seed: Option<u64>, args: &GenArgs) -> GeneratorConfig {
        let mut g = self.generator.clone();
        set(&mut g.rng_seed, seed);
        set(&mut g.n_tables, args.tables);
        set(&mut g.target_o_cell_fraction, args.o_fraction);
        set(&mut g.spelling_noise_rate, args.noise);
        g
    }

    pub fn experiment(&self, seed: Option<u64>, args: &CorpusArgs) -> ExperimentConfig {
        let mut e = self.experiment.clone();
        set(&mut e.rng_seed, seed);
        set(&mut e.n_repeats, args.repeats);
        set(&mut e.train.max_epochs, args.max_epochs);
        set(&mut e.train.word_dropout, args.word_dropout);
        e
    }

    pub fn simulation(&self, seed: Option<u64>, args: &SimulateArgs) -> ExperimentConfig {
        let mut e = self.experiment(seed, &args.corpus);
        set(&mut e.acquisitions, args.acquisitions.clone());
        set(&mut e.seed_size, args.seed_size);
        set(&mut e.batch_budget, args.batch);
        set(&mut e.n_iterations, args.iterations);
        set(&mut e.mnlp_plus_order, args.mnlp_plus_order.map(Into::into));
        e
    }

    pub fn serve(&self, out: &Path, args: &ServeArgs) -> ServeConfig {
        let mut s = self.serve.clone();
        set(&mut s.bind, args.bind);
        let dir = args.data_dir.clone().or(s.data_dir).unwrap_or_else(|| out.join("sessions"));
        s.data_dir = Some(dir);
        s
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
