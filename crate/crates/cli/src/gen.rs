//! `mrf gen`: synthetic datasets with their generating graph.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mrf_core::datagen::{chain_graph, gen_copula, gen_er_graph, gen_sparse_gaussian, gen_tree_graph, gen_tree_mixture, Dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::io::{write_data, write_edges, write_json, write_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenModel {
    /// Sparse-precision Gaussian, variance 1/64 and mean 1/2
    Gaussian,
    /// The Gaussian pushed through a monotone power transform into [0, 1]
    Copula,
    /// Equal-weight mixture of copula distributions on random trees
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Tree,
    Chain,
    /// Erdős–Rényi with `--edge-prob`
    Er,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = GenModel::Gaussian)]
    pub model: GenModel,
    /// Generating graph (ignored for mixtures, whose components are random trees)
    #[arg(long, value_enum, default_value_t = GraphKind::Tree)]
    pub graph: GraphKind,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    /// Extra rows from the same distribution, written to PREFIX.holdout.csv
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value_t = 0.1)]
    pub edge_prob: f64,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes PREFIX.csv, PREFIX.edges, PREFIX.meta.json and,
    /// for Gaussian and copula data, PREFIX.omega.csv
    #[arg(long, default_value = "mrf-data")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    generator: &'a str,
    seed: u64,
    d: usize,
    n: usize,
    holdout: usize,
    graph: Option<GraphKind>,
    edge_prob: Option<f64>,
    components: Option<usize>,
    n_edges: usize,
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(a: &GenArgs) -> Result<()> {
    if a.d == 0 || a.n == 0 {
        return Err(CliError::Usage(format!("--d and --n must be positive (got d = {}, n = {})", a.d, a.n)));
    }
    if a.model == GenModel::Mixture && a.components == 0 {
        return Err(CliError::Usage("--components must be positive".into()));
    }
    if !(0.0..=1.0).contains(&a.edge_prob) {
        return Err(CliError::Usage(format!("--edge-prob {} outside [0, 1]", a.edge_prob)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let total = a.n + a.holdout;
    let ds: Dataset = match a.model {
        GenModel::Mixture => gen_tree_mixture(a.d, total, a.components, &mut rng)?,
        m => {
            let g = match a.graph {
                GraphKind::Tree => gen_tree_graph(a.d, &mut rng),
                GraphKind::Chain => chain_graph(a.d),
                GraphKind::Er => gen_er_graph(a.d, a.edge_prob, &mut rng)?,
            };
            if m == GenModel::Gaussian {
                gen_sparse_gaussian(&g, total, &mut rng)?
            } else {
                gen_copula(&g, total, &mut rng)?
            }
        }
    };
    let (train, held) = ds.data.split(a.n);
    write_data(&with_suffix(&a.out, ".csv"), &train)?;
    if a.holdout > 0 {
        write_data(&with_suffix(&a.out, ".holdout.csv"), &held)?;
    }
    let truth = ds.truth.as_ref().expect("generators record their graph");
    write_edges(&with_suffix(&a.out, ".edges"), truth)?;
    if let Some(om) = &ds.omega {
        write_matrix(&with_suffix(&a.out, ".omega.csv"), om)?;
    }
    let mixture = a.model == GenModel::Mixture;
    let meta = Meta {
        generator: &ds.meta.generator,
        seed: a.seed,
        d: a.d,
        n: a.n,
        holdout: a.holdout,
        graph: (!mixture).then_some(a.graph),
        edge_prob: (!mixture && a.graph == GraphKind::Er).then_some(a.edge_prob),
        components: mixture.then_some(a.components),
        n_edges: truth.n_edges(),
    };
    write_json(&with_suffix(&a.out, ".meta.json"), &meta)
}
