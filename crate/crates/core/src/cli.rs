//! Command-line entry point.

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use crate::pipeline::{
    align, clt_check, cluster, embed, linkpred, mixed, reproduce, simulate, AlignArgs, CltCheckArgs, ClusterArgs,
    EmbedArgs, LinkpredArgs, MixedArgs, ReproduceArgs, SimulateArgs,
};

#[derive(Debug, Parser)]
#[command(name = "grdpg", version, about = "Simulation, spectral embedding and block-model estimation for generalised random dot product graphs")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// One of off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a graph (and its latent structure) from a model configuration.
    Simulate(SimulateArgs),
    /// Spectrally embed an edge list.
    Embed(EmbedArgs),
    /// Align an embedding to known latent positions.
    Align(AlignArgs),
    /// Gaussian mixture clustering of an embedding.
    Cluster(ClusterArgs),
    /// Mixed-membership fit by a minimum-volume enclosing simplex.
    Mixed(MixedArgs),
    /// Empirical coverage of the limiting Gaussian ellipses.
    CltCheck(CltCheckArgs),
    /// New-edge prediction between two time windows.
    Linkpred(LinkpredArgs),
    /// Write plot-ready data for a named figure.
    Reproduce(ReproduceArgs),
}

/// Exit status: 0 on success, 1 for usage and input errors, 2 for numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).try_init();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not configure thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Embed(a) => embed(a),
        Command::Align(a) => align(a),
        Command::Cluster(a) => cluster(a),
        Command::Mixed(a) => mixed(a),
        Command::CltCheck(a) => clt_check(a),
        Command::Linkpred(a) => linkpred(a),
        Command::Reproduce(a) => reproduce(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
