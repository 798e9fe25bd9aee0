//! Backend flags shared by subcommands, and `cftk backend conformance`.

use std::path::PathBuf;

use anyhow::Result;
use cftk_core::backends::conformance::run_conformance;
use cftk_core::backends::{BackendConfig, BackendKind, BackendSet};
use clap::{Args, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::{CommonArgs, RuntimeFailure};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Mock,
    Http,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// Backend implementation
    #[arg(long, value_enum)]
    pub backend: Option<KindArg>,

    /// Base URL of an HTTP backend
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Serialized n-gram model for the mock language model
    #[arg(long)]
    pub lm_model: Option<PathBuf>,

    /// JSONL corpus to train the mock n-gram language model from
    #[arg(long)]
    pub lm_corpus: Option<PathBuf>,
}

impl BackendArgs {
    pub fn apply(&self, config: &mut BackendConfig) {
        if let Some(kind) = self.backend {
            config.kind = match kind {
                KindArg::Mock => BackendKind::Mock,
                KindArg::Http => BackendKind::Http,
            };
        }
        if let Some(e) = &self.endpoint {
            config.endpoint = Some(e.clone());
        }
        if let Some(p) = &self.lm_model {
            config.mock.lm_model = Some(p.clone());
        }
        if let Some(p) = &self.lm_corpus {
            config.mock.lm_corpus = Some(p.clone());
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum BackendCommand {
    /// Check that a backend honours the protocol contracts
    Conformance {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

pub fn run(cmd: BackendCommand) -> Result<()> {
    let BackendCommand::Conformance { common, backend } = cmd;
    let mut config = RunConfig::from_args(common.config.as_deref())?;
    backend.apply(&mut config.backend);
    let set = BackendSet::from_config(&config.backend)?;
    let report = run_conformance(&set);
    print!("{report}");
    if let Some(out) = &common.out {
        config.write_resolved(out)?;
        std::fs::write(out.join("conformance.txt"), report.to_string())?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(RuntimeFailure(format!("{} conformance check(s) failed", report.failures().count())).into())
    }
}
