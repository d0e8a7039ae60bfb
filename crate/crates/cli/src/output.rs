use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use uniloss::Result;

use crate::args::Cli;

pub const TOOL: &str = "uniloss";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run metadata shared by every output. The config is the parsed command
/// line (without the output path); serde_json maps are ordered by key, so
/// its compact encoding is canonical.
pub struct Meta {
    config: Value,
    hash: String,
    seed: u64,
}

impl Meta {
    pub fn new(cli: &Cli) -> Result<Self> {
        let config = json!({ "command": serde_json::to_value(&cli.command)?, "seed": cli.seed });
        let canonical = serde_json::to_string(&config)?;
        let hash = Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { config, hash, seed: cli.seed })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "config": self.config,
            "config_hash": self.hash,
            "seed": self.seed,
        })
    }

    /// Comment lines for CSV outputs, without the leading `# `.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("{TOOL} {VERSION}"),
            format!("config_hash {}", self.hash),
            format!("seed {}", self.seed),
            format!("config {}", self.config),
        ]
    }
}

/// `--out` if given, stdout otherwise.
pub fn sink(cli: &Cli) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, meta: &Meta, result: &T) -> Result<()> {
    let doc = json!({ "meta": meta.to_json(), "result": serde_json::to_value(result)? });
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn emit<T: Serialize>(cli: &Cli, meta: &Meta, result: &T) -> Result<()> {
    write_json(sink(cli)?, meta, result)
}
