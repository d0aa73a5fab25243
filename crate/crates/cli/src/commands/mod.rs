//! One module per subcommand, plus shared flag plumbing.

pub mod decompose;
pub mod discover;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod synth;
pub mod train;

use std::path::Path;

use lexmatch_core::{Error, Result};

/// The flag when present, otherwise a freshly drawn seed announced on
/// stderr. Either way the manifest records the value used, so the run
/// stays reproducible.
fn resolve_seed(flag: Option<u64>) -> u64 {
    match flag {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            eprintln!("no --seed given; drew {s}");
            s
        }
    }
}

/// Parses a TOML config file into `T`. Returns the raw value too, so
/// callers can ask which keys the file actually set.
fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, toml::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: toml::Value =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = value
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((parsed, value))
}
