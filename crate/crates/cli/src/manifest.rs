use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{ArgMatches, CommandFactory};

use crate::{Cli, CliError};

/// Output directory bookkeeping: files are written through it so every one
/// ends up listed in `run-manifest.txt`.
pub struct Manifest {
    dir: PathBuf,
    settings: Vec<(String, String)>,
    notes: Vec<(String, String)>,
    outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "run-manifest.txt";

impl Manifest {
    /// Creates the output directory and records every resolved setting of
    /// the subcommand (defaults included), in declaration order.
    pub fn new(cli: &Cli, matches: &ArgMatches, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(&cli.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;
        let mut settings = vec![
            ("command".to_string(), command.to_string()),
            ("seed".into(), cli.seed.to_string()),
        ];
        let root = Cli::command();
        let sub = root.find_subcommand(command).expect("subcommand exists");
        let sub_matches = matches.subcommand_matches(command).expect("subcommand matched");
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if matches!(id, "help" | "version" | "seed" | "out" | "config") {
                continue;
            }
            let value = match sub_matches.get_raw(id) {
                Some(raw) => raw
                    .map(|v| v.to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join(","),
                None => String::new(),
            };
            settings.push((id.to_string(), value));
        }
        Ok(Manifest {
            dir: cli.out.clone(),
            settings,
            notes: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Informational line, written as a comment so the manifest stays
    /// usable as a `--config` file.
    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut s = String::new();
        for (k, v) in &self.settings {
            writeln!(s, "{k} = {v}").unwrap();
        }
        for (k, v) in &self.notes {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        for o in &self.outputs {
            writeln!(s, "output = {o}").unwrap();
        }
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, s).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
