use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Tables and the run summary go to a directory, or to stdout and stderr.
pub struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
        })
    }

    pub fn table(&self, name: &str, csv: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(format!("{name}.csv"));
                std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }

    pub fn summary<T: Serialize>(&self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        match &self.dir {
            Some(d) => {
                let path = d.join("summary.json");
                std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
            }
            None => {
                eprintln!("{text}");
                Ok(())
            }
        }
    }
}
