//! Append-only session store: one JSON-lines file per session, the last
//! complete line being the committed state.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::PathBuf;

use crate::session::DesignSession;

#[derive(Debug, Clone, Default)]
pub struct Store {
    dir: Option<PathBuf>,
}

impl Store {
    /// Keeps sessions in memory only.
    pub fn ephemeral() -> Store {
        Store { dir: None }
    }

    /// Opens `dir`, creating it if needed, and returns the committed state of
    /// every session found there.
    pub fn open(dir: PathBuf) -> io::Result<(Store, Vec<DesignSession>)> {
        fs::create_dir_all(&dir)?;
        let mut sessions = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path)?;
            // A torn final write leaves an unparsable last line; the previous one stands.
            let last = text.lines().rev().find_map(|line| serde_json::from_str::<DesignSession>(line).ok());
            match last {
                Some(s) => sessions.push(s),
                None => log::warn!("no committed state in {}", path.display()),
            }
        }
        Ok((Store { dir: Some(dir) }, sessions))
    }

    pub fn append(&self, session: &DesignSession) -> io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut line = serde_json::to_string(session).map_err(io::Error::other)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(format!("{}.jsonl", session.id)))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }
}
