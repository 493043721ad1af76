use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use smocklab_core::analysis::{diagnostics, Diagnostics};
use smocklab_core::design::{run_pipeline, PipelineParams, PipelineRun};
use smocklab_core::io::PatternFile;
use smocklab_core::pattern::SmockingPattern;
use smocklab_core::{Result, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub diagnostics: Diagnostics,
    pub run: PipelineRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSession {
    pub id: String,
    pub pattern: PatternFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PipelineParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<SessionResults>,
    /// Milliseconds since the Unix epoch.
    pub updated_at: u64,
}

/// What `GET /sessions/{id}` returns: the session without the raw run.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView<'a> {
    pub id: &'a str,
    pub pattern: &'a PatternFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<&'a PipelineParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<ResultsView<'a>>,
    pub updated_at: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultsView<'a> {
    pub diagnostics: &'a Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
}

impl DesignSession {
    pub fn new(id: String, pattern: PatternFile) -> Self {
        DesignSession { id, pattern, params: None, results: None, updated_at: now_ms() }
    }

    pub fn view(&self) -> SessionView<'_> {
        SessionView {
            id: &self.id,
            pattern: &self.pattern,
            params: self.params.as_ref(),
            results: self.results.as_ref().map(|r| ResultsView {
                diagnostics: &r.diagnostics,
                mesh: r.run.design.is_some().then(|| format!("/sessions/{}/result/mesh", self.id)),
            }),
            updated_at: self.updated_at,
        }
    }

    /// Parameters a simulate call without overrides uses.
    pub fn effective_params(&self) -> PipelineParams {
        self.params.clone().unwrap_or_else(|| self.pattern.params())
    }

    pub fn touch(&mut self) {
        self.updated_at = now_ms();
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Runs the pipeline up to `stage` and collects diagnostics.
pub fn simulate(p: &SmockingPattern, params: &PipelineParams, stage: Stage) -> Result<SessionResults> {
    let run = run_pipeline(p, params, stage, None)?;
    Ok(SessionResults { diagnostics: diagnostics(p, &run)?, run })
}
