//! A notebook session as the kernel sees it: cell edits, gated execution and the latest
//! highlight report.

use serde::Serialize;

use crate::highlights::{compute_report, stale_of_cell, HighlightReport, RefresherAlgo};
use crate::interp::{ExecResult, NotebookError, NotebookState};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditEvent {
    /// Counter of the execution the user forced through.
    pub counter: u64,
    pub cell_id: String,
    pub stale_symbols: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResponse {
    pub result: ExecResult,
    pub report: HighlightReport,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Notebook(#[from] NotebookError),
    #[error("cell '{cell_id}' reads stale symbols: {}", stale_symbols.join(", "))]
    StaleWarning { cell_id: String, stale_symbols: Vec<String> },
}

#[derive(Clone, Debug, Default)]
pub struct Session {
    state: NotebookState,
    report: HighlightReport,
    audit: Vec<AuditEvent>,
    algo: RefresherAlgo,
    minted: usize,
}

impl Session {
    pub fn new() -> Session {
        Session::default()
    }

    pub fn with_algo(algo: RefresherAlgo) -> Session {
        Session { algo, ..Session::default() }
    }

    pub fn state(&self) -> &NotebookState {
        &self.state
    }

    /// Report as of the latest execution; never recomputed on reads.
    pub fn report(&self) -> &HighlightReport {
        &self.report
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit
    }

    /// Creates or replaces a cell without running it. A missing id is minted.
    pub fn upsert_cell(&mut self, cell_id: Option<&str>, source: &str, position: Option<usize>) -> String {
        let id = match cell_id {
            Some(id) => id.to_string(),
            None => loop {
                self.minted += 1;
                let id = format!("c{}", self.minted);
                if self.state.cell(&id).is_none() {
                    break id;
                }
            },
        };
        self.state.upsert_cell(&id, source, position);
        id
    }

    /// Removes a cell; it also leaves every highlight set immediately.
    pub fn delete_cell(&mut self, cell_id: &str) -> Result<(), SessionError> {
        self.state.delete_cell(cell_id)?;
        let r = &mut self.report;
        for set in [&mut r.stale, &mut r.fresh, &mut r.refresher, &mut r.new_fresh, &mut r.new_refresher] {
            set.remove(cell_id);
        }
        Ok(())
    }

    /// Runs a cell. A cell in the latest stale set is refused unless `confirm_stale`; a
    /// confirmed stale run is written to the audit log.
    pub fn run_cell(&mut self, cell_id: &str, confirm_stale: bool) -> Result<RunResponse, SessionError> {
        if self.state.cell(cell_id).is_none() {
            return Err(NotebookError::UnknownCell(cell_id.to_string()).into());
        }
        let gated = self.report.stale.contains(cell_id);
        let stale_symbols: Vec<String> = if gated {
            stale_of_cell(&self.state, cell_id).iter().map(|q| q.to_string()).collect()
        } else {
            Vec::new()
        };
        if gated && !confirm_stale {
            return Err(SessionError::StaleWarning { cell_id: cell_id.to_string(), stale_symbols });
        }
        let result = self.state.execute_cell(cell_id)?;
        if gated {
            self.audit.push(AuditEvent { counter: result.counter, cell_id: cell_id.to_string(), stale_symbols });
        }
        self.report = compute_report(&self.state, Some(&self.report), self.algo);
        Ok(RunResponse { result, report: self.report.clone() })
    }

    pub fn lineage_dump(&self) -> serde_json::Value {
        self.state.lineage().dump()
    }

    /// Everything observable about the session, for before/after comparisons.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "counter": self.state.exec_counter(),
            "cells": self.state.cells().map(|(id, c)| serde_json::json!({"id": id, "source": c.source})).collect::<Vec<_>>(),
            "timestamps": self.state.cell_timestamps(),
            "globals": self.state.globals_dump(),
            "lineage": self.lineage_dump(),
            "report": self.report,
            "audit": self.audit,
        })
    }
}
