//! Any-order notebook safety engine.
//!
//! Cells written in CellScript run on a tracing interpreter that records per-symbol lineage.
//! A static checker combines that lineage with liveness and initialized-variable analyses to
//! flag stale cells and to suggest cells whose re-execution resolves the staleness.

pub mod bench;
pub mod checker;
pub mod highlights;
pub mod interp;
pub mod lang;
pub mod lineage;
pub mod replay;
pub mod session;
pub mod synth;

pub use checker::{classify_cell, dead, liveness, Classification, DeadResult, LivenessResult, RuntimeContext};
pub use interp::{ExecResult, ExecStatus, LineageEvent, NotebookError, NotebookState};
pub use lang::{parse_cell, QualifiedName, SyntaxError};
pub use lineage::{LineageGraph, ShadowSymbol};
pub use highlights::{compute_report, HighlightReport, RefresherAlgo};
pub use replay::{replay_session, Family, MetricsRecord, ReplayOptions, SessionLog};
pub use session::{RunResponse, Session, SessionError};
