use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSource {
    pub id: String,
    pub source: String,
}

/// On-disk notebook: `{"cells": [{"id", "source"}]}` or plain text split on `# %%` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookFile {
    pub cells: Vec<CellSource>,
}

#[derive(Debug, thiserror::Error)]
pub enum NotebookFormatError {
    #[error("invalid notebook json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate cell id '{0}'")]
    DuplicateId(String),
}

impl NotebookFile {
    pub fn from_json(text: &str) -> Result<NotebookFile, NotebookFormatError> {
        let nb: NotebookFile = serde_json::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        for c in &nb.cells {
            if !seen.insert(c.id.as_str()) {
                return Err(NotebookFormatError::DuplicateId(c.id.clone()));
            }
        }
        Ok(nb)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("notebook serializes")
    }

    /// Plain-text form. Text before the first marker is a cell only if it is non-blank.
    pub fn from_percent_text(text: &str) -> NotebookFile {
        let mut chunks: Vec<Vec<&str>> = vec![Vec::new()];
        let mut saw_marker = false;
        for line in text.lines() {
            if line.starts_with("# %%") {
                chunks.push(Vec::new());
                saw_marker = true;
            } else {
                chunks.last_mut().unwrap().push(line);
            }
        }
        let mut cells = Vec::new();
        for (i, chunk) in chunks.into_iter().enumerate() {
            let body = chunk.join("\n");
            if i == 0 && saw_marker && body.trim().is_empty() {
                continue;
            }
            cells.push(body);
        }
        NotebookFile {
            cells: cells
                .into_iter()
                .enumerate()
                .map(|(i, source)| CellSource {
                    id: format!("c{}", i + 1),
                    source: source.trim_end_matches('\n').to_string(),
                })
                .collect(),
        }
    }

    pub fn to_percent_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            out.push_str("# %%\n");
            out.push_str(&c.source);
            out.push('\n');
        }
        out
    }

    /// Picks the format from the content: JSON if it starts with `{`.
    pub fn parse(text: &str) -> Result<NotebookFile, NotebookFormatError> {
        if text.trim_start().starts_with('{') {
            NotebookFile::from_json(text)
        } else {
            Ok(NotebookFile::from_percent_text(text))
        }
    }
}
