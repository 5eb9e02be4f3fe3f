//! Non-overlapping context/focus window planning.
//!
//! Focus spans tile the movie in `focus_len` steps. Each context extends its
//! focus by `floor((N - F) / 2)` shots on the left and `ceil((N - F) / 2)` on
//! the right, clamped to the movie. The tail focus may be shorter than `F`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ContextWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowPlanConfig {
    pub context_len: usize,
    pub focus_len: usize,
}

impl Default for WindowPlanConfig {
    fn default() -> Self {
        WindowPlanConfig {
            context_len: 20,
            focus_len: 10,
        }
    }
}

impl WindowPlanConfig {
    pub fn new(context_len: usize, focus_len: usize) -> Result<Self, WindowError> {
        let cfg = WindowPlanConfig {
            context_len,
            focus_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Context equal to focus: every focus shot sees only its own window.
    pub fn without_margins(focus_len: usize) -> Self {
        WindowPlanConfig {
            context_len: focus_len,
            focus_len,
        }
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.focus_len == 0 {
            return Err(WindowError::Config("focus_len must be at least 1".into()));
        }
        if self.focus_len > self.context_len {
            return Err(WindowError::Config(format!(
                "focus_len {} exceeds context_len {}",
                self.focus_len, self.context_len
            )));
        }
        Ok(())
    }

    pub fn left_margin(&self) -> usize {
        (self.context_len - self.focus_len) / 2
    }

    pub fn right_margin(&self) -> usize {
        let total = self.context_len - self.focus_len;
        total - total / 2
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("window config: {0}")]
    Config(String),
    #[error("cannot plan windows for an empty movie")]
    EmptyMovie,
}

pub fn plan_windows(
    movie_id: &str,
    num_shots: usize,
    cfg: &WindowPlanConfig,
) -> Result<Vec<ContextWindow>, WindowError> {
    cfg.validate()?;
    if num_shots == 0 {
        return Err(WindowError::EmptyMovie);
    }
    let (left, right) = (cfg.left_margin(), cfg.right_margin());
    let windows = (0..num_shots)
        .step_by(cfg.focus_len)
        .map(|focus_start| {
            let focus_end = (focus_start + cfg.focus_len).min(num_shots);
            ContextWindow {
                movie_id: movie_id.to_string(),
                context_start: focus_start.saturating_sub(left),
                context_end: (focus_start + cfg.focus_len + right).min(num_shots),
                focus_start,
                focus_end,
            }
        })
        .collect();
    Ok(windows)
}

/// `(shot_id, position_in_focus)` for every focus shot of the window.
pub fn window_positions(window: &ContextWindow) -> Vec<(usize, usize)> {
    window
        .focus()
        .enumerate()
        .map(|(pos, shot)| (shot, pos))
        .collect()
}
