//! Frame decoding with an in-memory decode cache and an optional on-disk
//! cache of prepared (resized, optionally marked) frames.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::RgbImage;

use super::marker::{annotate_frame, resize_frame};
use super::template::hex_sha256;
use super::PromptError;

pub type RasterImage = RgbImage;

#[derive(Debug)]
pub struct FrameStore {
    base_dir: PathBuf,
    cache_dir: Option<PathBuf>,
    decoded: Mutex<HashMap<PathBuf, Arc<RgbImage>>>,
}

impl FrameStore {
    /// Frame references are resolved against `base_dir` (the manifest's
    /// directory).
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        FrameStore {
            base_dir: base_dir.into(),
            cache_dir: None,
            decoded: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn resolve(&self, frame_ref: &str) -> PathBuf {
        let p = Path::new(frame_ref);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn decode(&self, shot_id: usize, frame_ref: &str) -> Result<Arc<RgbImage>, PromptError> {
        let path = self.resolve(frame_ref);
        if let Some(img) = self.decoded.lock().unwrap().get(&path) {
            return Ok(Arc::clone(img));
        }
        if !path.exists() {
            return Err(PromptError::MissingFrame {
                shot_id,
                path: path.clone(),
            });
        }
        let img = image::open(&path)
            .map_err(|e| PromptError::ImageDecode {
                path: path.clone(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let img = Arc::new(img);
        self.decoded
            .lock()
            .unwrap()
            .insert(path, Arc::clone(&img));
        Ok(img)
    }

    /// Loads a frame and prepares it: resized to 147x63, with the shot-id
    /// marker when `marker` is set.
    pub fn prepared(
        &self,
        shot_id: usize,
        frame_ref: &str,
        marker: bool,
    ) -> Result<Arc<RgbImage>, PromptError> {
        let cache_path = self.cache_dir.as_ref().map(|dir| {
            let key = format!("{}\0{shot_id}\0{marker}", self.resolve(frame_ref).display());
            dir.join(format!("{}.png", hex_sha256(key.as_bytes())))
        });
        if let Some(cached) = cache_path.as_ref().filter(|p| p.exists()) {
            if let Ok(img) = image::open(cached) {
                return Ok(Arc::new(img.to_rgb8()));
            }
        }
        let src = self.decode(shot_id, frame_ref)?;
        let out = if marker {
            annotate_frame(&src, shot_id)
        } else {
            resize_frame(&src)
        };
        if let Some(path) = cache_path {
            // A failed cache write only costs a recompute next time.
            if fs::create_dir_all(path.parent().unwrap()).is_ok() {
                let _ = out.save(&path);
            }
        }
        Ok(Arc::new(out))
    }
}

/// Evenly spaced indices over `available` frames; first/middle/last for 3.
pub fn sample_frame_indices(available: usize, k: usize) -> Vec<usize> {
    if available <= k {
        return (0..available).collect();
    }
    if k == 1 {
        return vec![(available - 1) / 2];
    }
    (0..k)
        .map(|j| (j * (available - 1) + (k - 1) / 2) / (k - 1))
        .collect()
}
