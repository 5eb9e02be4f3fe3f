use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::derive_seed;
use crate::model::{chapters_to_json, save_manifest, Chapter, ManifestError, Movie, Shot};
use crate::prompting::{FRAME_HEIGHT, FRAME_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_movies: usize,
    pub shots_per_movie: usize,
    pub scene_len_min: usize,
    pub scene_len_max: usize,
    pub subtitle_vocab: usize,
    pub actor_vocab: usize,
    pub frames_per_shot: usize,
    /// Integer shot durations are drawn uniformly from this closed range.
    pub shot_secs_min: u32,
    pub shot_secs_max: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_movies: 5,
            shots_per_movie: 200,
            scene_len_min: 5,
            scene_len_max: 15,
            subtitle_vocab: 400,
            actor_vocab: 40,
            frames_per_shot: 3,
            shot_secs_min: 2,
            shot_secs_max: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("{0}")]
    Manifest(String),
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl From<ManifestError> for SynthError {
    fn from(e: ManifestError) -> Self {
        SynthError::Manifest(e.to_string())
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.shots_per_movie == 0 {
            return bad("shots_per_movie must be positive");
        }
        if self.scene_len_min == 0 || self.scene_len_min > self.scene_len_max {
            return bad("scene lengths need 1 <= min <= max");
        }
        if self.subtitle_vocab == 0 || self.actor_vocab == 0 {
            return bad("vocabulary sizes must be positive");
        }
        if self.frames_per_shot == 0 {
            return bad("frames_per_shot must be positive");
        }
        if self.shot_secs_min == 0 || self.shot_secs_min > self.shot_secs_max {
            return bad("shot durations need 1 <= min <= max");
        }
        Ok(())
    }
}

/// A generated movie with its latent structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMovie {
    pub movie: Movie,
    /// Scene index of every shot.
    pub scene_of: Vec<usize>,
    /// Drawn scene lengths, the last one possibly truncated by the movie end.
    pub scene_lengths: Vec<usize>,
    /// One chapter per scene, starting at the scene's first shot.
    pub chapters: Vec<Chapter>,
    scene_colors: Vec<[u8; 3]>,
}

pub fn movie_id(index: usize) -> String {
    format!("synth_{index:04}")
}

fn frame_ref(movie_id: &str, scene: usize, j: usize) -> String {
    format!("frames/{movie_id}/scene_{scene:03}_{j}.png")
}

const TOPICS: [&str; 12] = [
    "harbour", "kitchen", "office", "forest", "station", "rooftop", "hospital", "market", "library", "garage",
    "beach", "courtroom",
];

/// Generates movie `index` of the corpus. The last shot of every scene
/// (including a final scene cut short by the movie end) is labeled.
pub fn generate_movie(cfg: &SyntheticConfig, index: usize) -> Result<SyntheticMovie, SynthError> {
    cfg.validate()?;
    let id = movie_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        b"movie",
        &cfg.seed.to_le_bytes(),
        &(index as u64).to_le_bytes(),
    ]));
    let n = cfg.shots_per_movie;
    let mut scene_lengths = Vec::new();
    let mut total = 0;
    while total < n {
        let len = rng.random_range(cfg.scene_len_min..=cfg.scene_len_max);
        let len = len.min(n - total);
        scene_lengths.push(len);
        total += len;
    }

    let mut shots = Vec::with_capacity(n);
    let mut scene_of = Vec::with_capacity(n);
    let mut chapters = Vec::with_capacity(scene_lengths.len());
    let mut scene_colors = Vec::with_capacity(scene_lengths.len());
    let mut clock = 0u32;
    for (scene, &len) in scene_lengths.iter().enumerate() {
        let topic = rng.random_range(0..TOPICS.len());
        let word_base = rng.random_range(0..cfg.subtitle_vocab);
        let cast_size = rng.random_range(1..=3.min(cfg.actor_vocab));
        let cast: BTreeSet<usize> = (0..cast_size)
            .map(|_| rng.random_range(0..cfg.actor_vocab))
            .collect();
        let cast: Vec<usize> = cast.into_iter().collect();
        scene_colors.push([rng.random(), rng.random(), rng.random()]);
        chapters.push(Chapter {
            start_s: clock as f64,
            title: format!("Scene {} at the {}", scene + 1, TOPICS[topic]),
        });
        for k in 0..len {
            let words = rng.random_range(3..=6);
            let subtitle = (0..words)
                .map(|_| format!("w{}", (word_base + rng.random_range(0..8)) % cfg.subtitle_vocab))
                .collect::<Vec<_>>()
                .join(" ");
            let speakers = rng.random_range(1..=cast.len());
            let actor_ids = cast[..speakers].iter().map(|a| format!("actor_{a:02}")).collect();
            let dur = rng.random_range(cfg.shot_secs_min..=cfg.shot_secs_max);
            let shot_id = shots.len();
            shots.push(Shot {
                shot_id,
                frame_refs: (0..cfg.frames_per_shot).map(|j| frame_ref(&id, scene, j)).collect(),
                subtitle_text: format!("{} {subtitle}", TOPICS[topic]),
                actor_ids,
                start_s: Some(clock as f64),
                end_s: Some((clock + dur) as f64),
                boundary_label: Some(k + 1 == len),
            });
            scene_of.push(scene);
            clock += dur;
        }
    }
    let movie = Movie::new(id, shots)?;
    Ok(SyntheticMovie {
        movie,
        scene_of,
        scene_lengths,
        chapters,
        scene_colors,
    })
}

impl SyntheticMovie {
    /// Solid-color frames keyed by (scene, frame slot); slots differ slightly
    /// in brightness.
    pub fn frame_images(&self, frames_per_shot: usize) -> Vec<(String, RgbImage)> {
        let id = &self.movie.movie_id;
        let mut out = Vec::new();
        for (scene, color) in self.scene_colors.iter().enumerate() {
            for j in 0..frames_per_shot {
                let shade = |c: u8| c.saturating_add((j * 12) as u8);
                let px = Rgb([shade(color[0]), shade(color[1]), shade(color[2])]);
                out.push((frame_ref(id, scene, j), RgbImage::from_pixel(FRAME_WIDTH, FRAME_HEIGHT, px)));
            }
        }
        out
    }

    /// Writes `<id>.manifest.json`, `<id>.chapters.json` and the frames
    /// under `dir`. Returns the manifest path.
    pub fn write_to(&self, dir: &Path, frames_per_shot: usize) -> Result<PathBuf, SynthError> {
        let io = |path: &Path, e: &dyn std::fmt::Display| SynthError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
        let manifest = dir.join(format!("{}.manifest.json", self.movie.movie_id));
        save_manifest(&self.movie, &manifest)?;
        let chapters = dir.join(format!("{}.chapters.json", self.movie.movie_id));
        std::fs::write(&chapters, chapters_to_json(&self.chapters)).map_err(|e| io(&chapters, &e))?;
        for (rel, img) in self.frame_images(frames_per_shot) {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io(parent, &e))?;
            }
            img.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| io(&path, &e))?;
        }
        Ok(manifest)
    }
}

pub fn generate_corpus(cfg: &SyntheticConfig) -> Result<Vec<SyntheticMovie>, SynthError> {
    (0..cfg.num_movies).map(|i| generate_movie(cfg, i)).collect()
}

/// Generates and writes the whole corpus; returns the manifest paths.
pub fn write_corpus(cfg: &SyntheticConfig, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    generate_corpus(cfg)?
        .iter()
        .map(|m| m.write_to(dir, cfg.frames_per_shot))
        .collect()
}
