#![allow(dead_code)]

use std::path::Path;

use shotseg::model::{Chapter, Movie};
use shotseg::prompting::{FrameStore, PromptBuilder, PromptOptions, PromptTemplate};
use shotseg::simkit::{generate_corpus, MockBackend, NoiseParams, SyntheticConfig, SyntheticMovie};

/// Writes a synthetic corpus under `dir` and returns the movies together
/// with a prompt builder reading frames from there.
pub fn corpus(dir: &Path, cfg: &SyntheticConfig) -> (Vec<SyntheticMovie>, PromptBuilder) {
    let movies = generate_corpus(cfg).unwrap();
    for m in &movies {
        m.write_to(dir, cfg.frames_per_shot).unwrap();
    }
    let options = PromptOptions {
        frames_per_shot: cfg.frames_per_shot,
        ..Default::default()
    };
    let builder = PromptBuilder::new(PromptTemplate::default(), options, FrameStore::new(dir));
    (movies, builder)
}

pub fn mock_for(movies: &[SyntheticMovie], noise: NoiseParams) -> MockBackend {
    let mut mock = MockBackend::new(noise);
    for m in movies {
        mock.add_movie(&m.movie, m.chapters.clone());
    }
    mock
}

pub fn labels(movie: &Movie) -> Vec<bool> {
    movie.labels().expect("synthetic movies are labeled")
}

pub fn chapters(m: &SyntheticMovie) -> &[Chapter] {
    &m.chapters
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap()
}
