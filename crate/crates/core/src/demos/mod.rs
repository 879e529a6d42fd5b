//! Demonstrations: the scripted expert, episode recording and datasets.

pub mod dataset;
pub mod episode;
pub mod expert;
pub mod generate;

pub use dataset::{
    append_episode, build_dataset, load_dataset, sample_count, validate_dataset, write_dataset, Dataset,
    DatasetManifest, SampleIndex, ValidationReport, DEFAULT_K, DEFAULT_M,
};
pub use episode::{read_episode, record_episode, write_episode, Episode, EpisodeError, EpisodeMeta, Recorder};
pub use expert::{scripted_expert, ExpertError, ExpertPlan};
pub use generate::{demo_scene, episode_id, generate_demos, DemoConfig};
