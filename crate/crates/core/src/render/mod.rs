//! Top-down rasterisation of clips and assembly of the six-pair comparison trial.

mod raster;
mod segment;
mod trial;

pub use raster::{canvas_position, compose_side_by_side, pause_card, render_frame, RenderStyle};
pub use segment::{render_clip, render_opening, Segment};
pub use trial::{
    compose_trial, frame_name, read_answer_key, read_manifest, write_trial, AnswerKey, AnswerKeyFile, ManifestPair,
    PairInput, PairPlan, Side, Trial, TrialFrame, TrialManifest, WrittenTrial, AABABB_SEED, FRAME_PATTERN, PAIR_COUNT,
    PAUSE_SECONDS, SEGMENT_SECONDS,
};
