//! Trajectory data model, ingestion, repair, resampling, clip search and
//! frame derivation.

mod clips;
mod frames;
mod gaps;
pub mod io;
mod model;
mod resample;

pub use clips::{extract_clips, ClipSearch, DEFAULT_SEARCH_BUDGET};
pub use frames::{to_frames, track_kinematics, STATIONARY_EPS};
pub use gaps::{fill_all_gaps, fill_gaps, GapRepair, GapRepairSummary, DEFAULT_MAX_GAP};
pub use io::{
    ingest_tracks, read_clip, read_footage, write_clip, write_footage, write_tracks, ClipFile, FootageFile, IngestConfig,
    IngestReport,
};
pub use model::{sample_index, AgentState, Clip, Footage, Frame, Source, Track, TrackId, TrackPoint};
pub use resample::{downsample, resample};
