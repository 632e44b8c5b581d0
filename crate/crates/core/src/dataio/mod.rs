//! Trajectory files, scene grids, windowing, normalization, splits and the
//! synthetic crowd generator.

pub mod grid;
pub mod records;
pub mod sample;
pub mod split;
pub mod synth;

pub use grid::{center_crop, crop_scene, rotate_crop, SceneGrid, OUT_OF_BOUNDS};
pub use records::{format_trajectories, frame_step, parse_trajectories, parse_trajectory_file, snap, FrameRecord, COORD_LATTICE};
pub use sample::{
    denormalize, normalize, rotate_augment, rotate_point, to_world, window_samples, Point, SequenceSample, WindowSpec,
    DEFAULT_NEIGHBOR_CAP,
};
pub use split::{augment_margin, list_scenes, prepare_scene, PreparedSample, SceneData, SplitPlan};
pub use synth::{synth_dataset, synth_scene, synth_scene_labeled, Behavior, BehaviorMix, SynthConfig, AVOID_RADIUS, FRAME_GAP, STEP_SECONDS};
