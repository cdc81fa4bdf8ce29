//! Metric-grounded BEV layout maps and the tooling around them: spatial QA
//! generation from scene metadata, structured chain-of-thought parsing,
//! verifiable rewards with GRPO group statistics, and cognitive-map accuracy.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cot;
pub mod geometry;
pub mod map_eval;
pub mod oracle;
pub mod qa;
pub mod report;
pub mod reward;
pub mod scene;
pub mod synth;

pub use cot::{check_format, parse_response, serialize_map, ParsedAnswer, StructuredResponse};
pub use geometry::{
    bearing, bev_project, center, center_distance, dims, min_box_distance, relative_direction,
    vertical_relation, Box2, Box3, DirectionClass, LayoutMap, MapObject, ObjectInstance,
    ObserverFrame, Vec2, Vec3, VerticalClass,
};
pub use map_eval::{evaluate_map, rasterize, GridMap, MapAccuracyReport};
pub use qa::{generate_qa, Answer, ChoiceLetter, QAPair, TaskType, Unit};
pub use report::{report_from_scored, score_all, BenchReport, ResponseLine, ScoredRecord};
pub use reward::{
    clipped_objective, combined_reward, format_reward, group_advantages, mc_reward, num_reward,
    score_response, GroupRollout, RewardBreakdown, RewardConfig,
};
pub use scene::{
    frame_visibility, load_scene, resample_fps, sample_sequences, CameraPose, FrameSequence,
    SceneRecord,
};
