//! Spatial QA generation from scene ground truth.
//!
//! Six task types, three multiple-choice and three numerical. Every answer is
//! computed with the functions in [`crate::geometry`], so it can be
//! re-derived from the scene with [`rederive_answer`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    bev_project, center, center_distance, dims, min_box_distance, relative_direction,
    vertical_relation, Box3, DirectionClass, ObjectInstance, ObserverFrame, VerticalClass,
};
use crate::scene::{
    frame_visibility, FrameSequence, SceneError, SceneRecord, DEFAULT_MIN_AREA_FRACTION,
};

/// Nearest candidate must beat the runner-up by at least this much (meters).
const NEAREST_MARGIN: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum QaError {
    #[error("quota not achievable for task types: {}", .0.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", "))]
    Unachievable(Vec<TaskType>),
    #[error("option pool too small: need at least one distractor for {0:?}")]
    PoolTooSmall(String),
    #[error("{0} is not a multiple-choice task")]
    NotMultipleChoice(TaskType),
    #[error("unknown object id {0:?}")]
    MissingObject(String),
    #[error("malformed QA pair {qa_id}: {reason}")]
    Malformed { qa_id: String, reason: String },
    #[error("unknown task type {0:?}")]
    UnknownTask(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    RelativeDistance,
    VerticalDirection,
    HorizontalDirection,
    ObjectSize,
    MinDistance,
    ObjectCount,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::RelativeDistance,
        TaskType::VerticalDirection,
        TaskType::HorizontalDirection,
        TaskType::ObjectSize,
        TaskType::MinDistance,
        TaskType::ObjectCount,
    ];

    pub fn is_multiple_choice(self) -> bool {
        matches!(
            self,
            TaskType::RelativeDistance
                | TaskType::VerticalDirection
                | TaskType::HorizontalDirection
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::RelativeDistance => "relative_distance",
            TaskType::VerticalDirection => "vertical_direction",
            TaskType::HorizontalDirection => "horizontal_direction",
            TaskType::ObjectSize => "object_size",
            TaskType::MinDistance => "min_distance",
            TaskType::ObjectCount => "object_count",
        }
    }

    fn short(self) -> &'static str {
        match self {
            TaskType::RelativeDistance => "rd",
            TaskType::VerticalDirection => "vd",
            TaskType::HorizontalDirection => "hd",
            TaskType::ObjectSize => "os",
            TaskType::MinDistance => "md",
            TaskType::ObjectCount => "oc",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = QaError;

    /// Accepts `snake_case`, `CamelCase` and two-letter (`rd`, `oc`, ...) spellings.
    fn from_str(s: &str) -> Result<Self, QaError> {
        let norm: String = s.chars().filter(|c| *c != '_' && *c != '-').collect();
        TaskType::ALL
            .into_iter()
            .find(|t| {
                t.as_str().replace('_', "").eq_ignore_ascii_case(&norm)
                    || t.short().eq_ignore_ascii_case(&norm)
            })
            .ok_or_else(|| QaError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChoiceLetter {
    A,
    B,
    C,
    D,
}

impl ChoiceLetter {
    pub const ALL: [ChoiceLetter; 4] = [
        ChoiceLetter::A,
        ChoiceLetter::B,
        ChoiceLetter::C,
        ChoiceLetter::D,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(Self::A),
            'B' => Some(Self::B),
            'C' => Some(Self::C),
            'D' => Some(Self::D),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for ChoiceLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Meters,
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    Choice {
        letter: ChoiceLetter,
        options: Vec<String>,
    },
    Numeric {
        value: f64,
        unit: Unit,
    },
}

impl Answer {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Answer::Choice { letter, options } => {
                if !(2..=4).contains(&options.len()) {
                    return Err(format!("{} options, expected 2-4", options.len()));
                }
                if letter.index() >= options.len() {
                    return Err(format!("letter {letter} has no option"));
                }
                let unique: BTreeSet<&String> = options.iter().collect();
                if unique.len() != options.len() {
                    return Err("duplicate options".into());
                }
                Ok(())
            }
            Answer::Numeric { value, .. } => {
                if value.is_finite() && *value >= 0.0 {
                    Ok(())
                } else {
                    Err(format!("numeric answer {value} must be finite and >= 0"))
                }
            }
        }
    }

    /// Text of the correct option, or the numeric value rendered losslessly.
    pub fn truth_text(&self) -> String {
        match self {
            Answer::Choice { letter, options } => options[letter.index()].clone(),
            Answer::Numeric { value, .. } => format!("{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub qa_id: String,
    pub scene_id: String,
    pub frames: Vec<usize>,
    pub task: TaskType,
    pub question: String,
    pub answer: Answer,
    pub refs: Vec<String>,
}

impl QAPair {
    pub fn sequence(&self) -> FrameSequence {
        FrameSequence {
            scene_id: self.scene_id.clone(),
            frame_indices: self.frames.clone(),
        }
    }

    /// Question plus lettered options for multiple-choice items.
    pub fn prompt_text(&self) -> String {
        match &self.answer {
            Answer::Choice { options, .. } => {
                let mut s = self.question.clone();
                s.push_str("\nOptions:");
                for (i, o) in options.iter().enumerate() {
                    s.push_str(&format!("\n{}. {}", ChoiceLetter::ALL[i], o));
                }
                s
            }
            Answer::Numeric { .. } => self.question.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("QA pair serializes")
    }
}

pub fn question_text(task: TaskType, names: &[&str]) -> String {
    match task {
        TaskType::RelativeDistance => format!(
            "Measuring between object centers, which of these objects is closest to the {}?",
            names[0]
        ),
        TaskType::VerticalDirection => format!(
            "Is the {} above, below, or at the same level as the {}?",
            names[0], names[1]
        ),
        TaskType::HorizontalDirection => format!(
            "Standing at the camera position of the last frame and facing its viewing direction, is the {} in front of you, behind you, to your left, or to your right?",
            names[0]
        ),
        TaskType::ObjectSize => format!(
            "Viewed from above, how long is the longest side of the {}, in meters?",
            names[0]
        ),
        TaskType::MinDistance => format!(
            "What is the minimum distance between the {} and the {}, in meters?",
            names[0], names[1]
        ),
        TaskType::ObjectCount => format!(
            "How many {} instances appear across these frames?",
            names[0]
        ),
    }
}

/// Builds the option list for a multiple-choice item, truth included once,
/// order shuffled by `rng`. Relative-distance distractors come from `pool`
/// (up to three); the relation tasks always offer their full closed term set.
pub fn make_distractors_with<R: Rng>(
    task: TaskType,
    truth: &str,
    pool: &[String],
    rng: &mut R,
) -> Result<Vec<String>, QaError> {
    let mut options: Vec<String> = match task {
        TaskType::VerticalDirection => VerticalClass::ALL.iter().map(|v| v.to_string()).collect(),
        TaskType::HorizontalDirection => {
            DirectionClass::ALL.iter().map(|v| v.to_string()).collect()
        }
        TaskType::RelativeDistance => {
            let mut distinct: Vec<String> = pool
                .iter()
                .filter(|p| p.as_str() != truth)
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if distinct.is_empty() {
                return Err(QaError::PoolTooSmall(truth.to_string()));
            }
            distinct.shuffle(rng);
            distinct.truncate(3);
            distinct.push(truth.to_string());
            distinct
        }
        other => return Err(QaError::NotMultipleChoice(other)),
    };
    if !options.iter().any(|o| o == truth) {
        return Err(QaError::PoolTooSmall(truth.to_string()));
    }
    options.shuffle(rng);
    Ok(options)
}

pub fn make_distractors(
    task: TaskType,
    truth: &str,
    pool: &[String],
    seed: u64,
) -> Result<Vec<String>, QaError> {
    make_distractors_with(task, truth, pool, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn choice(truth: &str, options: Vec<String>) -> Answer {
    let idx = options
        .iter()
        .position(|o| o == truth)
        .expect("truth is an option");
    Answer::Choice {
        letter: ChoiceLetter::from_index(idx).expect("at most four options"),
        options,
    }
}

/// Ids visible in at least one frame of the sequence.
pub fn visible_in_sequence(
    scene: &SceneRecord,
    frames: &[usize],
    min_area_fraction: f64,
) -> Result<BTreeSet<String>, SceneError> {
    let mut out = BTreeSet::new();
    for &f in frames {
        out.extend(frame_visibility(scene, f, min_area_fraction)?);
    }
    Ok(out)
}

/// Camera of the sequence's last frame, projected to the ground plane.
pub fn final_observer(scene: &SceneRecord, frames: &[usize]) -> Result<ObserverFrame, QaError> {
    let last = *frames.last().ok_or_else(|| QaError::Malformed {
        qa_id: String::new(),
        reason: "empty frame list".into(),
    })?;
    let pose = scene
        .trajectory
        .get(last)
        .ok_or(SceneError::FrameOutOfRange {
            frame: last,
            len: scene.trajectory.len(),
        })?;
    Ok(ObserverFrame::new(pose.position.xy(), pose.facing())
        .expect("yaw-derived facing is unit length"))
}

/// Objects of `visible` whose label occurs exactly once among them.
fn uniquely_labeled<'a>(
    scene: &'a SceneRecord,
    visible: &BTreeSet<String>,
) -> Vec<&'a ObjectInstance<Box3>> {
    let objs: Vec<&ObjectInstance<Box3>> = scene
        .objects
        .iter()
        .filter(|o| visible.contains(&o.id))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &objs {
        *counts.entry(o.label.as_str()).or_default() += 1;
    }
    objs.into_iter()
        .filter(|o| counts[o.label.as_str()] == 1)
        .collect()
}

/// One possible question on one sequence: the task plus the ordered object
/// ids it is about (for relative distance: anchor, then nearest).
#[derive(Debug, Clone)]
struct Candidate {
    seq: usize,
    ids: Vec<String>,
}

fn candidates(
    task: TaskType,
    scene: &SceneRecord,
    seq: usize,
    frames: &[usize],
    visible: &BTreeSet<String>,
) -> Result<Vec<Candidate>, QaError> {
    let uniq = uniquely_labeled(scene, visible);
    let mk = |ids: Vec<&str>| Candidate {
        seq,
        ids: ids.into_iter().map(String::from).collect(),
    };
    let mut out = Vec::new();
    match task {
        TaskType::RelativeDistance => {
            for anchor in &uniq {
                let a = bev_project(&anchor.bbox);
                let mut others: Vec<(f64, &str)> = uniq
                    .iter()
                    .filter(|o| o.id != anchor.id)
                    .map(|o| (center_distance(&a, &bev_project(&o.bbox)), o.id.as_str()))
                    .collect();
                if others.len() < 2 {
                    continue;
                }
                others.sort_by(|x, y| x.0.total_cmp(&y.0));
                if others[1].0 - others[0].0 >= NEAREST_MARGIN {
                    out.push(mk(vec![&anchor.id, others[0].1]));
                }
            }
        }
        TaskType::VerticalDirection => {
            for a in &uniq {
                for b in &uniq {
                    if a.id != b.id {
                        out.push(mk(vec![&a.id, &b.id]));
                    }
                }
            }
        }
        TaskType::HorizontalDirection => {
            let obs = final_observer(scene, frames)?;
            for a in &uniq {
                if center(&bev_project(&a.bbox)) != obs.position() {
                    out.push(mk(vec![&a.id]));
                }
            }
        }
        TaskType::ObjectSize => {
            for a in &uniq {
                out.push(mk(vec![&a.id]));
            }
        }
        TaskType::MinDistance => {
            for (i, a) in uniq.iter().enumerate() {
                for b in &uniq[i + 1..] {
                    out.push(mk(vec![&a.id, &b.id]));
                }
            }
        }
        TaskType::ObjectCount => {
            let labels: BTreeSet<&str> = scene
                .objects
                .iter()
                .filter(|o| visible.contains(&o.id))
                .map(|o| o.label.as_str())
                .collect();
            for label in labels {
                let first = scene
                    .objects
                    .iter()
                    .find(|o| o.label == label && visible.contains(&o.id))
                    .expect("label came from a visible object");
                out.push(mk(vec![&first.id]));
            }
        }
    }
    Ok(out)
}

fn lookup<'a>(scene: &'a SceneRecord, id: &str) -> Result<&'a ObjectInstance<Box3>, QaError> {
    scene
        .object(id)
        .ok_or_else(|| QaError::MissingObject(id.to_string()))
}

/// Generator settings. `remainder_offset` rotates which frame lengths receive
/// the leftover items when a quota does not divide evenly, so that batches
/// over many scenes stay balanced.
#[derive(Debug, Clone)]
pub struct QaGenerator {
    pub min_area_fraction: f64,
    pub remainder_offset: BTreeMap<TaskType, usize>,
}

impl Default for QaGenerator {
    fn default() -> Self {
        Self {
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            remainder_offset: BTreeMap::new(),
        }
    }
}

/// Items of a `quota` assigned to each of `n_lengths` cells: an even split,
/// with the remainder going to `rem` consecutive cells starting at `offset`.
pub fn split_quota(quota: usize, n_lengths: usize, offset: usize) -> Vec<usize> {
    let (base, rem) = (quota / n_lengths, quota % n_lengths);
    (0..n_lengths)
        .map(|j| base + usize::from((j + n_lengths - offset % n_lengths) % n_lengths < rem))
        .collect()
}

impl QaGenerator {
    pub fn generate(
        &self,
        scene: &SceneRecord,
        sequences: &[FrameSequence],
        quota: &BTreeMap<TaskType, usize>,
        seed: u64,
    ) -> Result<Vec<QAPair>, QaError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lengths: Vec<usize> = sequences
            .iter()
            .map(FrameSequence::len)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let visible: Vec<BTreeSet<String>> = sequences
            .iter()
            .map(|s| visible_in_sequence(scene, &s.frame_indices, self.min_area_fraction))
            .collect::<Result<_, _>>()?;

        let mut out = Vec::new();
        let mut deficient = Vec::new();
        for task in TaskType::ALL {
            let q = quota.get(&task).copied().unwrap_or(0);
            if q == 0 {
                continue;
            }
            if lengths.is_empty() {
                deficient.push(task);
                continue;
            }
            let offset = self.remainder_offset.get(&task).copied().unwrap_or(0);
            let cells = split_quota(q, lengths.len(), offset);
            let mut short = false;
            for (&len, &count) in lengths.iter().zip(&cells) {
                if count == 0 {
                    continue;
                }
                let mut pool = Vec::new();
                for (i, s) in sequences.iter().enumerate() {
                    if s.len() == len {
                        pool.extend(candidates(task, scene, i, &s.frame_indices, &visible[i])?);
                    }
                }
                if pool.len() < count {
                    short = true;
                    continue;
                }
                let mut picked = rand::seq::index::sample(&mut rng, pool.len(), count).into_vec();
                picked.sort_unstable();
                for (n, &p) in picked.iter().enumerate() {
                    let cand = &pool[p];
                    let seq = &sequences[cand.seq];
                    let qa_id = format!("{}-{}-{}-{:04}", scene.scene_id, task.short(), len, n);
                    out.push(self.build(
                        scene,
                        seq,
                        &visible[cand.seq],
                        task,
                        cand,
                        qa_id,
                        &mut rng,
                    )?);
                }
            }
            if short {
                deficient.push(task);
            }
        }
        if !deficient.is_empty() {
            return Err(QaError::Unachievable(deficient));
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        scene: &SceneRecord,
        seq: &FrameSequence,
        visible: &BTreeSet<String>,
        task: TaskType,
        cand: &Candidate,
        qa_id: String,
        rng: &mut ChaCha8Rng,
    ) -> Result<QAPair, QaError> {
        let a = lookup(scene, &cand.ids[0])?;
        let (question, answer, refs) = match task {
            TaskType::RelativeDistance => {
                let nearest = lookup(scene, &cand.ids[1])?;
                let pool: Vec<String> = uniquely_labeled(scene, visible)
                    .into_iter()
                    .filter(|o| o.id != a.id && o.id != nearest.id)
                    .map(|o| o.label.clone())
                    .collect();
                let options = make_distractors_with(task, &nearest.label, &pool, rng)?;
                let mut refs = vec![a.id.clone()];
                for label in &options {
                    let o = scene
                        .objects
                        .iter()
                        .find(|o| &o.label == label && visible.contains(&o.id))
                        .expect("option labels come from visible objects");
                    refs.push(o.id.clone());
                }
                (
                    question_text(task, &[&a.label]),
                    choice(&nearest.label, options),
                    refs,
                )
            }
            TaskType::VerticalDirection => {
                let b = lookup(scene, &cand.ids[1])?;
                let truth = vertical_relation(&a.bbox, &b.bbox).to_string();
                let options = make_distractors_with(task, &truth, &[], rng)?;
                (
                    question_text(task, &[&a.label, &b.label]),
                    choice(&truth, options),
                    vec![a.id.clone(), b.id.clone()],
                )
            }
            TaskType::HorizontalDirection => {
                let obs = final_observer(scene, &seq.frame_indices)?;
                let truth = relative_direction(&obs, center(&bev_project(&a.bbox)))
                    .expect("coincident targets are filtered out")
                    .to_string();
                let options = make_distractors_with(task, &truth, &[], rng)?;
                (
                    question_text(task, &[&a.label]),
                    choice(&truth, options),
                    vec![a.id.clone()],
                )
            }
            TaskType::ObjectSize => {
                let (w, d) = dims(&bev_project(&a.bbox));
                (
                    question_text(task, &[&a.label]),
                    Answer::Numeric {
                        value: w.max(d),
                        unit: Unit::Meters,
                    },
                    vec![a.id.clone()],
                )
            }
            TaskType::MinDistance => {
                let b = lookup(scene, &cand.ids[1])?;
                (
                    question_text(task, &[&a.label, &b.label]),
                    Answer::Numeric {
                        value: min_box_distance(&bev_project(&a.bbox), &bev_project(&b.bbox)),
                        unit: Unit::Meters,
                    },
                    vec![a.id.clone(), b.id.clone()],
                )
            }
            TaskType::ObjectCount => {
                let ids: Vec<String> = scene
                    .objects
                    .iter()
                    .filter(|o| o.label == a.label && visible.contains(&o.id))
                    .map(|o| o.id.clone())
                    .collect();
                (
                    question_text(task, &[&a.label]),
                    Answer::Numeric {
                        value: ids.len() as f64,
                        unit: Unit::Count,
                    },
                    ids,
                )
            }
        };
        Ok(QAPair {
            qa_id,
            scene_id: scene.scene_id.clone(),
            frames: seq.frame_indices.clone(),
            task,
            question,
            answer,
            refs,
        })
    }
}

/// [`QaGenerator::generate`] with default settings.
pub fn generate_qa(
    scene: &SceneRecord,
    sequences: &[FrameSequence],
    quota: &BTreeMap<TaskType, usize>,
    seed: u64,
) -> Result<Vec<QAPair>, QaError> {
    QaGenerator::default().generate(scene, sequences, quota, seed)
}

/// Recomputes the ground-truth answer of `qa` from the scene, keeping the
/// stored option list. Equality with `qa.answer` is the consistency check.
pub fn rederive_answer(
    scene: &SceneRecord,
    qa: &QAPair,
    min_area_fraction: f64,
) -> Result<Answer, QaError> {
    let malformed = |reason: &str| QaError::Malformed {
        qa_id: qa.qa_id.clone(),
        reason: reason.to_string(),
    };
    let need = |n: usize| {
        if qa.refs.len() < n {
            Err(malformed("too few referenced objects"))
        } else {
            Ok(())
        }
    };
    let options = match &qa.answer {
        Answer::Choice { options, .. } => Some(options),
        Answer::Numeric { .. } => None,
    };
    let chosen = |truth: &str| -> Result<Answer, QaError> {
        let options = options.ok_or_else(|| malformed("expected a choice answer"))?;
        let idx = options
            .iter()
            .position(|o| o == truth)
            .ok_or_else(|| malformed("truth missing from options"))?;
        Ok(Answer::Choice {
            letter: ChoiceLetter::from_index(idx).ok_or_else(|| malformed("too many options"))?,
            options: options.clone(),
        })
    };
    match qa.task {
        TaskType::RelativeDistance => {
            need(3)?;
            let anchor = bev_project(&lookup(scene, &qa.refs[0])?.bbox);
            let mut best: Option<(f64, &ObjectInstance<Box3>)> = None;
            for id in &qa.refs[1..] {
                let o = lookup(scene, id)?;
                let d = center_distance(&anchor, &bev_project(&o.bbox));
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, o));
                }
            }
            chosen(&best.expect("at least two options").1.label)
        }
        TaskType::VerticalDirection => {
            need(2)?;
            let a = lookup(scene, &qa.refs[0])?;
            let b = lookup(scene, &qa.refs[1])?;
            chosen(vertical_relation(&a.bbox, &b.bbox).as_str())
        }
        TaskType::HorizontalDirection => {
            need(1)?;
            let a = lookup(scene, &qa.refs[0])?;
            let obs = final_observer(scene, &qa.frames)?;
            let dir = relative_direction(&obs, center(&bev_project(&a.bbox)))
                .map_err(|e| malformed(&e.to_string()))?;
            chosen(dir.as_str())
        }
        TaskType::ObjectSize => {
            need(1)?;
            let (w, d) = dims(&bev_project(&lookup(scene, &qa.refs[0])?.bbox));
            Ok(Answer::Numeric {
                value: w.max(d),
                unit: Unit::Meters,
            })
        }
        TaskType::MinDistance => {
            need(2)?;
            let a = bev_project(&lookup(scene, &qa.refs[0])?.bbox);
            let b = bev_project(&lookup(scene, &qa.refs[1])?.bbox);
            Ok(Answer::Numeric {
                value: min_box_distance(&a, &b),
                unit: Unit::Meters,
            })
        }
        TaskType::ObjectCount => {
            need(1)?;
            let label = &lookup(scene, &qa.refs[0])?.label;
            let visible = visible_in_sequence(scene, &qa.frames, min_area_fraction)?;
            let n = scene
                .objects
                .iter()
                .filter(|o| &o.label == label && visible.contains(&o.id))
                .count();
            Ok(Answer::Numeric {
                value: n as f64,
                unit: Unit::Count,
            })
        }
    }
}

pub fn parse_qa_jsonl(text: &str) -> Result<Vec<QAPair>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
