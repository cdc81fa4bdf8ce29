//! Ground-truth responder: writes the structured response a perfect model
//! would give, composing the metric map, the computation and the answer.

use std::fmt::Write as _;

use crate::cot::render_response;
use crate::geometry::{
    bev_project, bounding, center, center_distance, dims, min_box_distance, relative_direction,
    vertical_relation, Box2, Box3, LayoutMap, ObjectInstance, ObserverFrame,
};
use crate::qa::{final_observer, Answer, QAPair, QaError, TaskType, Unit};
use crate::scene::SceneRecord;

/// Observer frame of the sequence's first camera: the map origin.
pub fn initial_observer(scene: &SceneRecord, frames: &[usize]) -> Result<ObserverFrame, QaError> {
    let first = frames.first().copied().unwrap_or(0);
    let pose = scene.trajectory.get(first).ok_or(QaError::Malformed {
        qa_id: String::new(),
        reason: format!("frame {first} out of range"),
    })?;
    Ok(ObserverFrame::new(pose.position.xy(), pose.facing()).expect("unit facing"))
}

/// Box of `b`'s ground shadow in the observer frame. Rotations that are not
/// multiples of 90° enlarge the box to the bounds of its rotated corners.
pub fn to_observer_box(observer: &ObserverFrame, b: &Box3) -> Box2 {
    bounding(
        bev_project(b)
            .corners()
            .into_iter()
            .map(|c| observer.to_local(c)),
    )
    .expect("four corners")
}

/// Observer-centered map of the given objects.
pub fn observer_map<'a>(
    observer: &ObserverFrame,
    objects: impl IntoIterator<Item = &'a ObjectInstance<Box3>>,
) -> LayoutMap {
    let mut map = LayoutMap::default();
    for o in objects {
        map.push(o.label.clone(), to_observer_box(observer, &o.bbox));
    }
    map
}

fn lookup<'a>(scene: &'a SceneRecord, id: &str) -> Result<&'a ObjectInstance<Box3>, QaError> {
    scene
        .object(id)
        .ok_or_else(|| QaError::MissingObject(id.to_string()))
}

/// The answer text an exact responder writes: the letter, or the value with
/// enough digits to parse back to the same float.
pub fn answer_text(answer: &Answer) -> String {
    match answer {
        Answer::Choice { letter, .. } => letter.to_string(),
        Answer::Numeric {
            value,
            unit: Unit::Meters,
        } => format!("{value} m"),
        Answer::Numeric {
            value,
            unit: Unit::Count,
        } => format!("{value}"),
    }
}

pub fn oracle_response(scene: &SceneRecord, qa: &QAPair) -> Result<String, QaError> {
    let observer = initial_observer(scene, &qa.frames)?;
    let refs: Vec<&ObjectInstance<Box3>> = qa
        .refs
        .iter()
        .map(|id| lookup(scene, id))
        .collect::<Result<_, _>>()?;
    let map = observer_map(&observer, refs.iter().copied());
    let bev: Vec<Box2> = refs.iter().map(|o| bev_project(&o.bbox)).collect();

    let mut think = String::new();
    match qa.task {
        TaskType::RelativeDistance => {
            let _ = write!(think, "Center distances from the {}:", refs[0].label);
            for (o, b) in refs.iter().zip(&bev).skip(1) {
                let _ = write!(think, " {} {:.2} m;", o.label, center_distance(&bev[0], b));
            }
        }
        TaskType::VerticalDirection => {
            let (a, b) = (refs[0], refs[1]);
            let _ = write!(
                think,
                "{} spans z {:.2}-{:.2} m, {} spans z {:.2}-{:.2} m, so the {} is {} the {}.",
                a.label,
                a.bbox.min.z,
                a.bbox.max.z,
                b.label,
                b.bbox.min.z,
                b.bbox.max.z,
                a.label,
                vertical_relation(&a.bbox, &b.bbox),
                b.label
            );
        }
        TaskType::HorizontalDirection => {
            let last = final_observer(scene, &qa.frames)?;
            let d = center(&bev[0]) - last.position();
            let fwd = d.dot(last.facing());
            let lat = last.facing().cross(d);
            let dir =
                relative_direction(&last, center(&bev[0])).map_err(|e| QaError::Malformed {
                    qa_id: qa.qa_id.clone(),
                    reason: e.to_string(),
                })?;
            let _ = write!(
                think,
                "From the last viewpoint, dot = {fwd:.2} and cross = {lat:.2}, so the {} is {dir}.",
                refs[0].label
            );
        }
        TaskType::ObjectSize => {
            let (w, d) = dims(&bev[0]);
            let _ = write!(
                think,
                "The {} measures {w:.2} m by {d:.2} m; the longer side is {:.2} m.",
                refs[0].label,
                w.max(d)
            );
        }
        TaskType::MinDistance => {
            let _ = write!(
                think,
                "The closest points of the {} and the {} are {:.2} m apart.",
                refs[0].label,
                refs[1].label,
                min_box_distance(&bev[0], &bev[1])
            );
        }
        TaskType::ObjectCount => {
            let _ = write!(
                think,
                "Distinct {} instances seen: {}.",
                refs[0].label,
                refs.len()
            );
        }
    }
    Ok(render_response(
        Some(&map),
        Some(&think),
        &answer_text(&qa.answer),
    ))
}
