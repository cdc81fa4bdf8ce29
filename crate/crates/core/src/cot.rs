//! Structured chain-of-thought responses: `<map>…</map><think>…</think><answer>…</answer>`.
//!
//! The map block holds a JSON array of `{"label": str, "bbox": [xmin, ymin, xmax, ymax]}`
//! in meters. Canonical output renders coordinates with two decimals.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geometry::{Box2, LayoutMap, MapObject};
use crate::qa::{ChoiceLetter, TaskType};

const MAP_OPEN: &str = "<map>";
const MAP_CLOSE: &str = "</map>";
const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CotError {
    #[error("format")]
    Format,
    #[error("malformed map at byte {offset}: {message}")]
    MalformedMap { offset: usize, message: String },
    #[error("invalid map object {index}: {message}")]
    InvalidObject { index: usize, message: String },
    #[error("unparseable answer")]
    UnparseableAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub raw: String,
    pub map: Option<LayoutMap>,
    pub think: Option<String>,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedAnswer {
    Choice(ChoiceLetter),
    Numeric(f64),
}

/// Byte spans of the three block bodies.
struct Blocks {
    map: (usize, usize),
    think: (usize, usize),
    answer: (usize, usize),
}

fn single(raw: &str, tag: &str) -> Option<usize> {
    let mut it = raw.match_indices(tag);
    let first = it.next()?.0;
    it.next().is_none().then_some(first)
}

fn locate(raw: &str) -> Option<Blocks> {
    let mo = single(raw, MAP_OPEN)?;
    let mc = single(raw, MAP_CLOSE)?;
    let to = single(raw, THINK_OPEN)?;
    let tc = single(raw, THINK_CLOSE)?;
    let ao = single(raw, ANSWER_OPEN)?;
    let ac = single(raw, ANSWER_CLOSE)?;
    let ordered = mo + MAP_OPEN.len() <= mc
        && mc + MAP_CLOSE.len() <= to
        && to + THINK_OPEN.len() <= tc
        && tc + THINK_CLOSE.len() <= ao
        && ao + ANSWER_OPEN.len() <= ac;
    ordered.then(|| Blocks {
        map: (mo + MAP_OPEN.len(), mc),
        think: (to + THINK_OPEN.len(), tc),
        answer: (ao + ANSWER_OPEN.len(), ac),
    })
}

/// Whether `raw` follows the three-block schema. Empty map and think blocks
/// are allowed; the answer must be non-empty and a non-empty map must parse.
pub fn check_format(raw: &str) -> bool {
    let Some(b) = locate(raw) else {
        return false;
    };
    if raw[b.answer.0..b.answer.1].trim().is_empty() {
        return false;
    }
    let map = &raw[b.map.0..b.map.1];
    map.trim().is_empty() || parse_map_at(map, b.map.0).is_ok()
}

pub fn parse_response(raw: &str) -> Result<StructuredResponse, CotError> {
    let b = locate(raw).ok_or(CotError::Format)?;
    let answer = raw[b.answer.0..b.answer.1].trim();
    if answer.is_empty() {
        return Err(CotError::Format);
    }
    let map_text = &raw[b.map.0..b.map.1];
    let map = if map_text.trim().is_empty() {
        None
    } else {
        Some(parse_map_at(map_text, b.map.0)?)
    };
    let think = raw[b.think.0..b.think.1].trim();
    Ok(StructuredResponse {
        raw: raw.to_string(),
        map,
        think: (!think.is_empty()).then(|| think.to_string()),
        answer: answer.to_string(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapEntry {
    label: String,
    bbox: [f64; 4],
}

pub fn parse_map(text: &str) -> Result<LayoutMap, CotError> {
    parse_map_at(text, 0)
}

/// `base` is the byte offset of `text` within the enclosing response.
fn parse_map_at(text: &str, base: usize) -> Result<LayoutMap, CotError> {
    let entries: Vec<MapEntry> =
        serde_json::from_str(text).map_err(|e| CotError::MalformedMap {
            offset: base + byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
    let mut map = LayoutMap::default();
    for (index, e) in entries.into_iter().enumerate() {
        if e.label.trim().is_empty() {
            return Err(CotError::InvalidObject {
                index,
                message: "empty label".into(),
            });
        }
        let bbox = Box2::from_array(e.bbox).map_err(|err| CotError::InvalidObject {
            index,
            message: err.to_string(),
        })?;
        map.objects.push(MapObject {
            label: e.label,
            bbox,
        });
    }
    Ok(map)
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn fmt_coord(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Canonical map text: JSON array in input order, two-decimal coordinates.
pub fn serialize_map(m: &LayoutMap) -> String {
    let body: Vec<String> = m
        .objects
        .iter()
        .map(|o| {
            let label = serde_json::to_string(&o.label).expect("strings serialize");
            let c: Vec<String> = o.bbox.to_array().iter().map(|v| fmt_coord(*v)).collect();
            format!("{{\"label\":{label},\"bbox\":[{}]}}", c.join(","))
        })
        .collect();
    format!("[{}]", body.join(","))
}

/// Canonical three-block response text.
pub fn render_response(map: Option<&LayoutMap>, think: Option<&str>, answer: &str) -> String {
    format!(
        "{MAP_OPEN}{}{MAP_CLOSE}\n{THINK_OPEN}{}{THINK_CLOSE}\n{ANSWER_OPEN}{}{ANSWER_CLOSE}",
        map.map(serialize_map).unwrap_or_default(),
        think.unwrap_or_default(),
        answer
    )
}

impl StructuredResponse {
    /// The response re-rendered in canonical form.
    pub fn normalized(&self) -> String {
        render_response(self.map.as_ref(), self.think.as_deref(), &self.answer)
    }
}

fn letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-D])\b").expect("valid regex"))
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)([-+]?(?:\d+(?:\.\d+)?|\.\d+))\s*(centimet(?:er|re)s?|cm|met(?:er|re)s?|m)?\b",
        )
        .expect("valid regex")
    })
}

/// Pulls the first choice letter or number out of free answer text.
pub fn extract_from_text(text: &str, task: TaskType) -> Result<ParsedAnswer, CotError> {
    if task.is_multiple_choice() {
        let c = letter_re()
            .captures(text)
            .ok_or(CotError::UnparseableAnswer)?;
        let ch = c[1].chars().next().expect("one char");
        return Ok(ParsedAnswer::Choice(
            ChoiceLetter::from_char(ch).expect("regex restricts to A-D"),
        ));
    }
    let c = number_re()
        .captures(text)
        .ok_or(CotError::UnparseableAnswer)?;
    let value: f64 = c[1].parse().map_err(|_| CotError::UnparseableAnswer)?;
    let centimeters = c
        .get(2)
        .is_some_and(|u| u.as_str().to_ascii_lowercase().starts_with('c'));
    let value = if centimeters { value / 100.0 } else { value };
    if value.is_finite() {
        Ok(ParsedAnswer::Numeric(value))
    } else {
        Err(CotError::UnparseableAnswer)
    }
}

pub fn extract_answer(resp: &StructuredResponse, task: TaskType) -> Result<ParsedAnswer, CotError> {
    extract_from_text(&resp.answer, task)
}

/// The body of the `<answer>` block if one is present, else the whole text.
/// Used to score responses that do not follow the full schema.
pub fn answer_text_fallback(raw: &str) -> &str {
    if let (Some(o), Some(c)) = (raw.find(ANSWER_OPEN), raw.rfind(ANSWER_CLOSE)) {
        let start = o + ANSWER_OPEN.len();
        if start <= c {
            return &raw[start..c];
        }
    }
    raw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_map_and_think_are_valid() {
        assert!(check_format("<map></map><think></think><answer>B</answer>"));
    }

    #[test]
    fn malformed_structures_fail() {
        assert!(!check_format("<map></map><think></think><answer>B"));
        assert!(!check_format(
            "<think></think><map></map><answer>B</answer>"
        ));
        assert!(!check_format(
            "<map></map><think></think><answer>  </answer>"
        ));
        assert!(!check_format(
            "<map>[{\"label\":1}]</map><think></think><answer>B</answer>"
        ));
        assert!(!check_format(
            "<map></map><think></think><answer>A</answer><answer>B</answer>"
        ));
        assert!(!check_format(""));
    }

    #[test]
    fn parses_single_object_map() {
        let raw = r#"<map>[{"label":"sofa","bbox":[0,1,2,3]}]</map><think> d = 1 </think><answer> B </answer>"#;
        let r = parse_response(raw).unwrap();
        let m = r.map.unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.objects[0].label, "sofa");
        assert_eq!(
            m.objects[0].bbox,
            Box2::from_array([0.0, 1.0, 2.0, 3.0]).unwrap()
        );
        assert_eq!(r.think.as_deref(), Some("d = 1"));
        assert_eq!(r.answer, "B");
    }

    #[test]
    fn inverted_bbox_is_rejected() {
        let raw =
            r#"<map>[{"label":"sofa","bbox":[2,1,0,3]}]</map><think></think><answer>B</answer>"#;
        assert!(matches!(
            parse_response(raw),
            Err(CotError::InvalidObject { index: 0, .. })
        ));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let raw =
            "<map>[{\"label\":\"a\",\"bbox\":[0,0,1,1]},]</map><think></think><answer>B</answer>";
        match parse_response(raw) {
            Err(CotError::MalformedMap { offset, .. }) => {
                assert!(offset > MAP_OPEN.len() && offset <= raw.find(MAP_CLOSE).unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_response("no tags"), Err(CotError::Format));
    }

    #[test]
    fn serialize_canonical_form() {
        assert_eq!(serialize_map(&LayoutMap::default()), "[]");
        let mut m = LayoutMap::default();
        m.push("chair", Box2::from_array([0.0, 0.0, 1.0, 1.0]).unwrap());
        assert_eq!(
            serialize_map(&m),
            r#"[{"label":"chair","bbox":[0.00,0.00,1.00,1.00]}]"#
        );
        let mut n = LayoutMap::default();
        n.push(
            "a \"b\"",
            Box2::from_array([-0.001, 0.0, 0.0, 2.346]).unwrap(),
        );
        let s = serialize_map(&n);
        assert_eq!(s, r#"[{"label":"a \"b\"","bbox":[0.00,0.00,0.00,2.35]}]"#);
        assert_eq!(serialize_map(&parse_map(&s).unwrap()), s);
    }

    #[test]
    fn extracts_letters_and_numbers() {
        let r = |a: &str| StructuredResponse {
            raw: String::new(),
            map: None,
            think: None,
            answer: a.into(),
        };
        assert_eq!(
            extract_answer(&r("B"), TaskType::RelativeDistance),
            Ok(ParsedAnswer::Choice(ChoiceLetter::B))
        );
        assert_eq!(
            extract_answer(&r("(C) the lamp."), TaskType::VerticalDirection),
            Ok(ParsedAnswer::Choice(ChoiceLetter::C))
        );
        assert_eq!(
            extract_answer(&r("about 2.35 m"), TaskType::MinDistance),
            Ok(ParsedAnswer::Numeric(2.35))
        );
        assert_eq!(
            extract_answer(&r("150 cm"), TaskType::ObjectSize),
            Ok(ParsedAnswer::Numeric(1.5))
        );
        assert_eq!(
            extract_answer(&r("3 mugs"), TaskType::ObjectCount),
            Ok(ParsedAnswer::Numeric(3.0))
        );
        assert_eq!(
            extract_answer(&r("none"), TaskType::ObjectCount),
            Err(CotError::UnparseableAnswer)
        );
        assert_eq!(
            extract_answer(&r("e"), TaskType::HorizontalDirection),
            Err(CotError::UnparseableAnswer)
        );
    }

    /// Independent check for the numeric fixtures: split on whitespace and
    /// strip a trailing unit by hand.
    fn manual_number(text: &str) -> Option<f64> {
        let toks: Vec<&str> = text.split_whitespace().collect();
        for (k, tok) in toks.iter().enumerate() {
            let t = tok.trim_matches(|c: char| c == ',' || c == '.' || c == '(' || c == ')');
            let (num, mut unit) = match t.find(|c: char| c.is_alphabetic()) {
                Some(i) => (&t[..i], &t[i..]),
                None => (t, ""),
            };
            if unit.is_empty() {
                unit = toks.get(k + 1).copied().unwrap_or("");
            }
            if let Ok(v) = num.parse::<f64>() {
                let cm = unit.starts_with("cm") || unit.starts_with("centi");
                return Some(if cm { v / 100.0 } else { v });
            }
        }
        None
    }

    #[test]
    fn numeric_fixture_set_matches_manual_oracle() {
        let fixtures = [
            "about 2.35 m",
            "150 cm",
            "It is 0.8 meters.",
            "roughly 12",
            "distance: 3.5m",
            "7 chairs",
            "0.25 metres",
            "40cm",
        ];
        for f in fixtures {
            let got = extract_from_text(f, TaskType::MinDistance).unwrap();
            assert_eq!(got, ParsedAnswer::Numeric(manual_number(f).unwrap()), "{f}");
        }
    }

    #[test]
    fn answer_fallback_prefers_block() {
        assert_eq!(answer_text_fallback("x <answer>B</answer> y"), "B");
        assert_eq!(answer_text_fallback("The answer is B"), "The answer is B");
    }

    #[test]
    fn normalization_is_canonical() {
        let raw = "junk<map> [ {\"label\":\"bed\", \"bbox\":[1, 2, 3.456, 4]} ] </map> <think>\n d </think><answer>B </answer>";
        let r = parse_response(raw).unwrap();
        assert_eq!(
            r.normalized(),
            "<map>[{\"label\":\"bed\",\"bbox\":[1.00,2.00,3.46,4.00]}]</map>\n<think>d</think>\n<answer>B</answer>"
        );
        assert_eq!(
            parse_response(&r.normalized()).unwrap().normalized(),
            r.normalized()
        );
    }
}
