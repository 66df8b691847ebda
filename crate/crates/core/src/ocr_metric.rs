//! OCR fidelity score.
//!
//! Each ground-truth entity contributes its Levenshtein distance to the
//! predicted text, capped at the ground-truth length. The score is one minus
//! the summed distance over the summed ground-truth length, so it lies in
//! `[0, 1]` and equals 1 only for identical texts.
//!
//! Predictions arrive either keyed by entity name or as free boxes of text;
//! both are aligned to the ground-truth entity order before scoring.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Axis-aligned box `(x0, y0) – (x1, y1)` in pixels, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_well_ordered(&self) -> bool {
        self.x1 >= self.x0 && self.y1 >= self.y0
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &BoxRect) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    fn reading_order(&self, other: &BoxRect) -> Ordering {
        self.y0
            .total_cmp(&other.y0)
            .then_with(|| self.x0.total_cmp(&other.x0))
    }
}

impl Serialize for BoxRect {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x0, self.y0, self.x1, self.y1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoxRect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x0, y0, x1, y1] = <[f64; 4]>::deserialize(d)?;
        Ok(Self { x0, y0, x1, y1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoxRect,
}

/// Ground-truth entities in their annotated order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntitySet {
    pub entities: Vec<Entity>,
}

impl EntitySet {
    pub fn new(entities: Vec<Entity>) -> Self {
        Self { entities }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entities {
            if !e.bbox.is_well_ordered() {
                return Err(Error::OutOfRange(format!(
                    "entity `{}` has an inverted box",
                    e.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|e| e.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxText {
    #[serde(rename = "box")]
    pub bbox: BoxRect,
    pub text: String,
}

/// OCR output, either keyed by entity name or as a list of positioned texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OcrPrediction {
    #[serde(rename = "entities")]
    ByName(BTreeMap<String, String>),
    #[serde(rename = "boxes")]
    ByBox(Vec<BoxText>),
}

/// How predictions are matched to ground-truth entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    Name,
    Box,
}

impl AlignMode {
    pub fn of(pred: &OcrPrediction) -> Self {
        match pred {
            OcrPrediction::ByName(_) => AlignMode::Name,
            OcrPrediction::ByBox(_) => AlignMode::Box,
        }
    }

    /// Rejects predictions whose shape does not fit this mode.
    pub fn check(self, pred: &OcrPrediction) -> Result<()> {
        let got = Self::of(pred);
        if got != self {
            return Err(Error::Alignment(format!(
                "{} alignment needs {} predictions",
                self.as_str(),
                match self {
                    AlignMode::Name => "`entities`",
                    AlignMode::Box => "`boxes`",
                }
            )));
        }
        Ok(())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlignMode::Name => "name",
            AlignMode::Box => "box",
        }
    }
}

/// Predicted texts index-aligned to an [`EntitySet`]; missing ones are empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlignedTexts(pub Vec<String>);

impl AlignedTexts {
    pub fn perfect(gt: &EntitySet) -> Self {
        Self(gt.texts().map(str::to_owned).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    pub trim_and_collapse_whitespace: bool,
    pub casefold: bool,
    /// Unicode canonical composition (NFC).
    pub compose: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            trim_and_collapse_whitespace: true,
            casefold: false,
            compose: true,
        }
    }
}

impl NormalizeConfig {
    /// No normalization at all.
    pub fn raw() -> Self {
        Self {
            trim_and_collapse_whitespace: false,
            casefold: false,
            compose: false,
        }
    }
}

pub fn normalize(text: &str, cfg: &NormalizeConfig) -> String {
    let mut s: String = if cfg.compose {
        text.nfc().collect()
    } else {
        text.to_owned()
    };
    if cfg.casefold {
        s = s.to_lowercase();
    }
    if cfg.trim_and_collapse_whitespace {
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    s
}

/// Edit distance over Unicode code points with unit costs, keeping two DP rows
/// sized by the shorter string.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `min(levenshtein(gt, pd), len(gt))`, lengths in code points.
pub fn clamped_entity_distance(gt: &str, pd: &str) -> usize {
    levenshtein(gt, pd).min(gt.chars().count())
}

pub fn ldist<G: AsRef<str>, P: AsRef<str>>(gt: &[G], pd: &[P]) -> Result<usize> {
    check_lengths(gt.len(), pd.len())?;
    Ok(gt
        .iter()
        .zip(pd)
        .map(|(g, p)| clamped_entity_distance(g.as_ref(), p.as_ref()))
        .sum())
}

fn check_lengths(gt: usize, pd: usize) -> Result<()> {
    if gt != pd {
        return Err(Error::Alignment(format!(
            "{gt} ground-truth entities but {pd} predicted texts"
        )));
    }
    Ok(())
}

/// Score of already-normalized text vectors. An empty total ground-truth
/// length scores 1.0.
pub fn score_texts<G: AsRef<str>, P: AsRef<str>>(gt: &[G], pd: &[P]) -> Result<f64> {
    let dist = ldist(gt, pd)?;
    let total: usize = gt.iter().map(|g| g.as_ref().chars().count()).sum();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - dist as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDistance {
    pub name: String,
    pub gt_len: usize,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrScore {
    pub score: f64,
    pub per_entity: Vec<EntityDistance>,
}

pub fn ocr_score(gt: &EntitySet, pd: &AlignedTexts, norm: &NormalizeConfig) -> Result<f64> {
    ocr_score_detailed(gt, pd, norm).map(|s| s.score)
}

pub fn ocr_score_detailed(
    gt: &EntitySet,
    pd: &AlignedTexts,
    norm: &NormalizeConfig,
) -> Result<OcrScore> {
    check_lengths(gt.len(), pd.len())?;
    let mut per_entity = Vec::with_capacity(gt.len());
    let (mut dist, mut total) = (0usize, 0usize);
    for (e, p) in gt.entities.iter().zip(&pd.0) {
        let g = normalize(&e.text, norm);
        let p = normalize(p, norm);
        let gt_len = g.chars().count();
        let distance = clamped_entity_distance(&g, &p);
        dist += distance;
        total += gt_len;
        per_entity.push(EntityDistance {
            name: e.name.clone(),
            gt_len,
            distance,
        });
    }
    let score = if total == 0 {
        1.0
    } else {
        1.0 - dist as f64 / total as f64
    };
    Ok(OcrScore { score, per_entity })
}

fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Looks up each entity's text by name (trimmed, case-insensitive). Unknown
/// predicted names are ignored.
pub fn align_by_name<'a, I>(gt: &EntitySet, pred: I) -> AlignedTexts
where
    I: IntoIterator<Item = (&'a String, &'a String)>,
{
    let mut by_key: BTreeMap<String, &str> = BTreeMap::new();
    for (name, text) in pred {
        by_key.entry(name_key(name)).or_insert(text.as_str());
    }
    AlignedTexts(
        gt.entities
            .iter()
            .map(|e| by_key.get(&name_key(&e.name)).map_or_else(String::new, |t| (*t).to_owned()))
            .collect(),
    )
}

/// Assigns every predicted box to the entity with the highest box IoU (ties go
/// to the entity first in reading order), dropping boxes that overlap no
/// entity. Each entity's assigned texts are joined with single spaces in
/// reading order of their boxes.
pub fn align_by_box_iou(gt: &EntitySet, pred: &[BoxText]) -> AlignedTexts {
    let mut entity_order: Vec<usize> = (0..gt.len()).collect();
    entity_order.sort_by(|&a, &b| gt.entities[a].bbox.reading_order(&gt.entities[b].bbox));

    let mut assigned: Vec<Vec<&BoxText>> = vec![Vec::new(); gt.len()];
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for &i in &entity_order {
            let iou = gt.entities[i].bbox.iou(&p.bbox);
            if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                best = Some((i, iou));
            }
        }
        if let Some((i, _)) = best {
            assigned[i].push(p);
        }
    }

    AlignedTexts(
        assigned
            .into_iter()
            .map(|mut texts| {
                texts.sort_by(|a, b| a.bbox.reading_order(&b.bbox));
                texts.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
            })
            .collect(),
    )
}

pub fn align(gt: &EntitySet, pred: &OcrPrediction) -> AlignedTexts {
    match pred {
        OcrPrediction::ByName(map) => align_by_name(gt, map),
        OcrPrediction::ByBox(boxes) => align_by_box_iou(gt, boxes),
    }
}
