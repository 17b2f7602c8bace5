//! Logits-space targets: per-class mean activation vectors (MAVs) and
//! class aiming vectors (CAVs).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{argmax, ActivationVector, Network};

/// Default CAV magnitude: +100 for the targeted class, -100 elsewhere.
pub const CAV_MAGNITUDE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Cav,
    Mav,
}

impl TargetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetKind::Cav => "cav",
            TargetKind::Mav => "mav",
        }
    }
}

/// A K-dimensional logits-space target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub kind: TargetKind,
    pub target_class: usize,
}

/// Per-class mean activation vectors with their support counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MavSet {
    num_classes: usize,
    mavs: Vec<Vec<f64>>,
    support: Vec<usize>,
}

impl MavSet {
    pub fn new(mavs: Vec<Vec<f64>>, support: Vec<usize>) -> Result<Self> {
        let num_classes = mavs.len();
        if num_classes == 0 {
            return Err(Error::InvalidArgument("MavSet needs at least one class".into()));
        }
        if support.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} support counts for {} classes",
                support.len(),
                num_classes
            )));
        }
        for (j, mav) in mavs.iter().enumerate() {
            if mav.len() != num_classes {
                return Err(Error::ShapeMismatch(format!(
                    "MAV for class {j} has {} entries, expected {num_classes}",
                    mav.len()
                )));
            }
            if support[j] == 0 {
                return Err(Error::NoCorrectExamples { class: j });
            }
        }
        Ok(Self {
            num_classes,
            mavs,
            support,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn mav(&self, class: usize) -> Result<&[f64]> {
        self.mavs
            .get(class)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidArgument(format!("no MAV for class {class}")))
    }

    pub fn support(&self, class: usize) -> usize {
        self.support[class]
    }

    /// Structured text persistence, full precision (the shortest decimal form
    /// that parses back to the same bits).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "mavset v1").expect("string write");
        writeln!(out, "classes {}", self.num_classes).expect("string write");
        for j in 0..self.num_classes {
            write!(out, "class {} support {}", j, self.support[j]).expect("string write");
            for v in &self.mavs[j] {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "mavset v1" {
            return Err(Error::ModelFormat(format!("bad mavset header {header:?}")));
        }
        let classes_line = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("missing classes line".into()))?;
        let num_classes: usize = classes_line
            .strip_prefix("classes ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat(format!("bad classes line {classes_line:?}")))?;
        let mut mavs = vec![Vec::new(); num_classes];
        let mut support = vec![0usize; num_classes];
        for _ in 0..num_classes {
            let line = lines
                .next()
                .ok_or_else(|| Error::ModelFormat("missing class line".into()))?;
            let mut tok = line.split_whitespace();
            let parse_err = || Error::ModelFormat(format!("bad class line {line:?}"));
            if tok.next() != Some("class") {
                return Err(parse_err());
            }
            let j: usize = tok.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            if j >= num_classes || tok.next() != Some("support") {
                return Err(parse_err());
            }
            let sup: usize = tok.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let values: Vec<f64> = tok
                .map(|s| s.parse::<f64>().map_err(|_| parse_err()))
                .collect::<Result<_>>()?;
            mavs[j] = values;
            support[j] = sup;
        }
        Self::new(mavs, support)
    }
}

/// Order-independent mean: sorts each coordinate's addends by total order,
/// then accumulates with Neumaier compensation, so any permutation of the
/// input set produces bit-identical results.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / n as f64
}

/// Computes per-class MAVs from the training images the softmax head
/// classifies correctly; misclassified images are excluded. Fails if some
/// class has no correctly classified example.
pub fn compute_mavs(net: &Network, samples: &[(Image, usize)]) -> Result<MavSet> {
    let k = net.num_classes();
    let avs: Vec<Option<(usize, ActivationVector)>> = samples
        .par_iter()
        .map(|(image, label)| {
            let logits = net.logits(image)?;
            Ok(if *label < k && argmax(&logits) == *label {
                Some((*label, logits))
            } else {
                None
            })
        })
        .collect::<Result<_>>()?;

    let mut per_class: Vec<Vec<&ActivationVector>> = vec![Vec::new(); k];
    for entry in avs.iter().flatten() {
        per_class[entry.0].push(&entry.1);
    }
    let mut mavs = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    for (class, avs) in per_class.iter().enumerate() {
        if avs.is_empty() {
            return Err(Error::NoCorrectExamples { class });
        }
        let mav: Vec<f64> = (0..k)
            .map(|d| stable_mean(avs.iter().map(|av| av[d]).collect()))
            .collect();
        mavs.push(mav);
        support.push(avs.len());
    }
    MavSet::new(mavs, support)
}

/// The class aiming vector: `+magnitude` at the target class, `-magnitude`
/// elsewhere, softmax of which puts essentially all probability on the
/// target.
pub fn make_cav_with_magnitude(target_class: usize, k: usize, magnitude: f64) -> Result<TargetVector> {
    if target_class >= k {
        return Err(Error::InvalidArgument(format!(
            "target class {target_class} out of range [0,{k})"
        )));
    }
    let mut values = vec![-magnitude; k];
    values[target_class] = magnitude;
    Ok(TargetVector {
        values,
        kind: TargetKind::Cav,
        target_class,
    })
}

pub fn make_cav(target_class: usize, k: usize) -> Result<TargetVector> {
    make_cav_with_magnitude(target_class, k, CAV_MAGNITUDE)
}

/// Looks up the MAV of `target_class` as an attack target.
pub fn mav_target(mavs: &MavSet, target_class: usize) -> Result<TargetVector> {
    let values = mavs.mav(target_class)?.to_vec();
    Ok(TargetVector {
        values,
        kind: TargetKind::Mav,
        target_class,
    })
}
