//! The open-set decision head.
//!
//! Per-class Weibull models are fitted to the largest Euclidean distances
//! between correct training activation vectors and their class MAV. At
//! prediction time the top-ranked activations are revised by the tail
//! probability of their MAV distance, the stripped mass feeds an `unknown`
//! pseudo-class, and softmax over the K+1 revised activations yields
//! probabilities.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{argmax, softmax_probs, ActivationVector, Network};
use crate::targets::MavSet;
use crate::weibull::{fit_weibull, WeibullModel};

/// A classification outcome: a known class index or the open-set rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Known(usize),
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => write!(f, "{c}"),
            Label::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OpenmaxConfig {
    pub tail_size: usize,
    /// Revision breadth; defaults to `min(10, K)` when `None`.
    pub alpha: Option<usize>,
}

impl Default for OpenmaxConfig {
    fn default() -> Self {
        Self {
            tail_size: 20,
            alpha: None,
        }
    }
}

/// Per-class MAVs plus per-class Weibull tail models and revision parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenmaxModel {
    mavs: MavSet,
    weibulls: Vec<WeibullModel>,
    alpha: usize,
    tail_size: usize,
}

/// Probabilities over the K known classes plus `unknown` (index K).
#[derive(Debug, Clone)]
pub struct OpenSetPrediction {
    pub probabilities: Vec<f64>,
    pub predicted: Label,
    pub certainty: f64,
}

impl OpenmaxModel {
    pub fn new(mavs: MavSet, weibulls: Vec<WeibullModel>, alpha: usize, tail_size: usize) -> Result<Self> {
        let k = mavs.num_classes();
        if weibulls.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "{} Weibull models for {k} classes",
                weibulls.len()
            )));
        }
        if alpha == 0 || alpha > k {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} out of range [1,{k}]"
            )));
        }
        Ok(Self {
            mavs,
            weibulls,
            alpha,
            tail_size,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.mavs.num_classes()
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn tail_size(&self) -> usize {
        self.tail_size
    }

    pub fn mavs(&self) -> &MavSet {
        &self.mavs
    }

    pub fn weibull(&self, class: usize) -> &WeibullModel {
        &self.weibulls[class]
    }

    /// Structured text persistence; full-precision floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let k = self.num_classes();
        let mut out = String::new();
        writeln!(out, "openmax v1").expect("string write");
        writeln!(out, "classes {k} alpha {} tail {}", self.alpha, self.tail_size)
            .expect("string write");
        for j in 0..k {
            let wb = &self.weibulls[j];
            writeln!(
                out,
                "weibull {j} shape {} scale {} shift {} tail {}",
                wb.shape, wb.scale, wb.shift, wb.tail_size
            )
            .expect("string write");
            write!(out, "mav {j} support {}", self.mavs.support(j)).expect("string write");
            for v in self.mavs.mav(j).expect("class in range") {
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
        let bad = |line: &str| Error::ModelFormat(format!("bad openmax line {line:?}"));
        let header = lines.next().unwrap_or_default();
        if header != "openmax v1" {
            return Err(Error::ModelFormat(format!("bad openmax header {header:?}")));
        }
        let meta = lines.next().ok_or_else(|| bad(""))?;
        let tok: Vec<&str> = meta.split_whitespace().collect();
        if tok.len() != 6 || tok[0] != "classes" || tok[2] != "alpha" || tok[4] != "tail" {
            return Err(bad(meta));
        }
        let k: usize = tok[1].parse().map_err(|_| bad(meta))?;
        let alpha: usize = tok[3].parse().map_err(|_| bad(meta))?;
        let tail_size: usize = tok[5].parse().map_err(|_| bad(meta))?;

        let mut weibulls = Vec::with_capacity(k);
        let mut mavs = vec![Vec::new(); k];
        let mut support = vec![0usize; k];
        for j in 0..k {
            let wline = lines.next().ok_or_else(|| bad(""))?;
            let t: Vec<&str> = wline.split_whitespace().collect();
            if t.len() != 10 || t[0] != "weibull" || t[2] != "shape" || t[4] != "scale" || t[6] != "shift" || t[8] != "tail" {
                return Err(bad(wline));
            }
            if t[1].parse::<usize>().map_err(|_| bad(wline))? != j {
                return Err(bad(wline));
            }
            weibulls.push(WeibullModel {
                shape: t[3].parse().map_err(|_| bad(wline))?,
                scale: t[5].parse().map_err(|_| bad(wline))?,
                shift: t[7].parse().map_err(|_| bad(wline))?,
                tail_size: t[9].parse().map_err(|_| bad(wline))?,
            });
            let mline = lines.next().ok_or_else(|| bad(""))?;
            let mut mt = mline.split_whitespace();
            if mt.next() != Some("mav") {
                return Err(bad(mline));
            }
            if mt.next().and_then(|s| s.parse::<usize>().ok()) != Some(j) {
                return Err(bad(mline));
            }
            if mt.next() != Some("support") {
                return Err(bad(mline));
            }
            support[j] = mt.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(mline))?;
            mavs[j] = mt
                .map(|s| s.parse::<f64>().map_err(|_| bad(mline)))
                .collect::<Result<_>>()?;
        }
        Self::new(MavSet::new(mavs, support)?, weibulls, alpha, tail_size)
    }
}

/// Euclidean distance between an activation vector and a MAV.
fn distance(av: &[f64], mav: &[f64]) -> f64 {
    av.iter()
        .zip(mav)
        .map(|(a, m)| (a - m) * (a - m))
        .sum::<f64>()
        .sqrt()
}

/// Collects per-class distances of correctly classified training AVs to
/// their MAV. Exposed so a second independent pass can cross-check builds.
pub fn class_distances(
    net: &Network,
    mavs: &MavSet,
    samples: &[(Image, usize)],
) -> Result<Vec<Vec<f64>>> {
    let k = net.num_classes();
    if mavs.num_classes() != k {
        return Err(Error::ShapeMismatch(format!(
            "MavSet has {} classes, network {k}",
            mavs.num_classes()
        )));
    }
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
    let mut per_class = vec![Vec::new(); k];
    for (label, av) in avs.into_iter().flatten() {
        per_class[label].push(distance(&av, mavs.mav(label)?));
    }
    Ok(per_class)
}

/// Fits the per-class Weibull tails and assembles the open-set model.
pub fn build_openmax(
    net: &Network,
    mavs: &MavSet,
    samples: &[(Image, usize)],
    config: &OpenmaxConfig,
) -> Result<OpenmaxModel> {
    let k = net.num_classes();
    let alpha = config.alpha.unwrap_or_else(|| k.min(10));
    let distances = class_distances(net, mavs, samples)?;
    let mut weibulls = Vec::with_capacity(k);
    for (class, dists) in distances.iter().enumerate() {
        if dists.len() < config.tail_size {
            return Err(Error::InsufficientTail {
                class,
                available: dists.len(),
                tail_size: config.tail_size,
            });
        }
        weibulls.push(fit_weibull(dists, config.tail_size)?);
    }
    OpenmaxModel::new(mavs.clone(), weibulls, alpha, config.tail_size)
}

/// Rank weight of the class at descending-activation rank `r` (1-based):
/// the top class receives the full CDF weight.
pub fn rank_weight(model_alpha: usize, rank: usize, cdf: f64) -> f64 {
    1.0 - ((model_alpha - rank + 1) as f64 / model_alpha as f64) * cdf
}

/// Revises the activation vector and normalizes over K known classes plus
/// `unknown`.
pub fn openmax_probabilities(model: &OpenmaxModel, av: &[f64]) -> Result<OpenSetPrediction> {
    let k = model.num_classes();
    if av.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "activation vector has {} entries, expected {k}",
            av.len()
        )));
    }
    // rank by activation descending; ties keep the lower class index first
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| av[b].partial_cmp(&av[a]).unwrap().then(a.cmp(&b)));

    let mut weights = vec![1.0; k];
    for (r, &j) in order.iter().take(model.alpha).enumerate() {
        let d = distance(av, model.mavs.mav(j)?);
        weights[j] = rank_weight(model.alpha, r + 1, model.weibulls[j].cdf(d));
    }
    let mut revised = Vec::with_capacity(k + 1);
    let mut unknown = 0.0;
    for j in 0..k {
        revised.push(av[j] * weights[j]);
        unknown += av[j] * (1.0 - weights[j]);
    }
    revised.push(unknown);

    let probabilities = softmax_probs(&revised)?;
    let best = argmax(&probabilities);
    let predicted = if best == k { Label::Unknown } else { Label::Known(best) };
    Ok(OpenSetPrediction {
        certainty: probabilities[best],
        probabilities,
        predicted,
    })
}

/// The two decision heads an attack can aim at.
#[derive(Clone, Copy)]
pub enum Classifier<'a> {
    Softmax,
    Openmax(&'a OpenmaxModel),
}

impl Classifier<'_> {
    /// Number of known classes the head can output.
    pub fn num_classes(&self, net: &Network) -> usize {
        match self {
            Classifier::Softmax => net.num_classes(),
            Classifier::Openmax(model) => model.num_classes(),
        }
    }

    /// Classifies an image: the label with the highest prediction
    /// probability, plus that probability.
    pub fn classify(&self, net: &Network, image: &Image) -> Result<(Label, f64)> {
        let av = net.logits(image)?;
        self.classify_av(&av)
    }

    /// Classifies an already extracted activation vector.
    pub fn classify_av(&self, av: &[f64]) -> Result<(Label, f64)> {
        match self {
            Classifier::Softmax => {
                let probs = softmax_probs(av)?;
                let best = argmax(&probs);
                Ok((Label::Known(best), probs[best]))
            }
            Classifier::Openmax(model) => {
                let pred = openmax_probabilities(model, av)?;
                Ok((pred.predicted, pred.certainty))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{seeded_rng, Dense, Layer};
    use rand::Rng;

    fn passthrough_net(k: usize) -> Network {
        let mut w = vec![0.0; k * k];
        for i in 0..k {
            w[i * k + i] = 1.0;
        }
        let dense = Dense::new(k, k, w, vec![0.0; k]).unwrap();
        Network::new((1, 1, k), k, 1.0, vec![Layer::Dense(dense)]).unwrap()
    }

    fn flat_weibull(shift: f64) -> WeibullModel {
        WeibullModel { shape: 2.0, scale: 1.0, shift, tail_size: 2 }
    }

    /// A 3-class model with unit-scale Weibulls so CDF values at chosen
    /// distances can be computed by hand.
    fn hand_model() -> OpenmaxModel {
        let mavs = MavSet::new(
            vec![
                vec![10.0, 0.0, 0.0],
                vec![0.0, 10.0, 0.0],
                vec![0.0, 0.0, 10.0],
            ],
            vec![5, 5, 5],
        )
        .unwrap();
        let weibulls = vec![flat_weibull(0.0), flat_weibull(0.0), flat_weibull(0.0)];
        OpenmaxModel::new(mavs, weibulls, 3, 2).unwrap()
    }

    #[test]
    fn zero_cdf_reduces_to_softmax() {
        // huge shifts force CDF = 0 for every class
        let mavs = MavSet::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1, 1]).unwrap();
        let weibulls = vec![flat_weibull(1e12), flat_weibull(1e12)];
        let model = OpenmaxModel::new(mavs, weibulls, 2, 2).unwrap();
        let av = [3.0, 1.5];
        let pred = openmax_probabilities(&model, &av).unwrap();
        assert_eq!(pred.predicted, Label::Known(0));
        assert_eq!(pred.probabilities[2], softmax_probs(&[3.0, 1.5, 0.0]).unwrap()[2]);
        // the K known probabilities match softmax renormalized over K+1 with
        // a zero unknown activation
        let sm = softmax_probs(&[3.0, 1.5, 0.0]).unwrap();
        for (p, s) in pred.probabilities.iter().zip(&sm).take(2) {
            assert!((p - s).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_revision() {
        let model = hand_model();
        let av = [4.0, 2.0, 1.0];
        // distances: to mav0 (10,0,0): sqrt(36+4+1) = sqrt(41)
        //            to mav1 (0,10,0): sqrt(16+64+1) = sqrt(81) = 9
        //            to mav2 (0,0,10): sqrt(16+4+81) = sqrt(101)
        let d0 = 41f64.sqrt();
        let d2 = 101f64.sqrt();
        let cdf = |d: f64| 1.0 - (-(d * d)).exp(); // shape 2, scale 1, shift 0
        let w0 = 1.0 - (3.0 / 3.0) * cdf(d0);
        let w1 = 1.0 - (2.0 / 3.0) * cdf(9.0);
        let w2 = 1.0 - (1.0 / 3.0) * cdf(d2);
        let revised = [4.0 * w0, 2.0 * w1, 1.0 * w2];
        let unknown = 4.0 * (1.0 - w0) + 2.0 * (1.0 - w1) + 1.0 * (1.0 - w2);
        let expect = softmax_probs(&[revised[0], revised[1], revised[2], unknown]).unwrap();
        let pred = openmax_probabilities(&model, &av).unwrap();
        for (p, e) in pred.probabilities.iter().zip(&expect) {
            assert!((p - e).abs() < 1e-9, "{p} vs {e}");
        }
        let sum: f64 = pred.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one_for_random_avs() {
        let model = hand_model();
        let mut rng = seeded_rng(3);
        for _ in 0..500 {
            let av: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
            let pred = openmax_probabilities(&model, &av).unwrap();
            let sum: f64 = pred.probabilities.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(pred.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
            assert_eq!(pred.probabilities.len(), 4);
        }
    }

    #[test]
    fn rank_weight_monotone_in_distance() {
        let wb = flat_weibull(1.0);
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let d = i as f64 * 0.1;
            let w = rank_weight(3, 1, wb.cdf(d));
            assert!(w <= last + 1e-15);
            last = w;
        }
    }

    #[test]
    fn av_length_is_checked() {
        let model = hand_model();
        assert!(openmax_probabilities(&model, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn far_point_is_rejected_as_unknown() {
        let model = hand_model();
        // max training distance is irrelevant here: unit-scale Weibulls give
        // CDF ~ 1 already at distance 10; this av sits ~40 away from each MAV
        let av = [30.0, 25.0, 20.0];
        let pred = openmax_probabilities(&model, &av).unwrap();
        assert_eq!(pred.predicted, Label::Unknown);
    }

    #[test]
    fn build_distances_match_hand_computation() {
        let net = passthrough_net(2);
        let mk = |px: [f64; 2], label: usize| {
            (Image::discrete(1, 1, 2, px.to_vec()).unwrap(), label)
        };
        // class 0 AVs: (10,0), (14,0) -> mav (12,0); distances 2, 2... use
        // distinct values so the tail is not degenerate
        let samples = vec![
            mk([10.0, 0.0], 0),
            mk([14.0, 0.0], 0),
            mk([13.0, 1.0], 0),
            mk([0.0, 8.0], 1),
            mk([0.0, 12.0], 1),
            mk([2.0, 11.0], 1),
        ];
        let mavs = crate::targets::compute_mavs(&net, &samples).unwrap();
        let dists = class_distances(&net, &mavs, &samples).unwrap();
        let m0 = mavs.mav(0).unwrap();
        let expect0: Vec<f64> = [[10.0, 0.0], [14.0, 0.0], [13.0, 1.0]]
            .iter()
            .map(|av| ((av[0] - m0[0]).powi(2) + (av[1] - m0[1]).powi(2)).sqrt())
            .collect();
        assert_eq!(dists[0], expect0);
    }

    #[test]
    fn insufficient_tail_names_the_class() {
        let net = passthrough_net(2);
        let mk = |px: [f64; 2], label: usize| {
            (Image::discrete(1, 1, 2, px.to_vec()).unwrap(), label)
        };
        let samples = vec![
            mk([10.0, 0.0], 0),
            mk([14.0, 0.0], 0),
            mk([13.0, 1.0], 0),
            mk([0.0, 8.0], 1),
        ];
        let mavs = crate::targets::compute_mavs(&net, &samples).unwrap();
        match build_openmax(&net, &mavs, &samples, &OpenmaxConfig { tail_size: 2, alpha: None }) {
            Err(Error::InsufficientTail { class, available, tail_size }) => {
                assert_eq!((class, available, tail_size), (1, 1, 2));
            }
            other => panic!("expected InsufficientTail, got {other:?}"),
        }
    }

    #[test]
    fn persistence_round_trip_is_bit_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("openmax.txt");
        let net = passthrough_net(2);
        let mut rng = seeded_rng(11);
        let mut samples = Vec::new();
        for _ in 0..40 {
            let hi = rng.random_range(150..=255) as f64;
            let lo = rng.random_range(0..100) as f64;
            samples.push((Image::discrete(1, 1, 2, vec![hi, lo]).unwrap(), 0));
            let hi = rng.random_range(150..=255) as f64;
            let lo = rng.random_range(0..100) as f64;
            samples.push((Image::discrete(1, 1, 2, vec![lo, hi]).unwrap(), 1));
        }
        let mavs = crate::targets::compute_mavs(&net, &samples).unwrap();
        let model =
            build_openmax(&net, &mavs, &samples, &OpenmaxConfig { tail_size: 10, alpha: None })
                .unwrap();
        model.save(&path).unwrap();
        let back = OpenmaxModel::load(&path).unwrap();
        assert_eq!(model, back);
        for _ in 0..50 {
            let av: Vec<f64> = (0..2).map(|_| rng.random_range(-300.0..300.0)).collect();
            let a = openmax_probabilities(&model, &av).unwrap();
            let b = openmax_probabilities(&back, &av).unwrap();
            assert_eq!(a.probabilities, b.probabilities);
        }
    }

    #[test]
    fn softmax_head_classifies_by_argmax() {
        let net = passthrough_net(2);
        let image = Image::discrete(1, 1, 2, vec![5.0, 1.0]).unwrap();
        let (label, certainty) = Classifier::Softmax.classify(&net, &image).unwrap();
        assert_eq!(label, Label::Known(0));
        assert!((certainty - softmax_probs(&[5.0, 1.0]).unwrap()[0]).abs() < 1e-15);
    }
}
