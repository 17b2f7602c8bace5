//! The four-way experiment matrix: {softmax, openmax} heads x {CAV, MAV}
//! targets over known probes and canvases.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::canvas::{generate_irregular, generate_regular, Pattern};
use crate::harness::dataset::Dataset;
use crate::image::Image;
use crate::lots::{iterative_lots, AttackConfig, FailureReason};
use crate::net::{argmax, Network};
use crate::openmax::{Classifier, Label, OpenmaxModel};
use crate::pass::pass_score;
use crate::targets::{make_cav, mav_target, TargetKind, TargetVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Head {
    Softmax,
    Openmax,
}

impl Head {
    pub fn as_str(&self) -> &'static str {
        match self {
            Head::Softmax => "softmax",
            Head::Openmax => "openmax",
        }
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Head::Softmax),
            "openmax" => Ok(Head::Openmax),
            other => Err(Error::InvalidArgument(format!(
                "unknown head {other:?}, expected softmax or openmax"
            ))),
        }
    }
}

/// How a probe image entered the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// A correctly classified test-set image of this class.
    Known { label: usize },
    /// A patterned or noise canvas with no true class.
    Canvas,
}

#[derive(Debug, Clone)]
pub struct Probe {
    pub name: String,
    pub image: Image,
    pub kind: ProbeKind,
}

#[derive(Debug, Clone)]
pub struct CanvasSpec {
    pub name: String,
    pub regular: Option<Pattern>,
}

/// Canvas roster matching the default experiment: two procedural regular
/// canvases plus two uniform-noise irregular ones.
pub fn default_canvases() -> Vec<CanvasSpec> {
    vec![
        CanvasSpec { name: "stripes".into(), regular: Some(Pattern::Stripes) },
        CanvasSpec { name: "checker".into(), regular: Some(Pattern::Checker) },
        CanvasSpec { name: "noise1".into(), regular: None },
        CanvasSpec { name: "noise2".into(), regular: None },
    ]
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub attack: AttackConfig,
    /// Known probes to select when `probe_ids` is not given.
    pub num_known_probes: usize,
    /// Explicit test-set indices overriding automatic probe selection.
    pub probe_ids: Option<Vec<usize>>,
    pub canvases: Vec<CanvasSpec>,
    /// Seeds the irregular canvases; everything downstream is deterministic.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            attack: AttackConfig::default(),
            num_known_probes: 8,
            probe_ids: None,
            canvases: default_canvases(),
            seed: 0,
        }
    }
}

/// One row of the per-attempt record.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub probe: String,
    pub head: Head,
    pub kind: TargetKind,
    pub target_class: usize,
    pub success: bool,
    pub steps_used: usize,
    pub achieved: Label,
    pub certainty: f64,
    /// PASS under the accounting conventions: the measured score when the
    /// attack reached the target (exactly 1 for an untouched probe), 0 when
    /// it failed.
    pub pass: f64,
    pub failure: Option<FailureReason>,
    pub png: String,
}

/// Everything a matrix run produces besides files on disk.
#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub attempts: Vec<AttemptRecord>,
    /// Probes excluded because a head misclassified them.
    pub skipped_probes: Vec<String>,
}

/// Picks known probes from the test set: images correctly classified by both
/// heads, one class at a time for variety, then any further correct images
/// until `num_known_probes` are found.
pub fn select_known_probes(
    net: &Network,
    openmax: &OpenmaxModel,
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<(Vec<Probe>, Vec<String>)> {
    let mut probes = Vec::new();
    let mut skipped = Vec::new();
    let both_correct = |image: &Image, label: usize| -> Result<bool> {
        let av = net.logits(image)?;
        if argmax(&av) != label {
            return Ok(false);
        }
        let (om, _) = Classifier::Openmax(openmax).classify_av(&av)?;
        Ok(om == Label::Known(label))
    };

    if let Some(ids) = &config.probe_ids {
        for &idx in ids {
            let (image, label) = dataset.test.get(idx).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "probe id {idx} out of range ({} test images)",
                    dataset.test.len()
                ))
            })?;
            let name = format!("test{idx:04}");
            if both_correct(image, *label)? {
                probes.push(Probe {
                    name,
                    image: image.clone(),
                    kind: ProbeKind::Known { label: *label },
                });
            } else {
                skipped.push(name);
            }
        }
        return Ok((probes, skipped));
    }

    let mut class_taken = vec![false; dataset.num_classes];
    for pass_two in [false, true] {
        for (idx, (image, label)) in dataset.test.iter().enumerate() {
            if probes.len() >= config.num_known_probes {
                break;
            }
            if !pass_two && class_taken[*label] {
                continue;
            }
            let name = format!("test{idx:04}");
            if probes.iter().any(|p: &Probe| p.name == name) {
                continue;
            }
            if both_correct(image, *label)? {
                class_taken[*label] = true;
                probes.push(Probe {
                    name,
                    image: image.clone(),
                    kind: ProbeKind::Known { label: *label },
                });
            }
        }
    }
    Ok((probes, skipped))
}

/// Builds the canvas probes for a config.
pub fn build_canvases(config: &ExperimentConfig, shape: (usize, usize, usize)) -> Vec<Probe> {
    let (h, w, c) = shape;
    let mut irregular_seed = config.seed;
    config
        .canvases
        .iter()
        .map(|spec| {
            let image = match spec.regular {
                Some(pattern) => generate_regular(config.seed, pattern, h, w, c),
                None => {
                    irregular_seed += 1;
                    generate_irregular(irregular_seed, h, w, c)
                }
            };
            Probe {
                name: spec.name.clone(),
                image,
                kind: ProbeKind::Canvas,
            }
        })
        .collect()
}

struct Job {
    probe: usize,
    head: Head,
    kind: TargetKind,
    target: TargetVector,
}

/// Runs every attack of the matrix, writes one PNG per attempt into
/// `out_dir`, and returns the records sorted by (probe, head, kind, target).
///
/// Target counting: a known probe is attacked toward every class except its
/// own (the same K-1 targets on both heads). A canvas is attacked toward all
/// K classes on both heads; the class a head already assigns it succeeds
/// with zero steps and counts as an automatic success under the PASS=1
/// convention.
pub fn run_matrix(
    net: &Network,
    openmax: &OpenmaxModel,
    dataset: &Dataset,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<MatrixOutput> {
    fs::create_dir_all(out_dir)?;
    let k = net.num_classes();
    let (known, skipped_probes) = select_known_probes(net, openmax, dataset, config)?;
    for name in &skipped_probes {
        eprintln!("warning: probe {name} misclassified by a head, excluded");
    }
    let mut probes = known;
    probes.extend(build_canvases(config, net.input_shape()));

    let mut jobs = Vec::new();
    for (pi, probe) in probes.iter().enumerate() {
        for head in [Head::Softmax, Head::Openmax] {
            for kind in [TargetKind::Cav, TargetKind::Mav] {
                for class in 0..k {
                    if let ProbeKind::Known { label } = probe.kind {
                        if class == label {
                            continue;
                        }
                    }
                    let target = match kind {
                        TargetKind::Cav => make_cav(class, k)?,
                        TargetKind::Mav => mav_target(openmax.mavs(), class)?,
                    };
                    jobs.push(Job { probe: pi, head, kind, target });
                }
            }
        }
    }

    let attempts: Vec<AttemptRecord> = jobs
        .par_iter()
        .map(|job| -> Result<AttemptRecord> {
            let probe = &probes[job.probe];
            let classifier = match job.head {
                Head::Softmax => Classifier::Softmax,
                Head::Openmax => Classifier::Openmax(openmax),
            };
            let result =
                iterative_lots(net, classifier, &probe.image, &job.target, &config.attack)?;
            let pass = if result.success {
                pass_score(&result.perturbed, &probe.image)?.value
            } else {
                0.0
            };
            let png = format!(
                "{}_{}_{}_{}.png",
                probe.name,
                job.head.as_str(),
                job.kind.as_str(),
                job.target.target_class
            );
            result.perturbed.save_png(&out_dir.join(&png))?;
            Ok(AttemptRecord {
                probe: probe.name.clone(),
                head: job.head,
                kind: job.kind,
                target_class: job.target.target_class,
                success: result.success,
                steps_used: result.steps_used,
                achieved: result.achieved,
                certainty: result.certainty,
                pass,
                failure: result.failure,
                png,
            })
        })
        .collect::<Result<_>>()?;

    let mut attempts = attempts;
    attempts.sort_by(|a, b| {
        (&a.probe, a.head, a.kind.as_str(), a.target_class)
            .cmp(&(&b.probe, b.head, b.kind.as_str(), b.target_class))
    });
    Ok(MatrixOutput {
        attempts,
        skipped_probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::generate_synthetic_dataset;
    use crate::net::{train, TrainConfig};
    use crate::openmax::{build_openmax, OpenmaxConfig};
    use crate::targets::compute_mavs;

    /// A small trained pipeline shared by the counting tests; 8x8 inputs keep
    /// this quick.
    fn tiny_pipeline() -> &'static (Network, OpenmaxModel, Dataset) {
        use std::sync::OnceLock;
        static PIPELINE: OnceLock<(Network, OpenmaxModel, Dataset)> = OnceLock::new();
        PIPELINE.get_or_init(|| {
            let dataset = generate_synthetic_dataset(21, 40, 6, 12, 12);
            let mut net = Network::desk_default((12, 12, 1), 10, 7).unwrap();
            train(
                &mut net,
                &dataset.train,
                &TrainConfig { epochs: 40, batch_size: 32, learning_rate: 0.25, seed: 1 },
            )
            .unwrap();
            let mavs = compute_mavs(&net, &dataset.train).unwrap();
            let openmax = build_openmax(
                &net,
                &mavs,
                &dataset.train,
                &OpenmaxConfig { tail_size: 15, alpha: None },
            )
            .unwrap();
            (net, openmax, dataset)
        })
    }

    #[test]
    fn attempt_counting_follows_the_combinatorics() {
        let (net, openmax, dataset) = tiny_pipeline();
        let out = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            attack: AttackConfig { max_steps: 25, step_linf: 1.0 },
            num_known_probes: 1,
            canvases: vec![CanvasSpec { name: "noise1".into(), regular: None }],
            ..ExperimentConfig::default()
        };
        let result = run_matrix(net, openmax, dataset, &config, out.path()).unwrap();
        let count = |probe: &str, head: Head, kind: TargetKind| {
            result
                .attempts
                .iter()
                .filter(|a| a.probe == probe && a.head == head && a.kind == kind)
                .count()
        };
        let known_name = result
            .attempts
            .iter()
            .find(|a| a.probe.starts_with("test"))
            .map(|a| a.probe.clone())
            .expect("one known probe");
        // K-1 = 9 targets per head and kind for the known probe
        for head in [Head::Softmax, Head::Openmax] {
            for kind in [TargetKind::Cav, TargetKind::Mav] {
                assert_eq!(count(&known_name, head, kind), 9);
            }
        }
        // all K = 10 targets for the canvas
        for head in [Head::Softmax, Head::Openmax] {
            for kind in [TargetKind::Cav, TargetKind::Mav] {
                assert_eq!(count("noise1", head, kind), 10);
            }
        }
        // the canvas's own softmax class is an automatic zero-step success
        let canvas = result
            .attempts
            .iter()
            .filter(|a| a.probe == "noise1" && a.head == Head::Softmax && a.kind == TargetKind::Cav)
            .find(|a| a.steps_used == 0);
        if let Some(auto) = canvas {
            assert!(auto.success);
            assert_eq!(auto.pass, 1.0);
        }
    }

    #[test]
    fn rows_are_sorted_and_pngs_written() {
        let (net, openmax, dataset) = tiny_pipeline();
        let out = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            attack: AttackConfig { max_steps: 10, step_linf: 1.0 },
            num_known_probes: 2,
            canvases: vec![],
            ..ExperimentConfig::default()
        };
        let result = run_matrix(net, openmax, dataset, &config, out.path()).unwrap();
        let keys: Vec<_> = result
            .attempts
            .iter()
            .map(|a| (a.probe.clone(), a.head, a.kind.as_str(), a.target_class))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for a in &result.attempts {
            assert!(out.path().join(&a.png).exists(), "{} missing", a.png);
        }
    }

    #[test]
    fn selected_probes_are_correct_under_both_heads() {
        let (net, openmax, dataset) = tiny_pipeline();
        let config = ExperimentConfig { num_known_probes: 6, ..ExperimentConfig::default() };
        let (probes, _) = select_known_probes(net, openmax, dataset, &config).unwrap();
        assert!(probes.len() >= 4, "picked {}", probes.len());
        for probe in &probes {
            let ProbeKind::Known { label } = probe.kind else { panic!("known expected") };
            let av = net.logits(&probe.image).unwrap();
            assert_eq!(argmax(&av), label);
            let (om, _) = Classifier::Openmax(openmax).classify_av(&av).unwrap();
            assert_eq!(om, Label::Known(label));
        }
    }

    #[test]
    fn matrix_is_bit_reproducible() {
        let (net, openmax, dataset) = tiny_pipeline();
        let config = ExperimentConfig {
            attack: AttackConfig { max_steps: 15, step_linf: 1.0 },
            num_known_probes: 2,
            seed: 3,
            ..ExperimentConfig::default()
        };
        let csv = |dir: &Path| -> String {
            let result = run_matrix(net, openmax, dataset, &config, dir).unwrap();
            let path = dir.join("attempts.csv");
            crate::harness::report::write_attempts_csv(&result.attempts, &path).unwrap();
            std::fs::read_to_string(path).unwrap()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert_eq!(csv(a.path()), csv(b.path()));
    }

    #[test]
    fn noise_canvases_are_mostly_unknown_under_openmax() {
        let (net, openmax, _) = tiny_pipeline();
        let mut unknown = 0;
        for seed in 0..20 {
            let canvas = generate_irregular(1000 + seed, 12, 12, 1);
            let (label, _) = Classifier::Openmax(openmax).classify(net, &canvas).unwrap();
            if label == Label::Unknown {
                unknown += 1;
            }
        }
        assert!(unknown > 10, "only {unknown}/20 canvases rejected");
    }

    #[test]
    fn explicit_probe_ids_exclude_misclassified() {
        let (net, openmax, dataset) = tiny_pipeline();
        // find one correct and one wrong test image under softmax
        let mut correct = None;
        let mut wrong = None;
        for (i, (image, label)) in dataset.test.iter().enumerate() {
            let av = net.logits(image).unwrap();
            if argmax(&av) == *label && correct.is_none() {
                let (om, _) = Classifier::Openmax(openmax).classify_av(&av).unwrap();
                if om == Label::Known(*label) {
                    correct = Some(i);
                }
            }
            if argmax(&av) != *label && wrong.is_none() {
                wrong = Some(i);
            }
        }
        let Some(cidx) = correct else { return };
        let mut ids = vec![cidx];
        if let Some(widx) = wrong {
            ids.push(widx);
        }
        let config = ExperimentConfig { probe_ids: Some(ids), ..ExperimentConfig::default() };
        let (probes, skipped) = select_known_probes(net, openmax, dataset, &config).unwrap();
        assert_eq!(probes.len(), 1);
        if wrong.is_some() {
            assert_eq!(skipped.len(), 1);
        }
    }
}
