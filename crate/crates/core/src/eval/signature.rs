//! Joint command-tracking signatures under different grasped objects, and a
//! logistic classifier that reads object presence from them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, HandEnv, ObjectConfig, POLICY_DT};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, Table};

/// One object condition of a signature sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub label: String,
    pub class: usize,
    pub object: ObjectConfig,
}

impl Condition {
    pub fn none() -> Self {
        Self {
            label: "none".into(),
            class: 0,
            object: ObjectConfig::absent(),
        }
    }

    pub fn cube(edge_mm: f64, class: usize) -> Self {
        Self {
            label: format!("{edge_mm}mm"),
            class,
            object: ObjectConfig::cube(edge_mm * 1e-3),
        }
    }

    /// Same size with the mass multiplied by `factor`.
    pub fn heavier(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.label = format!("{}_x{factor}", self.label);
        c.object.mass *= factor;
        c
    }
}

/// No object, then 45, 55 and 65 mm cubes.
pub fn standard_conditions() -> Vec<Condition> {
    vec![
        Condition::none(),
        Condition::cube(45.0, 1),
        Condition::cube(55.0, 2),
        Condition::cube(65.0, 3),
    ]
}

/// Piecewise-constant poses: every finger's distal joint steps through
/// `levels` (normalized actions) while proximal joints stay centred.
#[derive(Clone, Debug, PartialEq)]
pub struct Script {
    pub levels: Vec<f64>,
    pub hold_seconds: f64,
    /// Leading part of every hold excluded from measurement.
    pub settle_seconds: f64,
}

impl Default for Script {
    fn default() -> Self {
        Self {
            levels: vec![-0.5, 0.0, 0.5, 1.0],
            hold_seconds: 1.5,
            settle_seconds: 1.0,
        }
    }
}

impl Script {
    pub fn action(&self, env: &HandEnv, hold: usize) -> Vec<f64> {
        let h = &env.config().hand;
        let mut a = vec![0.0; env.dof()];
        for f in 0..h.n_fingers {
            for k in 1..h.joints_per_finger {
                a[f * h.joints_per_finger + k] = self.levels[hold];
            }
        }
        a
    }

    fn steps(&self, secs: f64) -> usize {
        (secs / POLICY_DT).round() as usize
    }
}

/// Measured tracking of one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureRun {
    pub label: String,
    pub class: usize,
    /// Per-joint RMS of sensed position minus command over the measured windows, rad.
    pub rms: Vec<f64>,
    /// Per finger: touched the object during every measured window step of some hold.
    pub contact: Vec<bool>,
    /// `(hold, joint, command, sensed)` for every measured step.
    pub samples: Vec<(usize, usize, f64, f64)>,
}

/// Runs `script` once with `cond`'s object. The env's randomization and
/// sensor settings apply; `seed` fixes both.
pub fn signature_run(env_cfg: &EnvConfig, cond: &Condition, script: &Script, seed: u64) -> Result<SignatureRun> {
    if script.levels.is_empty() || script.settle_seconds >= script.hold_seconds {
        return Err(Error::Config("signature script needs holds longer than the settle time".into()));
    }
    let mut cfg = env_cfg.clone();
    cfg.object = cond.object.clone();
    cfg.task.terminate_on_drop = false;
    cfg.task.episode_seconds = script.hold_seconds * script.levels.len() as f64 + 1.0;
    let mut env = HandEnv::new(cfg, seed, 0)?;
    env.reset_with_seed(seed);
    let d = env.dof();
    let n_fingers = env.config().hand.n_fingers;
    let mut sq = vec![0.0; d];
    let mut count = 0usize;
    let mut touched = vec![false; n_fingers];
    let mut samples = Vec::new();
    let (hold_steps, settle_steps) = (script.steps(script.hold_seconds), script.steps(script.settle_seconds));
    for hold in 0..script.levels.len() {
        let action = script.action(&env, hold);
        let mut touched_all = vec![true; n_fingers];
        for s in 0..hold_steps {
            env.step(&action)?;
            if s < settle_steps {
                continue;
            }
            let cmd = env.joint_targets();
            let sensed = &env.latest_reading().pos;
            for j in 0..d {
                let e = sensed[j] - cmd[j];
                sq[j] += e * e;
                samples.push((hold, j, cmd[j], sensed[j]));
            }
            count += 1;
            for (f, c) in env.tip_contacts().into_iter().enumerate() {
                touched_all[f] &= c;
            }
        }
        for f in 0..n_fingers {
            touched[f] |= touched_all[f];
        }
    }
    Ok(SignatureRun {
        label: cond.label.clone(),
        class: cond.class,
        rms: sq.iter().map(|s| (s / count.max(1) as f64).sqrt()).collect(),
        contact: touched,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignatureDataset {
    pub runs: Vec<SignatureRun>,
    pub joints_per_finger: usize,
}

/// Runs the same script and seed under every condition.
pub fn signature_collect(env_cfg: &EnvConfig, script: &Script, conditions: &[Condition], seed: u64) -> Result<SignatureDataset> {
    let runs = conditions
        .iter()
        .map(|c| signature_run(env_cfg, c, script, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SignatureDataset {
        runs,
        joints_per_finger: env_cfg.hand.joints_per_finger,
    })
}

impl SignatureDataset {
    pub fn run(&self, label: &str) -> Option<&SignatureRun> {
        self.runs.iter().find(|r| r.label == label)
    }

    /// Joints of fingers that touched the object in every run that has one.
    pub fn contacting_joints(&self) -> Vec<usize> {
        let with_object: Vec<&SignatureRun> = self.runs.iter().filter(|r| r.contact.iter().any(|&c| c)).collect();
        let Some(first) = with_object.first() else {
            return Vec::new();
        };
        let jpf = self.joints_per_finger;
        (0..first.contact.len())
            .filter(|&f| with_object.iter().all(|r| r.contact[f]))
            .flat_map(|f| f * jpf..(f + 1) * jpf)
            .collect()
    }

    /// Per-condition, per-joint RMS deviation.
    pub fn rms_table(&self) -> Table {
        let mut t = Table::new(["condition", "joint", "rms_deviation_rad", "contact"].map(String::from).to_vec());
        for r in &self.runs {
            for (j, v) in r.rms.iter().enumerate() {
                let touched = r.contact.get(j / self.joints_per_finger).copied().unwrap_or(false);
                t.push(vec![r.label.clone(), j.to_string(), fmt_f64(*v), touched.to_string()]);
            }
        }
        t
    }

    /// Scatter data: one row per measured step and joint.
    pub fn scatter_table(&self) -> Table {
        let mut t = Table::new(["condition", "hold", "joint", "command", "sensed"].map(String::from).to_vec());
        for r in &self.runs {
            for &(h, j, c, s) in &r.samples {
                t.push(vec![r.label.clone(), h.to_string(), j.to_string(), fmt_f64(c), fmt_f64(s)]);
            }
        }
        t
    }
}

/// Multinomial logistic regression with feature standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticClassifier {
    pub classes: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major `[classes, features + 1]`, bias last.
    pub weights: Vec<f64>,
}

impl LogisticClassifier {
    /// Full-batch gradient descent on the L2-regularized cross-entropy.
    pub fn fit(x: &[Vec<f64>], y: &[usize], epochs: usize, lr: f64, l2: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Config("classifier needs matching, nonempty features and labels".into()));
        }
        let classes = y.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        for &c in y {
            seen[c] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::Config("classifier training set holds a single class".into()));
        }
        let f = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..f).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..f)
            .map(|k| {
                let v = x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut model = Self {
            classes,
            mean,
            scale,
            weights: vec![0.0; classes * (f + 1)],
        };
        let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();
        let mut grad = vec![0.0; model.weights.len()];
        for _ in 0..epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (zi, &yi) in z.iter().zip(y) {
                let p = model.probs_std(zi);
                for c in 0..classes {
                    let err = p[c] - if c == yi { 1.0 } else { 0.0 };
                    let row = &mut grad[c * (f + 1)..(c + 1) * (f + 1)];
                    for k in 0..f {
                        row[k] += err * zi[k];
                    }
                    row[f] += err;
                }
            }
            for (i, w) in model.weights.iter_mut().enumerate() {
                let reg = if i % (f + 1) == f { 0.0 } else { l2 * *w };
                *w -= lr * (grad[i] / n + reg);
            }
        }
        Ok(model)
    }

    fn standardize(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn probs_std(&self, z: &[f64]) -> Vec<f64> {
        let f = z.len();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * (f + 1)..(c + 1) * (f + 1)];
                w[..f].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + w[f]
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    pub fn predict(&self, r: &[f64]) -> usize {
        let p = self.probs_std(&self.standardize(r));
        (0..self.classes).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0)
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let hits = x.iter().zip(y).filter(|(r, &c)| self.predict(r) == c).count();
        hits as f64 / x.len() as f64
    }
}

/// Labelled per-joint RMS features from randomized signature runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

/// `per_condition` runs of every condition, each with its own seed drawn from `seed`.
pub fn signature_features(
    env_cfg: &EnvConfig,
    script: &Script,
    conditions: &[Condition],
    per_condition: usize,
    seed: u64,
) -> Result<FeatureSet> {
    let mut out = FeatureSet::default();
    for k in 0..per_condition {
        let s = crate::env::episode_seed(seed, k, 0);
        for c in conditions {
            let run = signature_run(env_cfg, c, script, s)?;
            out.x.push(run.rms);
            out.y.push(c.class);
        }
    }
    Ok(out)
}

/// Held-out accuracy of a classifier and of the same pipeline on shuffled labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierReport {
    pub accuracy: f64,
    /// Mean held-out accuracy over [`NULL_PERMUTATIONS`] label permutations.
    pub shuffled_accuracy: f64,
    pub chance: f64,
    pub train: usize,
    pub test: usize,
}

/// Label permutations averaged into the null control.
pub const NULL_PERMUTATIONS: usize = 20;

/// Splits every class in half after a seeded shuffle (stratified, so train
/// and test share class proportions), fits the classifier, and repeats with
/// permuted training labels as a null control.
pub fn object_classifier(data: &FeatureSet, seed: u64) -> Result<ClassifierReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = data.y.iter().max().map_or(0, |&c| c + 1);
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut ids: Vec<usize> = (0..data.y.len()).filter(|&i| data.y[i] == c).collect();
        ids.shuffle(&mut rng);
        let half = ids.len() / 2;
        tr.extend_from_slice(&ids[..half]);
        te.extend_from_slice(&ids[half..]);
    }
    tr.shuffle(&mut rng);
    te.shuffle(&mut rng);
    let pick = |ids: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) { ids.iter().map(|&i| (data.x[i].clone(), data.y[i])).unzip() };
    let (xtr, ytr) = pick(&tr);
    let (xte, yte) = pick(&te);
    let clf = LogisticClassifier::fit(&xtr, &ytr, 2000, 0.5, 1e-3)?;
    let mut null_acc = 0.0;
    let mut shuffled = ytr.clone();
    for _ in 0..NULL_PERMUTATIONS {
        shuffled.shuffle(&mut rng);
        null_acc += LogisticClassifier::fit(&xtr, &shuffled, 2000, 0.5, 1e-3)?.accuracy(&xte, &yte);
    }
    let mut counts = vec![0usize; clf.classes];
    for &c in &yte {
        counts[c] += 1;
    }
    let majority = counts.iter().max().copied().unwrap_or(0);
    Ok(ClassifierReport {
        accuracy: clf.accuracy(&xte, &yte),
        shuffled_accuracy: null_acc / NULL_PERMUTATIONS as f64,
        chance: majority as f64 / yte.len().max(1) as f64,
        train: xtr.len(),
        test: xte.len(),
    })
}

/// Absent (0) versus present (1), balanced by keeping as many object runs
/// (in collection order) as there are object-free runs.
pub fn presence_labels(data: &FeatureSet) -> FeatureSet {
    let absent = data.y.iter().filter(|&&c| c == 0).count();
    let mut out = FeatureSet::default();
    let mut present = 0;
    for (x, &c) in data.x.iter().zip(&data.y) {
        if c == 0 || present < absent {
            present += usize::from(c > 0);
            out.x.push(x.clone());
            out.y.push(usize::from(c > 0));
        }
    }
    out
}
