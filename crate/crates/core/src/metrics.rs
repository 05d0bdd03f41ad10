//! Foreground/background PSNR and F-measure.
//!
//! Intensities are on a `[0, 1]` scale, so the PSNR peak is 1. Only frames
//! carrying a label mask take part in any metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{MaskTensor, VideoTensor};

/// Reported in place of +∞ for exact reconstructions.
pub const PSNR_CAP: f64 = 99.0;

/// Default number of thresholds in the F-measure sweep.
pub const SWEEP_STEPS: usize = 64;

/// Per-frame foreground labels; unlabeled frames are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundLabels {
    m: usize,
    n: usize,
    frames: Vec<Option<Vec<bool>>>,
}

impl ForegroundLabels {
    pub fn new(m: usize, n: usize, frames: Vec<Option<Vec<bool>>>) -> Result<Self> {
        for (k, f) in frames.iter().enumerate() {
            if let Some(f) = f {
                if f.len() != m * n {
                    return Err(Error::Dimension(format!(
                        "label frame {k} has {} entries, expected {}",
                        f.len(),
                        m * n
                    )));
                }
            }
        }
        Ok(ForegroundLabels { m, n, frames })
    }

    /// Every frame labeled.
    pub fn from_mask(mask: &MaskTensor) -> Self {
        let (m, n, p) = mask.shape();
        ForegroundLabels {
            m,
            n,
            frames: (0..p).map(|k| Some(mask.frame(k).to_vec())).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.frames.len())
    }

    pub fn frame(&self, k: usize) -> Option<&[bool]> {
        self.frames[k].as_deref()
    }

    pub fn labeled_frames(&self) -> impl Iterator<Item = (usize, &[bool])> {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(k, f)| f.as_deref().map(|f| (k, f)))
    }

    /// Swap foreground and background on labeled frames.
    pub fn complement(&self) -> Self {
        ForegroundLabels {
            m: self.m,
            n: self.n,
            frames: self
                .frames
                .iter()
                .map(|f| f.as_ref().map(|f| f.iter().map(|b| !b).collect()))
                .collect(),
        }
    }
}

fn check(x: &VideoTensor, labels: &ForegroundLabels) -> Result<()> {
    if x.shape() != labels.shape() {
        return Err(Error::Dimension(format!(
            "video is {:?}, labels are {:?}",
            x.shape(),
            labels.shape()
        )));
    }
    Ok(())
}

/// `10 log10(1 / mse)`, capped.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// PSNR over labeled foreground pixels (or background pixels when `foreground` is false).
pub fn region_psnr(
    estimate: &VideoTensor,
    truth: &VideoTensor,
    labels: &ForegroundLabels,
    foreground: bool,
) -> Result<f64> {
    check(estimate, labels)?;
    check(truth, labels)?;
    let mn = labels.m * labels.n;
    let (est, tru) = (estimate.as_slice(), truth.as_slice());
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, lab) in labels.labeled_frames() {
        for (r, &is_fg) in lab.iter().enumerate() {
            if is_fg == foreground {
                let d = est[k * mn + r] - tru[k * mn + r];
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        let region = if foreground { "foreground" } else { "background" };
        return Err(Error::UndefinedMetric(format!("empty {region} region")));
    }
    Ok(psnr_from_mse(sum / count as f64))
}

/// `(f-PSNR, b-PSNR)` of an estimate against the truth.
pub fn fb_psnr(estimate: &VideoTensor, truth: &VideoTensor, labels: &ForegroundLabels) -> Result<(f64, f64)> {
    Ok((
        region_psnr(estimate, truth, labels, true)?,
        region_psnr(estimate, truth, labels, false)?,
    ))
}

/// How `|S|` is binarized for the F-measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Best F over `max|S| * i / (steps + 1)` for `i = 1..=steps`.
    Sweep(usize),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Sweep(SWEEP_STEPS)
    }
}

impl std::fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdPolicy::Fixed(t) => write!(f, "fixed:{t}"),
            ThresholdPolicy::Sweep(n) => write!(f, "sweep:{n}"),
        }
    }
}

/// `2PR/(P+R)`, taking undefined precision or recall as 0.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// F-measure of `|S| > threshold` against the labels; returns `(F, threshold)`.
pub fn f_measure(s: &VideoTensor, labels: &ForegroundLabels, policy: ThresholdPolicy) -> Result<(f64, f64)> {
    check(s, labels)?;
    let mn = labels.m * labels.n;
    let data = s.as_slice();
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (k, lab) in labels.labeled_frames() {
        scored.extend(lab.iter().enumerate().map(|(r, &l)| (data[k * mn + r].abs(), l)));
    }
    let positives = scored.iter().filter(|(_, l)| *l).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("no positive labels".into()));
    }
    let score_at = |t: f64| {
        let (mut tp, mut fp) = (0, 0);
        for &(v, l) in &scored {
            if v > t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        f1(tp, fp, positives - tp)
    };
    match policy {
        ThresholdPolicy::Fixed(t) => Ok((score_at(t), t)),
        ThresholdPolicy::Sweep(steps) => {
            let steps = steps.max(1);
            let peak = scored.iter().map(|(v, _)| *v).fold(0.0, f64::max);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 1..=steps {
                let t = peak * i as f64 / (steps + 1) as f64;
                let f = score_at(t);
                if f > best.0 {
                    best = (f, t);
                }
            }
            Ok(best)
        }
    }
}

/// Evaluation summary. Metrics that could not be computed are `None`, with the reason in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f_psnr: Option<f64>,
    pub b_psnr: Option<f64>,
    pub f_measure: Option<f64>,
    pub threshold: Option<f64>,
    pub threshold_policy: String,
    pub psnr_peak: f64,
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Compute every metric, recording failures instead of aborting.
    pub fn evaluate(
        reconstruction: &VideoTensor,
        foreground: &VideoTensor,
        truth: &VideoTensor,
        labels: &ForegroundLabels,
        policy: ThresholdPolicy,
    ) -> Self {
        let mut notes = Vec::new();
        let mut keep = |r: Result<f64>, name: &str| match r {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("{name}: {e}"));
                None
            }
        };
        let f_psnr = keep(region_psnr(reconstruction, truth, labels, true), "f_psnr");
        let b_psnr = keep(region_psnr(reconstruction, truth, labels, false), "b_psnr");
        let (f, t) = match f_measure(foreground, labels, policy) {
            Ok((f, t)) => (Some(f), Some(t)),
            Err(e) => {
                notes.push(format!("f_measure: {e}"));
                (None, None)
            }
        };
        MetricsReport {
            f_psnr,
            b_psnr,
            f_measure: f,
            threshold: t,
            threshold_policy: policy.to_string(),
            psnr_peak: 1.0,
            notes,
        }
    }

    /// Flat `key=value` lines; undefined metrics are written as `undefined`.
    pub fn to_key_value(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:?}"));
        let mut out = format!(
            "f_psnr={}\nb_psnr={}\nf_measure={}\nthreshold={}\nthreshold_policy={}\npsnr_peak={:?}\n",
            fmt(self.f_psnr),
            fmt(self.b_psnr),
            fmt(self.f_measure),
            fmt(self.threshold),
            self.threshold_policy,
            self.psnr_peak
        );
        for note in &self.notes {
            out.push_str(&format!("note={note}\n"));
        }
        out
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut report = MetricsReport {
            f_psnr: None,
            b_psnr: None,
            f_measure: None,
            threshold: None,
            threshold_policy: String::new(),
            psnr_peak: 1.0,
            notes: Vec::new(),
        };
        let num = |v: &str| -> Result<Option<f64>> {
            if v == "undefined" {
                Ok(None)
            } else {
                v.parse()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("bad number {v:?}")))
            }
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected key=value, got {line:?}")))?;
            match key {
                "f_psnr" => report.f_psnr = num(value)?,
                "b_psnr" => report.b_psnr = num(value)?,
                "f_measure" => report.f_measure = num(value)?,
                "threshold" => report.threshold = num(value)?,
                "threshold_policy" => report.threshold_policy = value.to_string(),
                "psnr_peak" => report.psnr_peak = num(value)?.unwrap_or(1.0),
                "note" => report.notes.push(value.to_string()),
                other => return Err(Error::Format(format!("unknown key {other:?}"))),
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn video(m: usize, n: usize, p: usize, data: Vec<f64>) -> VideoTensor {
        VideoTensor::from_matrix(m, n, DMatrix::from_vec(m * n, p, data)).unwrap()
    }

    fn labels_from(m: usize, n: usize, p: usize, data: Vec<bool>) -> ForegroundLabels {
        ForegroundLabels::from_mask(&MaskTensor::from_vec(m, n, p, data).unwrap())
    }

    #[test]
    fn exact_match_is_capped() {
        let v = video(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]);
        let l = labels_from(2, 2, 1, vec![true, false, true, false]);
        assert_eq!(fb_psnr(&v, &v, &l).unwrap(), (PSNR_CAP, PSNR_CAP));
    }

    #[test]
    fn uniform_error_gives_twenty_db() {
        let t = video(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]);
        let e = video(2, 2, 1, vec![0.2, 0.3, 0.4, 0.5]);
        let l = labels_from(2, 2, 1, vec![true, false, true, false]);
        let (f, b) = fb_psnr(&e, &t, &l).unwrap();
        assert!((f - 20.0).abs() < 1e-9 && (b - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_region_is_undefined() {
        let v = video(1, 2, 1, vec![0.0, 0.0]);
        let l = labels_from(1, 2, 1, vec![false, false]);
        assert!(matches!(fb_psnr(&v, &v, &l), Err(Error::UndefinedMetric(_))));
        assert!(matches!(
            f_measure(&v, &l, ThresholdPolicy::default()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn unlabeled_frames_are_ignored() {
        let t = video(1, 2, 2, vec![0.0, 0.0, 0.0, 0.0]);
        let e = video(1, 2, 2, vec![0.1, 0.1, 0.9, 0.9]);
        let l = ForegroundLabels::new(1, 2, vec![Some(vec![true, false]), None]).unwrap();
        let (f, b) = fb_psnr(&e, &t, &l).unwrap();
        assert!((f - 20.0).abs() < 1e-9 && (b - 20.0).abs() < 1e-9);
    }

    #[test]
    fn f_measure_examples() {
        let lab = vec![true, true, false, false];
        let l = labels_from(2, 2, 1, lab.clone());
        let exact = video(2, 2, 1, lab.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        assert_eq!(f_measure(&exact, &l, ThresholdPolicy::default()).unwrap().0, 1.0);
        let disjoint = video(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(f_measure(&disjoint, &l, ThresholdPolicy::Fixed(0.5)).unwrap().0, 0.0);
        let half = video(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0]);
        let (f, _) = f_measure(&half, &l, ThresholdPolicy::Fixed(0.5)).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips() {
        let r = MetricsReport {
            f_psnr: Some(31.25),
            b_psnr: None,
            f_measure: Some(0.1 + 0.2),
            threshold: Some(1e-7),
            threshold_policy: "sweep:64".into(),
            psnr_peak: 1.0,
            notes: vec!["b_psnr: undefined metric: empty background region".into()],
        };
        assert_eq!(MetricsReport::from_key_value(&r.to_key_value()).unwrap(), r);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), r);
    }

    fn two_pass_psnr(est: &[f64], tru: &[f64], sel: &[bool]) -> f64 {
        let idx: Vec<usize> = (0..sel.len()).filter(|&i| sel[i]).collect();
        let mse = idx.iter().map(|&i| (est[i] - tru[i]).powi(2)).sum::<f64>() / idx.len() as f64;
        10.0 * (1.0 / mse).log10()
    }

    proptest! {
        #[test]
        fn psnr_matches_recomputation_and_swaps(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let len = 5 * 4 * 3;
            let t: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
            let e: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut sel: Vec<bool> = (0..len).map(|_| rng.random_bool(0.3)).collect();
            sel[0] = true;
            sel[1] = false;
            let l = labels_from(5, 4, 3, sel.clone());
            let (tv, ev) = (video(5, 4, 3, t.clone()), video(5, 4, 3, e.clone()));
            let (f, b) = fb_psnr(&ev, &tv, &l).unwrap();
            prop_assert!((f - two_pass_psnr(&e, &t, &sel)).abs() < 1e-9);
            let inv: Vec<bool> = sel.iter().map(|b| !b).collect();
            prop_assert!((b - two_pass_psnr(&e, &t, &inv)).abs() < 1e-9);
            let (f2, b2) = fb_psnr(&ev, &tv, &l.complement()).unwrap();
            prop_assert_eq!((f2, b2), (b, f));
        }

        #[test]
        fn sweep_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let len = 6 * 6 * 2;
            let mut sel: Vec<bool> = (0..len).map(|_| rng.random_bool(0.3)).collect();
            sel[0] = true;
            // Dyadic magnitudes keep the rescaled thresholds exact.
            let s: Vec<f64> = (0..len).map(|_| rng.random_range(0..64) as f64 / 64.0).collect();
            let scale = 2f64.powi(scale.log2().round() as i32);
            let l = labels_from(6, 6, 2, sel);
            let (f1, _) = f_measure(&video(6, 6, 2, s.clone()), &l, ThresholdPolicy::default()).unwrap();
            let scaled: Vec<f64> = s.iter().map(|v| v * scale).collect();
            let (f2, _) = f_measure(&video(6, 6, 2, scaled), &l, ThresholdPolicy::default()).unwrap();
            prop_assert_eq!(f1, f2);
        }
    }
}
