//! Asynchronous delta modulator.
//!
//! Each channel emits an ON event when its value rises by more than the
//! threshold between consecutive steps and an OFF event when it falls by more
//! than the threshold. The value before the first step is taken as zero, so
//! step 0 fires only if `|x_0|` itself exceeds the threshold. There is no
//! reference tracking: the comparison is always against the previous sample.

use ndarray::ArrayView2;

use crate::dataset::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Single threshold shared by all channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmConfig {
    pub threshold: f64,
}

impl AdmConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::param(format!("ADM threshold must be positive, got {threshold}")));
        }
        Ok(Self { threshold })
    }
}

/// ON/OFF events of every channel at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub on: Vec<bool>,
    pub off: Vec<bool>,
    pub step: usize,
}

impl EventFrame {
    pub fn silent(channels: usize, step: usize) -> Self {
        Self { on: vec![false; channels], off: vec![false; channels], step }
    }

    pub fn channels(&self) -> usize {
        self.on.len()
    }

    pub fn event_count(&self) -> usize {
        self.on.iter().chain(&self.off).filter(|&&e| e).count()
    }
}

/// Encodes an `N x L` sequence into `L` frames.
pub fn adm_encode<T: Real>(x: ArrayView2<'_, T>, threshold: T) -> Result<Vec<EventFrame>> {
    if !(threshold > T::zero()) {
        return Err(Error::param(format!("ADM threshold must be positive, got {threshold}")));
    }
    if let Some(((c, t), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite ADM input at channel {c}, step {t}")));
    }
    let (n, len) = x.dim();
    let mut frames = Vec::with_capacity(len);
    for t in 0..len {
        let mut frame = EventFrame::silent(n, t);
        for c in 0..n {
            let prev = if t == 0 { T::zero() } else { x[[c, t - 1]] };
            let delta = x[[c, t]] - prev;
            frame.on[c] = delta > threshold;
            frame.off[c] = delta < -threshold;
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// `[on || off]`, the input vector of the first spiking layer.
pub fn concat_on_off(frame: &EventFrame) -> Vec<bool> {
    frame.on.iter().chain(&frame.off).copied().collect()
}

/// Fraction of occupied event slots, `events / (2 * N * L)`.
pub fn event_rate(frames: &[EventFrame]) -> Result<f64> {
    let slots: usize = frames.iter().map(|f| 2 * f.channels()).sum();
    if slots == 0 {
        return Err(Error::param("event rate of an empty frame list"));
    }
    let events: usize = frames.iter().map(EventFrame::event_count).sum();
    Ok(events as f64 / slots as f64)
}

/// `2N x L` raster (ON rows first, then OFF rows) as an `i16` tensor of 0/1.
pub fn frames_to_raster(frames: &[EventFrame]) -> Result<Tensor> {
    let n = frames.first().map_or(0, EventFrame::channels);
    let len = frames.len();
    let mut values = vec![0i16; 2 * n * len];
    for (t, f) in frames.iter().enumerate() {
        for (r, &e) in concat_on_off(f).iter().enumerate() {
            values[r * len + t] = e as i16;
        }
    }
    Tensor::from_i16(vec![2 * n, len], values)
}

/// Outcome of evaluating one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdScore {
    pub score: f64,
    pub event_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub threshold: f64,
    pub score: f64,
    pub event_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub best: f64,
    pub points: Vec<GridPoint>,
}

/// 0.10, 0.15, ..., 1.00
pub fn default_candidates() -> Vec<f64> {
    (10..=100).step_by(5).map(|k| k as f64 / 100.0).collect()
}

/// Cheap stand-in objective: 1 when the event rate lies in `[0.02, 0.25]`.
pub fn proxy_score(event_rate: f64) -> f64 {
    if (0.02..=0.25).contains(&event_rate) {
        1.0
    } else {
        0.0
    }
}

/// Evaluates every candidate and returns the highest-scoring threshold; ties
/// go to the larger (sparser) threshold.
pub fn grid_search_threshold(
    candidates: &[f64],
    mut objective: impl FnMut(f64) -> Result<ThresholdScore>,
) -> Result<GridReport> {
    if candidates.is_empty() {
        return Err(Error::param("threshold grid search needs at least one candidate"));
    }
    let mut points = Vec::with_capacity(candidates.len());
    for &threshold in candidates {
        AdmConfig::new(threshold)?;
        let s = objective(threshold)?;
        points.push(GridPoint { threshold, score: s.score, event_rate: s.event_rate });
    }
    let key = |p: &GridPoint| if p.score.is_nan() { f64::NEG_INFINITY } else { p.score };
    let best = points
        .iter()
        .max_by(|a, b| key(a).total_cmp(&key(b)).then(a.threshold.total_cmp(&b.threshold)))
        .map(|p| p.threshold)
        .expect("non-empty");
    Ok(GridReport { best, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn on_off(frames: &[EventFrame], c: usize) -> Vec<(bool, bool)> {
        frames.iter().map(|f| (f.on[c], f.off[c])).collect()
    }

    #[test]
    fn hand_computed_sequence() {
        let frames = adm_encode(array![[0.0f64, 0.6, 0.3, 0.35]].view(), 0.45).unwrap();
        assert_eq!(on_off(&frames, 0), vec![(false, false), (true, false), (false, false), (false, false)]);
        assert_eq!(event_rate(&frames).unwrap(), 1.0 / 8.0);
        assert_eq!(frames.iter().map(|f| f.step).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn constant_sequence_only_step_zero_can_fire() {
        let quiet = adm_encode(array![[0.3f64, 0.3, 0.3]].view(), 0.45).unwrap();
        assert!(quiet.iter().all(|f| f.event_count() == 0));
        let loud = adm_encode(array![[-0.9f64, -0.9, -0.9]].view(), 0.45).unwrap();
        assert_eq!(on_off(&loud, 0), vec![(false, true), (false, false), (false, false)]);
    }

    #[test]
    fn alternating_sequence() {
        let frames = adm_encode(array![[1.0f64, -1.0, 1.0, -1.0, 1.0]].view(), 0.5).unwrap();
        assert_eq!(
            on_off(&frames, 0),
            vec![(true, false), (false, true), (true, false), (false, true), (true, false)]
        );
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(adm_encode(array![[0.0f64, f64::NAN]].view(), 0.5), Err(Error::Data(_))));
        assert!(adm_encode(array![[0.0f64]].view(), 0.0).is_err());
        assert!(AdmConfig::new(-1.0).is_err());
        assert!(event_rate(&[]).is_err());
    }

    #[test]
    fn concat_and_rates() {
        let f = EventFrame { on: vec![true, false], off: vec![false, true], step: 0 };
        assert_eq!(concat_on_off(&f), vec![true, false, false, true]);
        assert_eq!(concat_on_off(&EventFrame::silent(40, 0)), vec![false; 80]);
        let all_on = vec![EventFrame { on: vec![true; 3], off: vec![false; 3], step: 0 }; 4];
        assert_eq!(event_rate(&all_on).unwrap(), 0.5);
        assert_eq!(event_rate(&[EventFrame::silent(3, 0)]).unwrap(), 0.0);
    }

    #[test]
    fn raster_layout() {
        let frames = adm_encode(array![[0.0f64, 1.0], [0.0, -1.0]].view(), 0.5).unwrap();
        let r = frames_to_raster(&frames).unwrap();
        assert_eq!(r.dims(), &[4, 2]);
        assert_eq!(r.as_i16().unwrap(), &[0, 1, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn grid_search_argmax_and_ties() {
        let table = [(0.40, 0.90), (0.45, 0.91), (0.50, 0.88)];
        let score = |t: f64| {
            let s = table.iter().find(|(c, _)| (*c - t).abs() < 1e-12).unwrap().1;
            Ok(ThresholdScore { score: s, event_rate: 0.0 })
        };
        let report = grid_search_threshold(&[0.40, 0.45, 0.50], score).unwrap();
        assert_eq!(report.best, 0.45);
        assert_eq!(report.points.len(), 3);

        let flat = grid_search_threshold(&default_candidates(), |_| Ok(ThresholdScore { score: 0.7, event_rate: 0.1 }))
            .unwrap();
        assert_eq!(flat.best, 1.0);
        assert!(grid_search_threshold(&[], |_| Ok(ThresholdScore { score: 0.0, event_rate: 0.0 })).is_err());
    }

    #[test]
    fn default_grid() {
        let g = default_candidates();
        assert_eq!(g.len(), 19);
        assert_eq!((g[0], g[18]), (0.10, 1.00));
        assert_eq!(g[7], 0.45);
        assert_eq!(proxy_score(0.1), 1.0);
        assert_eq!(proxy_score(0.3), 0.0);
    }

    fn seq() -> impl Strategy<Value = Array2<f64>> {
        (1usize..6, 1usize..12).prop_flat_map(|(n, l)| {
            prop::collection::vec(-3.0f64..3.0, n * l).prop_map(move |v| Array2::from_shape_vec((n, l), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn never_both_on_and_off(x in seq(), t in 0.01f64..2.0) {
            for f in adm_encode(x.view(), t).unwrap() {
                prop_assert!(f.on.iter().zip(&f.off).all(|(a, b)| !(*a && *b)));
            }
        }

        #[test]
        fn higher_threshold_never_adds_events(x in seq(), t1 in 0.01f64..2.0, dt in 0.0f64..2.0) {
            let count = |t: f64| adm_encode(x.view(), t).unwrap().iter().map(EventFrame::event_count).sum::<usize>();
            prop_assert!(count(t1) >= count(t1 + dt));
        }

        #[test]
        fn power_of_two_scaling_is_exact(x in seq(), t in 0.01f64..2.0, k in -8i32..8) {
            let c = 2f64.powi(k);
            prop_assert_eq!(adm_encode(x.view(), t).unwrap(), adm_encode(x.mapv(|v| v * c).view(), t * c).unwrap());
        }
    }
}
