use num_complex::Complex64;
use std::collections::VecDeque;

use super::{Estimator, MeanMode, OutputSample, SimConfig};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

type Block = [Complex64; 16];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Two-time products of output fluctuations over sliding origins.
///
/// With `x = (a_out1, a_out2, b_out1, b_out2) − means` the accumulator keeps
/// `P_k[i][j] = Σ_t x_i(t) x_j(t + τ_k)` and `Q_k[i][j] = Σ_t x_i(t) x_j*(t + τ_k)`,
/// which fix the full 8×8 correlation of `(x, x*)` pairs. Trajectories are
/// separate time series; merging sums their products.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    lag_count: usize,
    lag_stride: usize,
    lag_spacing: f64,
    means: [Complex64; 4],
    estimator: Estimator,
    mean_mode: MeanMode,
    taper: bool,
    ring: VecDeque<[Complex64; 4]>,
    ring_n: VecDeque<[f64; 4]>,
    pending: [Complex64; 4],
    pending_count: usize,
    p: Vec<Block>,
    q: Vec<Block>,
    /// Real photon-number products for the quadratic estimator.
    r: Vec<[f64; 16]>,
    sum: [Complex64; 4],
    count: u64,
}

impl CorrelationAccumulator {
    /// Empty accumulator for fluctuations about `means`.
    pub fn new(config: &SimConfig, means: [Complex64; 4]) -> Self {
        let n = config.lag_count;
        Self {
            lag_count: n,
            lag_stride: config.lag_stride,
            lag_spacing: config.lag_spacing(),
            means,
            estimator: config.estimator,
            mean_mode: config.mean_mode,
            taper: config.taper,
            ring: VecDeque::with_capacity(n),
            ring_n: VecDeque::with_capacity(n),
            pending: [ZERO; 4],
            pending_count: 0,
            p: vec![[ZERO; 16]; n],
            q: vec![[ZERO; 16]; n],
            r: match config.estimator {
                Estimator::Quadratic => vec![[0.0; 16]; n],
                Estimator::Linearized => Vec::new(),
            },
            sum: [ZERO; 4],
            count: 0,
        }
    }

    pub fn lag_count(&self) -> usize {
        self.lag_count
    }

    pub fn lag_spacing(&self) -> f64 {
        self.lag_spacing
    }

    pub fn means(&self) -> [Complex64; 4] {
        self.means
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    pub fn taper(&self) -> bool {
        self.taper
    }

    /// Number of correlation samples (windows merged by the lag stride).
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Mean of the fluctuations about the reference means.
    pub fn fluctuation_mean(&self) -> [Complex64; 4] {
        let n = self.count.max(1) as f64;
        self.sum.map(|s| s / n)
    }

    pub fn push(&mut self, sample: &OutputSample) {
        let v = sample.to_array();
        for k in 0..4 {
            self.pending[k] += v[k];
        }
        self.pending_count += 1;
        if self.pending_count == self.lag_stride {
            let m = self.pending_count as f64;
            let x: [Complex64; 4] = std::array::from_fn(|k| self.pending[k] / m - self.means[k]);
            self.pending = [ZERO; 4];
            self.pending_count = 0;
            self.push_fluctuation(x);
        }
    }

    fn push_fluctuation(&mut self, x: [Complex64; 4]) {
        if self.ring.len() == self.lag_count {
            self.ring.pop_back();
        }
        self.ring.push_front(x);
        let xc = x.map(|z| z.conj());
        for (k, old) in self.ring.iter().enumerate() {
            let p = &mut self.p[k];
            let q = &mut self.q[k];
            for i in 0..4 {
                let o = old[i];
                for j in 0..4 {
                    p[4 * i + j] += o * x[j];
                    q[4 * i + j] += o * xc[j];
                }
            }
        }
        if self.estimator == Estimator::Quadratic {
            let n: [f64; 4] = std::array::from_fn(|k| {
                (x[k] + self.means[k]).norm_sqr() - self.means[k].norm_sqr()
            });
            if self.ring_n.len() == self.lag_count {
                self.ring_n.pop_back();
            }
            self.ring_n.push_front(n);
            for (k, old) in self.ring_n.iter().enumerate() {
                let r = &mut self.r[k];
                for i in 0..4 {
                    for j in 0..4 {
                        r[4 * i + j] += old[i] * n[j];
                    }
                }
            }
        }
        for k in 0..4 {
            self.sum[k] += x[k];
        }
        self.count += 1;
    }

    /// Fold in another series with the same configuration.
    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        let same = self.lag_count == other.lag_count
            && self.lag_stride == other.lag_stride
            && self.lag_spacing == other.lag_spacing
            && self.means == other.means
            && self.estimator == other.estimator
            && self.mean_mode == other.mean_mode
            && self.taper == other.taper;
        if !same {
            return Err(Error::InvalidParameter {
                name: "accumulator",
                reason: "cannot merge accumulators with different configurations".into(),
            });
        }
        for (a, b) in self.p.iter_mut().zip(&other.p) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.r.iter_mut().zip(&other.r) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for k in 0..4 {
            self.sum[k] += other.sum[k];
        }
        self.count += other.count;
        Ok(())
    }

    /// Error unless at least ten samples per lag have been accumulated.
    pub fn check_sufficient(&self) -> Result<()> {
        let required = 10 * self.lag_count as u64;
        if self.count < required {
            return Err(Error::InsufficientData {
                windows: self.count,
                required,
            });
        }
        Ok(())
    }

    /// Biased estimate of `⟨Δw(t) Δw(t + τ_k)ᵀ⟩` in the basis
    /// `(a1, a1*, a2, a2*, b1, b1*, b2, b2*)`.
    pub fn correlation(&self, k: usize) -> CMatrix {
        let n = self.count.max(1) as f64;
        let shift = match self.mean_mode {
            MeanMode::Classical => [ZERO; 4],
            MeanMode::Empirical => self.fluctuation_mean(),
        };
        let (p, q) = (&self.p[k], &self.q[k]);
        CMatrix::from_fn(8, 8, |r, c| {
            let (i, ci) = (r / 2, r % 2 == 1);
            let (j, cj) = (c / 2, c % 2 == 1);
            let (raw, mi, mj) = match (ci, cj) {
                (false, false) => (p[4 * i + j], shift[i], shift[j]),
                (false, true) => (q[4 * i + j], shift[i], shift[j].conj()),
                (true, false) => (q[4 * i + j].conj(), shift[i].conj(), shift[j]),
                (true, true) => (p[4 * i + j].conj(), shift[i].conj(), shift[j].conj()),
            };
            raw / n - mi * mj
        })
    }

    /// Biased estimate of the photon-number correlation `⟨ΔN_i(t) ΔN_j(t + τ_k)⟩`
    /// (quadratic estimator only).
    pub fn number_correlation(&self, k: usize) -> Option<[f64; 16]> {
        let n = self.count.max(1) as f64;
        self.r.get(k).map(|r| r.map(|x| x / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: [f64; 4]) -> OutputSample {
        OutputSample {
            time: 0.0,
            a_out1: Complex64::new(v[0], 0.5 * v[0]),
            a_out2: Complex64::new(v[1], 0.0),
            b_out1: Complex64::new(v[2], -v[2]),
            b_out2: Complex64::new(0.0, v[3]),
        }
    }

    fn config(lags: usize, stride: usize) -> SimConfig {
        SimConfig {
            lag_count: lags,
            lag_stride: stride,
            ..SimConfig::default()
        }
    }

    #[test]
    fn constant_input_at_the_mean_gives_zero() {
        let s = sample([1.0, 2.0, 3.0, 4.0]);
        let mut acc = CorrelationAccumulator::new(&config(4, 1), s.to_array());
        for _ in 0..50 {
            acc.push(&s);
        }
        for k in 0..4 {
            assert_eq!(crate::linalg::max_abs(&acc.correlation(k)), 0.0);
        }
    }

    #[test]
    fn matches_direct_sum_and_conjugate_structure() {
        let xs: Vec<[f64; 4]> = (0..40)
            .map(|t| {
                let t = t as f64;
                [
                    (0.3 * t).sin(),
                    (0.7 * t).cos(),
                    (1.1 * t).sin() * 0.5,
                    (0.2 * t).cos(),
                ]
            })
            .collect();
        let mut acc = CorrelationAccumulator::new(&config(5, 1), [ZERO; 4]);
        for x in &xs {
            acc.push(&sample(*x));
        }
        let w: Vec<[Complex64; 8]> = xs
            .iter()
            .map(|x| {
                let v = sample(*x).to_array();
                [
                    v[0],
                    v[0].conj(),
                    v[1],
                    v[1].conj(),
                    v[2],
                    v[2].conj(),
                    v[3],
                    v[3].conj(),
                ]
            })
            .collect();
        for k in 0..5 {
            let c = acc.correlation(k);
            for r in 0..8 {
                for col in 0..8 {
                    let direct: Complex64 = (0..w.len() - k)
                        .map(|t| w[t][r] * w[t + k][col])
                        .sum::<Complex64>()
                        / 40.0;
                    assert!((c[(r, col)] - direct).norm() < 1e-14);
                }
            }
            if k == 0 {
                for r in (0..8).step_by(2) {
                    assert!(c[(r, r + 1)].im.abs() < 1e-15 && c[(r, r + 1)].re >= 0.0);
                }
            }
        }
    }

    #[test]
    fn merge_is_associative_and_checks_configuration() {
        let cfg = config(3, 1);
        let mk = |off: f64| {
            let mut a = CorrelationAccumulator::new(&cfg, [ZERO; 4]);
            for t in 0..20 {
                a.push(&sample([off + t as f64 * 0.1, 0.0, 1.0, off]));
            }
            a
        };
        let (a, b, c) = (mk(0.0), mk(1.0), mk(2.0));
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a.clone();
        right.merge(&bc).unwrap();
        assert_eq!(left.count(), 60);
        for k in 0..3 {
            assert!(crate::linalg::max_abs(&(left.correlation(k) - right.correlation(k))) < 1e-14);
        }
        let other = CorrelationAccumulator::new(&config(4, 1), [ZERO; 4]);
        assert!(left.merge(&other).is_err());
    }

    #[test]
    fn stride_rebins_windows() {
        let mut a = CorrelationAccumulator::new(&config(2, 2), [ZERO; 4]);
        a.push(&sample([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(a.count(), 0);
        a.push(&sample([3.0, 0.0, 0.0, 0.0]));
        assert_eq!(a.count(), 1);
        assert!((a.correlation(0)[(0, 1)].re - 4.0 * 1.25).abs() < 1e-14);
    }

    #[test]
    fn insufficient_data() {
        let mut a = CorrelationAccumulator::new(&config(4, 1), [ZERO; 4]);
        for _ in 0..39 {
            a.push(&sample([0.0; 4]));
        }
        assert!(matches!(
            a.check_sufficient(),
            Err(Error::InsufficientData {
                windows: 39,
                required: 40
            })
        ));
        a.push(&sample([0.0; 4]));
        assert!(a.check_sufficient().is_ok());
    }
}
