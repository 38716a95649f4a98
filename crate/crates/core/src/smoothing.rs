//! Kernel smoothing in `T` and the partial-residual transform.
//!
//! Subtracting the Nadaraya–Watson smooth of every covariate row and of the
//! response removes the unknown `g(T)` term, leaving a purely linear problem
//! in `β`. The dense [`KernelWeights`] form is exact and convenient for small
//! `n`; [`EpanechnikovSmoother`] applies the same operator in `O(n log n)` per
//! vector using sorted prefix moments, which is what large designs go through.

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::par;
use crate::problem::TransformedProblem;

/// Raw draw from the partially linear model `Y = Xᵀβ + g(T) + ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSample {
    /// `p × n`; column `i` is the covariate vector of sample `i`.
    pub x: DenseMatrix,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl RawSample {
    pub fn new(x: DenseMatrix, t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if x.cols() != n || y.len() != n {
            return Err(Error::Dimension(format!(
                "x has {} columns, t has {n} entries, y has {}",
                x.cols(),
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least two samples, got {n}")));
        }
        if let Some(i) = t.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!("t[{i}] = {} outside [0, 1]", t[i])));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entries in sample".into()));
        }
        Ok(Self { x, t, y })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn p(&self) -> usize {
        self.x.rows()
    }
}

/// `K(x) = ¾(1 − x²)` on `|x| ≤ 1`, zero outside.
#[inline]
pub fn epanechnikov_kernel(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.75 * (1.0 - x * x)
    } else {
        0.0
    }
}

/// Anything that can replace a vector of per-sample values by its kernel smooth
/// evaluated back at the sample points.
pub trait SampleSmoother {
    fn len(&self) -> usize;

    fn bandwidth(&self) -> f64;

    /// `out_i = Σ_j W_nj(T_i) values_j`.
    fn smooth(&self, values: &[f64]) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense Nadaraya–Watson weights; row `i` holds `W_nj(T_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelWeights {
    pub w: DenseMatrix,
    pub h: f64,
}

impl KernelWeights {
    pub fn n(&self) -> usize {
        self.w.rows()
    }
}

impl SampleSmoother for KernelWeights {
    fn len(&self) -> usize {
        self.w.rows()
    }

    fn bandwidth(&self) -> f64 {
        self.h
    }

    fn smooth(&self, values: &[f64]) -> Vec<f64> {
        self.w.mul_vec(values)
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("bandwidth h = {h} must be positive")))
    }
}

/// `W_nj(T_i) = K_h(T_j − T_i) / Σ_k K_h(T_k − T_i)` as a dense `n × n` matrix.
pub fn nadaraya_watson_weights(t: &[f64], h: f64) -> Result<KernelWeights> {
    check_bandwidth(h)?;
    let n = t.len();
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let row = w.row_mut(i);
        for (j, r) in row.iter_mut().enumerate() {
            *r = epanechnikov_kernel((t[j] - t[i]) / h);
        }
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateBandwidth { index: i, t: t[i], h });
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(KernelWeights { w, h })
}

/// Epanechnikov smoother over sorted design points.
///
/// Because the kernel is a quadratic polynomial on its support, the smooth
/// at `s` only needs the window `|T_j − s| < h` and the three moments
/// `Σ v_j`, `Σ T_j v_j`, `Σ T_j² v_j` over it, all read off prefix sums.
#[derive(Clone, Debug)]
pub struct EpanechnikovSmoother {
    h: f64,
    t: Vec<f64>,
    order: Vec<usize>,
    /// Sorted design points shifted by -0.5.
    centered: Vec<f64>,
    /// Per sample: window bounds into the sorted order, and the kernel mass.
    windows: Vec<(usize, usize)>,
    denom: Vec<f64>,
}

const CENTER: f64 = 0.5;

fn sorted_order(t: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    order
}

#[inline]
fn window(sorted: &[f64], s: f64, h: f64) -> (usize, usize) {
    let lo = sorted.partition_point(|&x| x - s <= -h);
    let hi = sorted.partition_point(|&x| x - s < h);
    (lo, hi.max(lo))
}

/// Prefix sums of `v`, `d v`, `d² v` for the sorted offsets `d`.
fn prefix_moments(d: &[f64], v: impl Iterator<Item = f64>) -> [Vec<f64>; 3] {
    let n = d.len();
    let mut p0 = Vec::with_capacity(n + 1);
    let mut p1 = Vec::with_capacity(n + 1);
    let mut p2 = Vec::with_capacity(n + 1);
    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
    p0.push(0.0);
    p1.push(0.0);
    p2.push(0.0);
    for (&dk, vk) in d.iter().zip(v) {
        a0 += vk;
        a1 += dk * vk;
        a2 += dk * dk * vk;
        p0.push(a0);
        p1.push(a1);
        p2.push(a2);
    }
    [p0, p1, p2]
}

/// `Σ_window (1 − (d − e)²/h²) v` from prefix moments.
#[inline]
fn window_moment(m: &[Vec<f64>; 3], lo: usize, hi: usize, e: f64, inv_h2: f64) -> f64 {
    let s0 = m[0][hi] - m[0][lo];
    let s1 = m[1][hi] - m[1][lo];
    let s2 = m[2][hi] - m[2][lo];
    s0 - (s2 - 2.0 * e * s1 + e * e * s0) * inv_h2
}

impl EpanechnikovSmoother {
    pub fn new(t: &[f64], h: f64) -> Result<Self> {
        check_bandwidth(h)?;
        let order = sorted_order(t);
        let centered: Vec<f64> = order.iter().map(|&i| t[i] - CENTER).collect();
        let sorted: Vec<f64> = order.iter().map(|&i| t[i]).collect();
        let ones = prefix_moments(&centered, std::iter::repeat(1.0));
        let inv_h2 = 1.0 / (h * h);
        let mut windows = Vec::with_capacity(t.len());
        let mut denom = Vec::with_capacity(t.len());
        for (i, &s) in t.iter().enumerate() {
            let (lo, hi) = window(&sorted, s, h);
            let mass = window_moment(&ones, lo, hi, s - CENTER, inv_h2);
            if hi == lo || mass <= 0.0 {
                return Err(Error::DegenerateBandwidth { index: i, t: s, h });
            }
            windows.push((lo, hi));
            denom.push(mass);
        }
        Ok(Self {
            h,
            t: t.to_vec(),
            order,
            centered,
            windows,
            denom,
        })
    }

    fn smooth_into(&self, values: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        let m = prefix_moments(&self.centered, self.order.iter().map(|&i| values[i]));
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = self.windows[i];
            *o = window_moment(&m, lo, hi, self.t[i] - CENTER, inv_h2) / self.denom[i];
        }
    }
}

impl SampleSmoother for EpanechnikovSmoother {
    fn len(&self) -> usize {
        self.t.len()
    }

    fn bandwidth(&self) -> f64 {
        self.h
    }

    fn smooth(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.smooth_into(values, &mut out);
        out
    }
}

/// Removes the kernel smooth from every covariate row and from the response,
/// then rescales so that `ρ(X̃ X̃ᵀ) ≤ 1`.
pub fn partial_residual_transform<S>(sample: &RawSample, smoother: &S) -> Result<TransformedProblem>
where
    S: SampleSmoother + Sync,
{
    let (xt, yt) = partial_residuals(sample, smoother)?;
    TransformedProblem::normalized(xt, yt)
}

/// The centred design and response before normalization.
pub fn partial_residuals<S>(sample: &RawSample, smoother: &S) -> Result<(DenseMatrix, Vec<f64>)>
where
    S: SampleSmoother + Sync,
{
    let n = sample.n();
    if smoother.len() != n {
        return Err(Error::Dimension(format!(
            "smoother built for {} points, sample has {n}",
            smoother.len()
        )));
    }
    let mut xt = sample.x.clone();
    par::for_chunks(xt.data_mut(), n, 8 * n, |_, row| {
        let smooth = smoother.smooth(row);
        row.iter_mut().zip(&smooth).for_each(|(v, s)| *v -= s);
    });
    let ys = smoother.smooth(&sample.y);
    let yt = sample.y.iter().zip(&ys).map(|(y, s)| y - s).collect();
    Ok((xt, yt))
}

/// Leave-one-out squared prediction error of the smoother of `y` on `t`.
///
/// Returns `None` when some point has no neighbour inside the bandwidth.
pub fn loo_cv_error(t: &[f64], y: &[f64], h: f64) -> Option<f64> {
    let order = sorted_order(t);
    let sorted: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    let mut total = 0.0;
    for (i, &s) in t.iter().enumerate() {
        let (lo, hi) = window(&sorted, s, h);
        let mut num = 0.0;
        let mut den = 0.0;
        for &j in &order[lo..hi] {
            if j == i {
                continue;
            }
            let k = epanechnikov_kernel((t[j] - s) / h);
            num += k * y[j];
            den += k;
        }
        if den <= 0.0 {
            return None;
        }
        let r = y[i] - num / den;
        total += r * r;
    }
    Some(total / t.len() as f64)
}

/// 20 log-spaced bandwidths in `[0.5, 2] · n^{-1/5}`.
pub fn default_bandwidth_grid(n: usize) -> Vec<f64> {
    let base = (n as f64).powf(-0.2);
    let (lo, hi) = ((0.5 * base).ln(), (2.0 * base).ln());
    (0..20)
        .map(|k| (lo + (hi - lo) * k as f64 / 19.0).exp())
        .collect()
}

/// Bandwidth minimizing the leave-one-out error of the `Y`-on-`T` smoother.
///
/// Degenerate grid values are skipped; ties go to the larger bandwidth.
pub fn select_bandwidth_cv(sample: &RawSample, h_grid: &[f64]) -> Result<f64> {
    if h_grid.is_empty() {
        return Err(Error::InvalidInput("empty bandwidth grid".into()));
    }
    for &h in h_grid {
        check_bandwidth(h)?;
    }
    let scores = par::map(h_grid.len(), |k| loo_cv_error(&sample.t, &sample.y, h_grid[k]));
    let mut best: Option<(f64, f64)> = None;
    for (&h, score) in h_grid.iter().zip(scores) {
        let Some(err) = score else {
            log::debug!("bandwidth {h:.4e} degenerate under leave-one-out");
            continue;
        };
        log::debug!("bandwidth {h:.4e}: loo error {err:.6e}");
        best = match best {
            Some((bh, be)) if err > be || (err == be && h < bh) => Some((bh, be)),
            _ => Some((h, err)),
        };
    }
    best.map(|(h, _)| h).ok_or(Error::AllDegenerate)
}

/// `g_n(t, β) = Σ_j W_nj(t) (Y_j − X_jᵀ β)` at each evaluation point.
pub fn recover_g(t_eval: &[f64], beta: &[f64], sample: &RawSample, h: f64) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    if beta.len() != sample.p() {
        return Err(Error::Dimension(format!(
            "beta has {} entries, design has {} covariates",
            beta.len(),
            sample.p()
        )));
    }
    let fit = sample.x.tr_mul_vec(beta);
    let resid: Vec<f64> = sample.y.iter().zip(&fit).map(|(y, f)| y - f).collect();
    let order = sorted_order(&sample.t);
    let sorted: Vec<f64> = order.iter().map(|&i| sample.t[i]).collect();
    t_eval
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let (lo, hi) = window(&sorted, s, h);
            let idx = &order[lo..hi];
            let kern: Vec<f64> = idx
                .iter()
                .map(|&j| epanechnikov_kernel((sample.t[j] - s) / h))
                .collect();
            let den: f64 = kern.iter().sum();
            if den <= 0.0 {
                return Err(Error::DegenerateBandwidth { index: k, t: s, h });
            }
            let vals: Vec<f64> = idx.iter().map(|&j| resid[j]).collect();
            Ok(dot(&kern, &vals) / den)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(epanechnikov_kernel(0.0), 0.75);
        assert_eq!(epanechnikov_kernel(1.0), 0.0);
        assert_eq!(epanechnikov_kernel(-1.0), 0.0);
        assert_eq!(epanechnikov_kernel(0.5), 0.5625);
        assert_eq!(epanechnikov_kernel(1.5), 0.0);
    }

    #[test]
    fn single_point_gets_full_weight() {
        let w = nadaraya_watson_weights(&[0.3], 0.1).unwrap();
        assert_eq!(w.w.data(), &[1.0]);
    }

    #[test]
    fn tied_points_share_weight() {
        for h in [0.01, 0.3, 5.0] {
            let w = nadaraya_watson_weights(&[0.5, 0.5], h).unwrap();
            assert_eq!(w.w.data(), &[0.5, 0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert!(nadaraya_watson_weights(&[0.1, 0.2], 0.0).is_err());
        assert!(EpanechnikovSmoother::new(&[0.1, 0.2], -1.0).is_err());
    }

    #[test]
    fn identity_weights_zero_the_transform() {
        let x = DenseMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64);
        let sample = RawSample::new(x, vec![0.0, 0.5, 1.0], vec![1.0, -2.0, 4.0]).unwrap();
        let w = KernelWeights {
            w: DenseMatrix::identity(3),
            h: 0.1,
        };
        let (xt, yt) = partial_residuals(&sample, &w).unwrap();
        assert!(xt.data().iter().all(|&v| v == 0.0));
        assert!(yt.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_covariate_vanishes() {
        let t = vec![0.05, 0.2, 0.22, 0.5, 0.8, 0.81];
        let x = DenseMatrix::from_fn(2, 6, |i, j| if i == 0 { 3.5 } else { j as f64 });
        let sample = RawSample::new(x, t.clone(), vec![0.0; 6]).unwrap();
        let w = nadaraya_watson_weights(&t, 0.4).unwrap();
        let (xt, _) = partial_residuals(&sample, &w).unwrap();
        assert!(xt.row(0).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn small_transform_matches_double_loop() {
        let t = vec![0.1, 0.35, 0.4, 0.7, 0.95];
        let x = DenseMatrix::from_row_major(
            2,
            5,
            vec![1.0, -2.0, 0.5, 3.0, 1.5, 0.2, 0.4, -0.1, 2.2, -1.0],
        )
        .unwrap();
        let y = vec![2.0, -1.0, 0.0, 4.0, 1.0];
        let w = nadaraya_watson_weights(&t, 0.5).unwrap();
        let sample = RawSample::new(x.clone(), t, y.clone()).unwrap();
        let (xt, yt) = partial_residuals(&sample, &w).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += w.w.get(i, k) * x.get(j, k);
                }
                assert!((xt.get(j, i) - (x.get(j, i) - s)).abs() < 1e-14);
            }
            let mut s = 0.0;
            for k in 0..5 {
                s += w.w.get(i, k) * y[k];
            }
            assert!((yt[i] - (y[i] - s)).abs() < 1e-14);
        }
    }

    #[test]
    fn default_grid_brackets_rate() {
        let g = default_bandwidth_grid(1000);
        let base = 1000f64.powf(-0.2);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.5 * base).abs() < 1e-12);
        assert!((g[19] - 2.0 * base).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn singleton_grid() {
        let sample = RawSample::new(
            DenseMatrix::zeros(1, 4),
            vec![0.0, 0.3, 0.6, 0.9],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        assert_eq!(select_bandwidth_cv(&sample, &[0.5]).unwrap(), 0.5);
        assert!(matches!(
            select_bandwidth_cv(&sample, &[0.1]),
            Err(Error::AllDegenerate)
        ));
    }

    #[test]
    fn recover_g_with_zero_design_is_plain_smooth() {
        let t = vec![0.1, 0.3, 0.5, 0.7];
        let y = vec![1.0, 3.0, -2.0, 0.5];
        let sample = RawSample::new(DenseMatrix::zeros(2, 4), t.clone(), y.clone()).unwrap();
        let g = recover_g(&t, &[4.0, -1.0], &sample, 0.35).unwrap();
        let w = nadaraya_watson_weights(&t, 0.35).unwrap();
        let direct = w.smooth(&y);
        for (a, b) in g.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(
            recover_g(&[0.95], &[0.0, 0.0], &sample, 0.1),
            Err(Error::DegenerateBandwidth { .. })
        ));
    }

    #[test]
    fn wide_bandwidth_recovers_mean_residual() {
        let t = vec![0.0, 0.25, 0.5, 1.0];
        let y = vec![1.0, 2.0, 3.0, 6.0];
        let sample = RawSample::new(DenseMatrix::zeros(1, 4), t, y).unwrap();
        let g = recover_g(&[0.25], &[0.0], &sample, 1e8).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-9);
    }
}
