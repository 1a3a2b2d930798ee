//! Dense tensors, elementary differentiable functions, the seeded PRNG and the
//! central-difference gradient checker that every backward pass is tested against.

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive: {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform draws in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let mut t = Tensor::zeros(shape);
        for v in &mut t.data {
            *v = rng.uniform(lo, hi);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of scalars per index of the leading dimension.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add_assign");
        axpy(1.0, &other.data, &mut self.data);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

const PCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const PCG_INCREMENT: u64 = 1_442_695_040_888_963_407;
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// PCG32 (XSH-RR, fixed default increment) seeded through SplitMix64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let init = splitmix64(&mut sm);
        let mut rng = Rng { state: 0 };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(init);
        rng.next_u32();
        rng
    }

    /// Independent stream for `(seed, path[0], path[1], ...)`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut acc = seed;
        for &index in path {
            let mut s = acc ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
            acc = splitmix64(&mut s);
        }
        Rng::new(acc)
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old
            .wrapping_mul(PCG_MULTIPLIER)
            .wrapping_add(PCG_INCREMENT);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision (two draws).
    pub fn next_f64(&mut self) -> f64 {
        let hi = (self.next_u32() >> 5) as u64;
        let lo = (self.next_u32() >> 6) as u64;
        ((hi << 26) | lo) as f64 / (1u64 << 53) as f64
    }

    /// Unbiased integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0 && n <= u32::MAX as usize, "below() range out of bounds: {n}");
        let n = n as u32;
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return (r % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller (one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!("non-finite {what}")))
    }
}

pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty vector".into()));
    }
    check_finite(scores, "softmax input")?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("log_softmax of empty vector".into()));
    }
    check_finite(scores, "log_softmax input")?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    Ok(scores.iter().map(|s| s - log_total).collect())
}

/// Intermediates kept for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    layer_norm_forward(x, gamma, beta, eps).map(|(y, _)| y)
}

pub fn layer_norm_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, LayerNormCache)> {
    if x.len() < 2 || gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::InvalidArgument(format!(
            "layer_norm lengths x={} gamma={} beta={} (need equal and >= 2)",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("layer_norm eps must be > 0, got {eps}")));
    }
    check_finite(x, "layer_norm input")?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = normalized
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(xh, (g, b))| g * xh + b)
        .collect();
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = dy.len() as f64;
    let dgamma: Vec<f64> = dy.iter().zip(&cache.normalized).map(|(d, x)| d * x).collect();
    let dbeta = dy.to_vec();
    let dxhat: Vec<f64> = dy.iter().zip(gamma).map(|(d, g)| d * g).collect();
    let sum_dxhat: f64 = dxhat.iter().sum();
    let sum_dxhat_xhat: f64 = dxhat.iter().zip(&cache.normalized).map(|(d, x)| d * x).sum();
    let dx = dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(d, x)| cache.inv_std / n * (n * d - sum_dxhat - x * sum_dxhat_xhat))
        .collect();
    (dx, dgamma, dbeta)
}

/// A collection of named flat parameter arrays that the gradient checker can perturb.
pub trait ParamSet: Clone {
    fn named_slices(&self) -> Vec<(String, &[f64])>;
    fn named_slices_mut(&mut self) -> Vec<(String, &mut [f64])>;

    /// Elements excluded from checking (frozen parameters).
    fn is_frozen(&self, _name: &str, _index: usize) -> bool {
        false
    }
}

impl ParamSet for Vec<f64> {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        vec![("value".to_string(), self.as_slice())]
    }

    fn named_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![("value".to_string(), self.as_mut_slice())]
    }
}

impl ParamSet for Vec<Tensor> {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        self.iter()
            .enumerate()
            .map(|(i, t)| (format!("tensor{i}"), t.data()))
            .collect()
    }

    fn named_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.iter_mut()
            .enumerate()
            .map(|(i, t)| (format!("tensor{i}"), t.data_mut()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GradReport {
    /// Max relative error per named parameter array.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `params`.
pub fn finite_diff_check<P, F>(
    mut f: F,
    params: &P,
    analytic: &P,
    eps: f64,
    tol: f64,
) -> Result<GradReport>
where
    P: ParamSet,
    F: FnMut(&P) -> f64,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference eps must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    let expected: Vec<(String, Vec<f64>)> = analytic
        .named_slices()
        .into_iter()
        .map(|(n, s)| (n, s.to_vec()))
        .collect();
    let mut work = params.clone();
    let shapes: Vec<(String, usize)> = work
        .named_slices()
        .into_iter()
        .map(|(n, s)| (n, s.len()))
        .collect();
    if shapes.len() != expected.len()
        || shapes.iter().zip(&expected).any(|((_, a), (_, b))| *a != b.len())
    {
        return Err(Error::InvalidArgument(
            "analytic gradients do not mirror the parameter layout".into(),
        ));
    }

    let mut per_param = Vec::with_capacity(shapes.len());
    let mut max_rel_error = 0.0f64;
    for (k, (name, len)) in shapes.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..*len {
            if params.is_frozen(name, i) {
                continue;
            }
            let original = work.named_slices()[k].1[i];
            work.named_slices_mut()[k].1[i] = original + eps;
            let plus = f(&work);
            work.named_slices_mut()[k].1[i] = original - eps;
            let minus = f(&work);
            work.named_slices_mut()[k].1[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "objective not finite while perturbing {name}[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(expected[k].1[i], numeric));
        }
        max_rel_error = max_rel_error.max(worst);
        per_param.push((name.clone(), worst));
    }
    Ok(GradReport {
        per_param,
        max_rel_error,
        tolerance: tol,
        passed: max_rel_error <= tol,
    })
}
