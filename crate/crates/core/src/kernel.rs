//! Gaussian kernels, MMD² estimation and the permutation two-sample test
//! used to check whether projected data is indistinguishable from the
//! original.
//!
//! The unbiased estimator between samples `a` (size n) and `b` (size m) is
//!
//! ```text
//! MMD² = 1/(n(n−1)) Σ_{i≠j} k(aᵢ,aⱼ) + 1/(m(m−1)) Σ_{i≠j} k(bᵢ,bⱼ) − 2/(nm) Σ_{i,j} k(aᵢ,bⱼ)
//! ```
//!
//! The `PaperEq6CrossOffdiag` variant drops the `i = j` cross pairs but keeps
//! the `2/n²` factor, and therefore needs `n = m`.

use std::borrow::Cow;
use std::sync::Arc;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{input, Result};
use crate::lens::LensDistribution;
use crate::nn::Mlp;

/// Below this width pairwise distances are computed coordinate by coordinate;
/// above it through a Gram matrix product.
const DIRECT_DISTANCE_MAX_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
}

/// A Gaussian kernel `exp(−‖x−y‖²/(2σ²))`, optionally evaluated on encoded
/// inputs.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub kind: KernelKind,
    bandwidth2: f64,
    pub composed_encoder: Option<Arc<Mlp>>,
}

impl KernelSpec {
    pub fn gaussian(bandwidth2: f64) -> Result<Self> {
        if !(bandwidth2 > 0.0 && bandwidth2.is_finite()) {
            return input(format!("bandwidth² must be positive, got {bandwidth2}"));
        }
        Ok(Self {
            kind: KernelKind::Gaussian,
            bandwidth2,
            composed_encoder: None,
        })
    }

    pub fn composed(bandwidth2: f64, encoder: Arc<Mlp>) -> Result<Self> {
        let mut spec = Self::gaussian(bandwidth2)?;
        spec.composed_encoder = Some(encoder);
        Ok(spec)
    }

    pub fn bandwidth2(&self) -> f64 {
        self.bandwidth2
    }

    /// Rows mapped into the space the base kernel operates on.
    pub(crate) fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.composed_encoder {
            Some(enc) => enc.forward(x),
            None => Ok(x.to_owned()),
        }
    }
}

pub fn gaussian_kernel(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return input(format!("dimension mismatch: {} vs {}", x.len(), y.len()));
    }
    let (fx, fy) = match &spec.composed_encoder {
        Some(enc) => {
            let fx = enc.forward(x.insert_axis(Axis(0)))?;
            let fy = enc.forward(y.insert_axis(Axis(0)))?;
            (fx.row(0).to_owned(), fy.row(0).to_owned())
        }
        None => (x.to_owned(), y.to_owned()),
    };
    let d2: f64 = fx.iter().zip(fy.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (2.0 * spec.bandwidth2)).exp())
}

/// Row-major contents of `a`, copied only when `a` is not already laid out
/// that way.
fn contiguous<'a>(a: ArrayView2<'a, f64>) -> Cow<'a, [f64]> {
    match a.to_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(a.iter().copied().collect()),
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, q) in x.iter().zip(y) {
        acc += (p - q) * (p - q);
    }
    acc
}

/// Squared Euclidean distances between every row of `a` and every row of `b`.
pub(crate) fn sq_dists(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m, d) = (a.nrows(), b.nrows(), a.ncols());
    if d <= DIRECT_DISTANCE_MAX_DIM {
        let (ra, rb) = (contiguous(a), contiguous(b));
        let mut out = Vec::with_capacity(n * m);
        for ai in ra.chunks_exact(d.max(1)).take(n) {
            for bj in rb.chunks_exact(d.max(1)).take(m) {
                out.push(sq_dist(ai, bj));
            }
        }
        if d == 0 {
            out.resize(n * m, 0.0);
        }
        return Array2::from_shape_vec((n, m), out).expect("shape");
    }
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut out = Array2::zeros((n, m));
    general_mat_mul(-2.0, &a, &b.t(), 0.0, &mut out);
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = (*v + na[i] + nb[j]).max(0.0);
    }
    out
}

/// Squared distances among the rows of `a`; symmetric with a zero diagonal.
pub(crate) fn self_sq_dists(a: ArrayView2<'_, f64>) -> Array2<f64> {
    self_pairwise(a, |v| v)
}

/// Applies `f` to the squared distance of every unordered row pair of `a`
/// and mirrors the result; the diagonal holds `f(0)`.
fn self_pairwise(a: ArrayView2<'_, f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = a.nrows();
    let d = a.ncols();
    let mut out = if d <= DIRECT_DISTANCE_MAX_DIM && d > 0 {
        let ra = contiguous(a);
        let rows: Vec<&[f64]> = ra.chunks_exact(d).collect();
        let mut out = Array2::zeros((n, n));
        let flat = out.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let ai = rows[i];
            let dst = &mut flat[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                dst[j] = f(sq_dist(ai, rows[j]));
            }
        }
        out
    } else {
        let mut out = sq_dists(a, a);
        for i in 0..n {
            for j in (i + 1)..n {
                out[[i, j]] = f(out[[i, j]]);
            }
        }
        out
    };
    let flat = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        for j in (i + 1)..n {
            flat[j * n + i] = flat[i * n + j];
        }
    }
    out.diag_mut().fill(f(0.0));
    out
}

fn self_gaussian(a: ArrayView2<'_, f64>, bandwidth2: f64) -> Array2<f64> {
    let scale = -1.0 / (2.0 * bandwidth2);
    self_pairwise(a, |v| (v * scale).exp())
}

fn gaussian_of(mut d2: Array2<f64>, bandwidth2: f64) -> Array2<f64> {
    let scale = -1.0 / (2.0 * bandwidth2);
    d2.mapv_inplace(|v| (v * scale).exp());
    d2
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of squared pairwise distances over distinct row pairs, halved.
/// Falls back to 1.0 when the median is zero.
pub fn median_heuristic(data: &DataMatrix) -> Result<f64> {
    median_heuristic_rows(data.view())
}

pub(crate) fn median_heuristic_rows(rows: ArrayView2<'_, f64>) -> Result<f64> {
    let n = rows.nrows();
    if n < 2 {
        return input("median heuristic needs at least two rows");
    }
    let d2 = self_sq_dists(rows);
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push(d2[[i, j]]);
        }
    }
    let med = median(&mut pairs);
    Ok(if med > 0.0 { med / 2.0 } else { 1.0 })
}

/// [`median_heuristic`] on at most `max_rows` rows drawn without replacement.
pub fn median_heuristic_subsampled(data: &DataMatrix, max_rows: usize, seed: u64) -> Result<f64> {
    if data.nrows() <= max_rows {
        return median_heuristic(data);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, data.nrows(), max_rows).into_vec();
    idx.sort_unstable();
    median_heuristic(&data.select_rows(&idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdVariant {
    /// Standard unbiased estimator; the cross term sums over all pairs.
    #[default]
    UnbiasedCrossFull,
    /// Cross term restricted to `i ≠ j` with factor `2/n²`; needs `n = m`.
    PaperEq6CrossOffdiag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdEstimate {
    pub value: f64,
    pub variant: MmdVariant,
    pub sample_sizes: (usize, usize),
}

fn check_samples(n: usize, m: usize, da: usize, db: usize, variant: MmdVariant) -> Result<()> {
    if n < 2 || m < 2 {
        return input(format!("MMD needs at least two rows per sample, got {n} and {m}"));
    }
    if da != db {
        return input(format!("column mismatch: {da} vs {db}"));
    }
    if variant == MmdVariant::PaperEq6CrossOffdiag && n != m {
        return input("the off-diagonal cross variant needs equal sample sizes");
    }
    Ok(())
}

/// Kernel matrices and the MMD² value for two feature samples.
pub(crate) struct KernelBlocks {
    pub kxx: Array2<f64>,
    pub kyy: Array2<f64>,
    pub kxy: Array2<f64>,
    pub value: f64,
}

fn cross_weight(n: usize, m: usize, variant: MmdVariant) -> f64 {
    match variant {
        MmdVariant::UnbiasedCrossFull => 2.0 / (n as f64 * m as f64),
        MmdVariant::PaperEq6CrossOffdiag => 2.0 / (n as f64 * n as f64),
    }
}

fn offdiag_sum(k: &Array2<f64>) -> f64 {
    k.sum() - k.diag().sum()
}

pub(crate) fn kernel_blocks(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    bandwidth2: f64,
    variant: MmdVariant,
) -> KernelBlocks {
    let (n, m) = (a.nrows() as f64, b.nrows() as f64);
    let kxx = self_gaussian(a, bandwidth2);
    let kyy = self_gaussian(b, bandwidth2);
    let kxy = gaussian_of(sq_dists(a, b), bandwidth2);
    let cross = match variant {
        MmdVariant::UnbiasedCrossFull => kxy.sum(),
        MmdVariant::PaperEq6CrossOffdiag => offdiag_sum(&kxy),
    };
    let value = offdiag_sum(&kxx) / (n * (n - 1.0)) + offdiag_sum(&kyy) / (m * (m - 1.0))
        - cross_weight(a.nrows(), b.nrows(), variant) * cross;
    KernelBlocks { kxx, kyy, kxy, value }
}

/// MMD² together with its gradients w.r.t. the rows of both feature samples.
pub(crate) struct MmdWithGrads {
    pub value: f64,
    pub grad_a: Option<Array2<f64>>,
    pub grad_b: Array2<f64>,
}

/// `Σ_{j} P[i,j] (V_j − V_i)` for every row i, i.e. `P·V − diag(P·1)·V`.
fn weighted_pull(p: &Array2<f64>, target: ArrayView2<'_, f64>, source: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((p.nrows(), target.ncols()));
    general_mat_mul(1.0, p, &target, 0.0, &mut out);
    let row_sums = p.sum_axis(Axis(1));
    for (mut row, (s, src)) in out
        .rows_mut()
        .into_iter()
        .zip(row_sums.iter().zip(source.rows()))
    {
        row.scaled_add(-*s, &src);
    }
    out
}

pub(crate) fn mmd2_with_grads(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    bandwidth2: f64,
    variant: MmdVariant,
    need_grad_a: bool,
) -> MmdWithGrads {
    let (n, m) = (a.nrows(), b.nrows());
    let blocks = kernel_blocks(a, b, bandwidth2, variant);
    let inv_s2 = 1.0 / bandwidth2;
    let w = cross_weight(n, m, variant);

    let mut kyy0 = blocks.kyy;
    kyy0.diag_mut().fill(0.0);
    let mut cross = blocks.kxy * w;
    if variant == MmdVariant::PaperEq6CrossOffdiag {
        cross.diag_mut().fill(0.0);
    }
    let c_yy = 2.0 / (m as f64 * (m as f64 - 1.0));
    // ∂/∂b_j: 2c_yy Σ_i Kyy(b_i − b_j) − Σ_i C_ij (a_i − b_j), all over σ².
    let cross_t = cross.t().to_owned();
    let mut grad_b = weighted_pull(&kyy0, b, b) * (c_yy * inv_s2);
    grad_b.scaled_add(-inv_s2, &weighted_pull(&cross_t, a, b));

    let grad_a = need_grad_a.then(|| {
        let mut kxx0 = blocks.kxx;
        kxx0.diag_mut().fill(0.0);
        let c_xx = 2.0 / (n as f64 * (n as f64 - 1.0));
        let mut g = weighted_pull(&kxx0, a, a) * (c_xx * inv_s2);
        g.scaled_add(-inv_s2, &weighted_pull(&cross, b, a));
        g
    });

    MmdWithGrads {
        value: blocks.value,
        grad_a,
        grad_b,
    }
}

pub fn mmd2(
    sample_a: &DataMatrix,
    sample_b: &DataMatrix,
    spec: &KernelSpec,
    variant: MmdVariant,
) -> Result<MmdEstimate> {
    let (n, m) = (sample_a.nrows(), sample_b.nrows());
    check_samples(n, m, sample_a.ncols(), sample_b.ncols(), variant)?;
    let fa = spec.features(sample_a.view())?;
    let fb = spec.features(sample_b.view())?;
    let value = kernel_blocks(fa.view(), fb.view(), spec.bandwidth2, variant).value;
    if !value.is_finite() {
        return input("MMD² is not finite");
    }
    Ok(MmdEstimate {
        value,
        variant,
        sample_sizes: (n, m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub num_permutations: usize,
}

/// Pooled kernel matrix reused across permutations. Group statistics only
/// need within-group sums, which come from one pass over the rows of the
/// first group.
struct PooledKernel {
    k: Array2<f64>,
    row_sums: Vec<f64>,
    total: f64,
}

impl PooledKernel {
    fn new(pooled: ArrayView2<'_, f64>, bandwidth2: f64) -> Self {
        let mut k = self_gaussian(pooled, bandwidth2);
        k.diag_mut().fill(0.0);
        let row_sums: Vec<f64> = k.rows().into_iter().map(|r| r.sum()).collect();
        let total = row_sums.iter().sum();
        Self { k, row_sums, total }
    }

    /// Unbiased MMD² with `group_a` as the first sample and the rest as the
    /// second. `member` is scratch space of length N.
    fn statistic(&self, group_a: &[usize], member: &mut [f64]) -> f64 {
        let big_n = self.row_sums.len();
        let n = group_a.len() as f64;
        let m = (big_n - group_a.len()) as f64;
        member.fill(0.0);
        for &i in group_a {
            member[i] = 1.0;
        }
        let mut s_aa = 0.0;
        let mut s_a_all = 0.0;
        for &i in group_a {
            let row = self.k.row(i);
            let row = row.as_slice().expect("standard layout");
            s_aa += row.iter().zip(member.iter()).map(|(k, u)| k * u).sum::<f64>();
            s_a_all += self.row_sums[i];
        }
        let s_ab = s_a_all - s_aa;
        let s_bb = self.total - s_aa - 2.0 * s_ab;
        s_aa / (n * (n - 1.0)) + s_bb / (m * (m - 1.0)) - 2.0 * s_ab / (n * m)
    }
}

/// Permutation two-sample test on the unbiased MMD² statistic.
/// `p = (1 + #{permuted ≥ observed}) / (num_permutations + 1)`.
pub fn permutation_test(
    sample_a: &DataMatrix,
    sample_b: &DataMatrix,
    spec: &KernelSpec,
    alpha: f64,
    num_permutations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MmdTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return input(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if num_permutations == 0 {
        return input("need at least one permutation");
    }
    let (n, m) = (sample_a.nrows(), sample_b.nrows());
    check_samples(n, m, sample_a.ncols(), sample_b.ncols(), MmdVariant::UnbiasedCrossFull)?;
    let pooled = sample_a.vstack(sample_b)?;
    let features = spec.features(pooled.view())?;
    let kernel = PooledKernel::new(features.view(), spec.bandwidth2);

    let mut member = vec![0.0; n + m];
    let identity: Vec<usize> = (0..n).collect();
    let statistic = kernel.statistic(&identity, &mut member);
    let mut order: Vec<usize> = (0..n + m).collect();
    let mut exceed = 0usize;
    for _ in 0..num_permutations {
        order.shuffle(rng);
        if kernel.statistic(&order[..n], &mut member) >= statistic {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (num_permutations + 1) as f64;
    Ok(MmdTestResult {
        statistic,
        p_value,
        alpha,
        reject: p_value <= alpha,
        num_permutations,
    })
}

/// Projects every row by a mask drawn independently from `lens`.
pub fn project_by_lens<R: Rng + ?Sized>(data: &DataMatrix, lens: &LensDistribution, rng: &mut R) -> Result<DataMatrix> {
    if lens.is_empty() {
        return input("lens distribution is empty");
    }
    if lens.width() != data.ncols() {
        return input(format!(
            "lens width {} does not match data width {}",
            lens.width(),
            data.ncols()
        ));
    }
    let mut projected = data.values().clone();
    for mut row in projected.rows_mut() {
        let mask = lens.sample(rng);
        for (v, &b) in row.iter_mut().zip(mask.bits()) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
    DataMatrix::new(projected)
}

/// Tests `H₀: P_x = P_{Ux}` with `U` drawn from `lens` once per row.
pub fn myopicity_test(
    data: &DataMatrix,
    lens: &LensDistribution,
    spec: &KernelSpec,
    alpha: f64,
    num_permutations: usize,
    seed: u64,
) -> Result<MmdTestResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projected = project_by_lens(data, lens, &mut rng)?;
    permutation_test(data, &projected, spec, alpha, num_permutations, &mut rng)
}
