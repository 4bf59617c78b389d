use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier on the normalized (He) initialization so the initial Jacobian is small.
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankDims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl BankDims {
    pub fn weight_count(&self) -> usize {
        self.k * self.m * self.n
    }
}

/// One row approximator: `Ĵ_row(q) = (W θ(q))ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    /// `n × k`, column `j` is the output weight of neuron `j`.
    pub weights: DMatrix<f64>,
    /// `n × k`, column `j` is the center of neuron `j`.
    pub centers: DMatrix<f64>,
    pub widths: DVector<f64>,
}

impl RbfNetwork {
    pub fn k(&self) -> usize {
        self.widths.len()
    }
}

/// Gaussian activations `exp(-‖q - μ_j‖² / σ_j²)`.
pub fn rbf_activation(net: &RbfNetwork, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        net.k(),
        net.centers.column_iter().zip(net.widths.iter()).map(|(mu, sigma)| {
            let d2 = (q - mu).norm_squared();
            (-d2 / (sigma * sigma)).exp()
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfBank {
    nets: Vec<RbfNetwork>,
    dims: BankDims,
}

impl RbfBank {
    pub fn new(nets: Vec<RbfNetwork>) -> Result<Self> {
        let first = nets.first().ok_or(Error::InvalidConfig("bank needs at least one network".into()))?;
        let dims = BankDims { m: nets.len(), n: first.weights.nrows(), k: first.k() };
        if dims.k == 0 || dims.n == 0 {
            return Err(Error::InvalidConfig("bank needs n >= 1 and k >= 1".into()));
        }
        for net in &nets {
            let shape_ok = net.weights.shape() == (dims.n, dims.k)
                && net.centers.shape() == (dims.n, dims.k)
                && net.widths.len() == dims.k;
            if !shape_ok {
                return Err(Error::DimensionMismatch {
                    what: "network shape",
                    expected: dims.n * dims.k,
                    got: net.weights.len(),
                });
            }
            if net.widths.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidConfig("RBF widths must be positive".into()));
            }
        }
        Ok(Self { nets, dims })
    }

    pub fn dims(&self) -> BankDims {
        self.dims
    }

    pub fn nets(&self) -> &[RbfNetwork] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [RbfNetwork] {
        &mut self.nets
    }

    /// Stacks the weight columns net by net: `[W_11; W_12; …; W_1k; W_21; …; W_mk]`.
    pub fn vectorize(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dims.weight_count(),
            self.nets.iter().flat_map(|n| n.weights.as_slice().iter().copied()),
        )
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn set_weights(&mut self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dims.weight_count() {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: self.dims.weight_count(),
                got: w.len(),
            });
        }
        let block = self.dims.n * self.dims.k;
        for (net, chunk) in self.nets.iter_mut().zip(w.as_slice().chunks_exact(block)) {
            net.weights.as_mut_slice().copy_from_slice(chunk);
        }
        Ok(())
    }

    pub fn with_weights(&self, w: &DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_weights(w)?;
        Ok(out)
    }

    pub fn to_document(&self, oracle: bool) -> BankDocument {
        BankDocument {
            oracle,
            dims: self.dims,
            centers: self.nets.iter().flat_map(|n| n.centers.as_slice().iter().copied()).collect(),
            widths: self.nets.iter().flat_map(|n| n.widths.iter().copied()).collect(),
            weights: self.vectorize().as_slice().to_vec(),
            fit_residual: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document(false))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<BankDocument>(text)?.into_bank()
    }
}

/// Persisted form of a bank: flat arrays in the same ordering as [`RbfBank::vectorize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankDocument {
    #[serde(default)]
    pub oracle: bool,
    pub dims: BankDims,
    /// `m × k × n`, network-major then neuron-major.
    pub centers: Vec<f64>,
    /// `m × k`.
    pub widths: Vec<f64>,
    /// `k m n`.
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
}

impl BankDocument {
    pub fn into_bank(self) -> Result<RbfBank> {
        let BankDims { m, n, k } = self.dims;
        let check = |what: &'static str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, got })
            }
        };
        check("centers", m * k * n, self.centers.len())?;
        check("widths", m * k, self.widths.len())?;
        check("weights", m * k * n, self.weights.len())?;
        let nets = (0..m)
            .map(|i| RbfNetwork {
                weights: DMatrix::from_column_slice(n, k, &self.weights[i * n * k..(i + 1) * n * k]),
                centers: DMatrix::from_column_slice(n, k, &self.centers[i * n * k..(i + 1) * n * k]),
                widths: DVector::from_column_slice(&self.widths[i * k..(i + 1) * k]),
            })
            .collect();
        RbfBank::new(nets)
    }
}

/// `Ĵ_c(q)`, row `i` is `(Ŵ_i θ_i(q))ᵀ`.
pub fn estimate_jacobian(bank: &RbfBank, q: &DVector<f64>) -> DMatrix<f64> {
    let BankDims { m, n, .. } = bank.dims;
    let mut jac = DMatrix::zeros(m, n);
    for (i, net) in bank.nets.iter().enumerate() {
        let row = &net.weights * rbf_activation(net, q);
        jac.row_mut(i).copy_from(&row.transpose());
    }
    jac
}

/// Regressor `M = Θᵀ(q) Qᵀ(q̇)` (`m × kmn`) with `M Ŵ = Ĵ_c(q) q̇`.
///
/// Row `i` holds `θ_i(q)ᵀ ⊗ q̇ᵀ` in the block of network `i`; the block-diagonal
/// `Q(q̇)` is never formed.
pub fn build_parameterization(bank: &RbfBank, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
    let BankDims { m, n, k } = bank.dims;
    for (what, v) in [("q", q), ("qdot", qdot)] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { what, expected: n, got: v.len() });
        }
    }
    let mut reg = DMatrix::zeros(m, k * m * n);
    for (i, net) in bank.nets.iter().enumerate() {
        let theta = rbf_activation(net, q);
        for j in 0..k {
            let col0 = (i * k + j) * n;
            for r in 0..n {
                reg[(i, col0 + r)] = theta[j] * qdot[r];
            }
        }
    }
    Ok(reg)
}

/// Basis centers and the shared width for `k` neurons over the box `[lo, hi]`.
///
/// `k = gⁿ` gives a full uniform grid; `k = 2n + 1` gives the box center plus one
/// neuron at each face center (the grid-axis design used when a full grid is too large).
fn basis_layout(k: usize, lo: &DVector<f64>, hi: &DVector<f64>) -> Result<(Vec<DVector<f64>>, f64)> {
    let n = lo.len();
    let mid = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    let g = (k as f64).powf(1.0 / n as f64).round() as usize;
    if g >= 1 && g.checked_pow(n as u32) == Some(k) {
        if g == 1 {
            return Ok((vec![mid], half.max() * 1.5));
        }
        let step = (hi - lo) / (g - 1) as f64;
        let centers = (0..k)
            .map(|idx| {
                let mut c = lo.clone();
                let mut rem = idx;
                for d in 0..n {
                    c[d] += step[d] * (rem % g) as f64;
                    rem /= g;
                }
                c
            })
            .collect();
        return Ok((centers, step.max() * 1.5));
    }
    if k == 2 * n + 1 {
        let mut centers = vec![mid.clone()];
        for d in 0..n {
            for sign in [-1.0, 1.0] {
                let mut c = mid.clone();
                c[d] += sign * half[d];
                centers.push(c);
            }
        }
        return Ok((centers, half.max() * 1.5));
    }
    Err(Error::UnsupportedNeuronCount { k, n })
}

/// Fresh bank: shared basis, per-network seeded permutation of the (center, width)
/// pairs, and small zero-mean normal weights with variance `2/k` times `init_scale²`.
pub fn init_bank(
    m: usize,
    k: usize,
    q_min: &DVector<f64>,
    q_max: &DVector<f64>,
    init_scale: f64,
    seed: u64,
) -> Result<RbfBank> {
    let n = q_min.len();
    if q_max.len() != n {
        return Err(Error::DimensionMismatch { what: "q_max", expected: n, got: q_max.len() });
    }
    if n == 0 || q_min.iter().zip(q_max.iter()).any(|(lo, hi)| !(hi - lo > 0.0)) {
        return Err(Error::BadRange("actuator range must have positive extent in every axis".into()));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("bank needs m >= 1".into()));
    }
    let (basis, width) = basis_layout(k, q_min, q_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal =
        Normal::new(0.0, (2.0 / k as f64).sqrt() * init_scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let nets = (0..m)
        .map(|_| {
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            let mut centers = DMatrix::zeros(n, k);
            for (j, &src) in order.iter().enumerate() {
                centers.set_column(j, &basis[src]);
            }
            let weights = DMatrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
            RbfNetwork { weights, centers, widths: DVector::from_element(k, width) }
        })
        .collect();
    RbfBank::new(nets)
}
