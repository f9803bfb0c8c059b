use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::sq_dist;
use crate::model::ParamVector;

/// RBF kernel `κ(a, b) = exp(-‖a - b‖² / bandwidth)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Self { bandwidth })
        } else {
            Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub(crate) fn eval_sq(&self, sq_distance: f64) -> f64 {
        (-sq_distance / self.bandwidth).exp()
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], kernel: KernelSpec) -> Result<f64> {
    check_len("kernel argument", a.len(), b.len())?;
    Ok(kernel.eval_sq(sq_dist(a, b)))
}

/// `∇_a κ(a, b) = -(2 / bandwidth)(a - b) κ(a, b)`
pub fn rbf_kernel_grad_first_arg(a: &[f64], b: &[f64], kernel: KernelSpec) -> Result<ParamVector> {
    check_len("kernel argument", a.len(), b.len())?;
    let k = kernel.eval_sq(sq_dist(a, b));
    let c = -2.0 / kernel.bandwidth * k;
    Ok(a.iter().zip(b).map(|(x, y)| c * (x - y)).collect::<Vec<_>>().into())
}

/// Median heuristic `med² / log M` over all pairwise Euclidean distances.
///
/// Falls back to 1 when every particle coincides.
pub fn median_bandwidth(particles: &[ParamVector]) -> Result<f64> {
    let m = particles.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "median bandwidth needs at least 2 particles, got {m}"
        )));
    }
    let dim = particles[0].len();
    let mut sq = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        check_len("particle", dim, particles[i].len())?;
        for j in i + 1..m {
            sq.push(sq_dist(&particles[i], &particles[j]));
        }
    }
    Ok(median_bandwidth_from_sq(&mut sq, m))
}

/// Same heuristic from a scratch buffer of pairwise squared distances (reordered in place).
pub(crate) fn median_bandwidth_from_sq(sq: &mut [f64], m: usize) -> f64 {
    let n = sq.len();
    let mid = n / 2;
    let (_, upper, _) = sq.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = upper.sqrt();
    let med = if n % 2 == 1 {
        upper
    } else {
        let lower = sq[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max).sqrt();
        0.5 * (lower + upper)
    };
    if med == 0.0 {
        1.0
    } else {
        med * med / (m as f64).ln()
    }
}
