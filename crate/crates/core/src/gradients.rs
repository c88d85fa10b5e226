//! Monte-Carlo gradients of `log Pr(b | l)`.
//!
//! With `v = x − μ` and `Q = Σ⁻¹`, the score functions are `F = Qv` and
//! `G = −½(Q − Qv vᵀQ)`. Their expectations under the MVN truncated to the
//! observation's rectangle are the gradients of the log-probability with
//! respect to μ and Σ. The chain rule then carries them to S, Λ, W and the
//! network.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::mlp::MlpParams;
use crate::model::{normalize_columns, ModelError, ModelParams, MuForward};
use crate::mvn::{
    clip_rectangle, sample_truncated, MvnError, MvnProblem, Rectangle, SamplerConfig,
};

/// `Σ⁻¹(x − μ)`.
pub fn score_f(sigma_inv: &Array2<f64>, mu: ArrayView1<f64>, x: ArrayView1<f64>) -> Array1<f64> {
    sigma_inv.dot(&(&x - &mu))
}

/// `−½(Σ⁻¹ − Σ⁻¹(x − μ)(x − μ)ᵀΣ⁻¹)`, symmetrized.
pub fn score_g(sigma_inv: &Array2<f64>, mu: ArrayView1<f64>, x: ArrayView1<f64>) -> Array2<f64> {
    let u = score_f(sigma_inv, mu, x);
    let n = u.len();
    let mut g = Array2::zeros((n, n));
    for j in 0..n {
        for t in 0..=j {
            let q = 0.5 * (sigma_inv[[j, t]] + sigma_inv[[t, j]]);
            let v = -0.5 * (q - u[j] * u[t]);
            g[[j, t]] = v;
            g[[t, j]] = v;
        }
    }
    g
}

/// Gradients of `log Pr(b | l)` in μ and Σ, with Monte-Carlo standard errors.
///
/// `d_sigma` treats every entry of Σ as a free coordinate, so moving the
/// symmetric pair `(j, t)` together changes the log-probability at rate
/// `d_sigma[j][t] + d_sigma[t][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSigmaGrad {
    pub d_mu: Array1<f64>,
    pub d_sigma: Array2<f64>,
    /// Batch-means standard errors; NaN when only one batch was available.
    pub d_mu_se: Array1<f64>,
    pub d_sigma_se: Array2<f64>,
    pub n_samples: usize,
}

/// Number of batches used for batch-means standard errors of `m` draws.
pub fn batch_count(m: usize) -> usize {
    if m < 4 {
        1
    } else {
        ((m as f64).sqrt() as usize).clamp(2, 50)
    }
}

/// Size, μ-gradient mean and Σ-gradient mean of one batch of draws.
pub type BatchMoments = (usize, Array1<f64>, Array2<f64>);

/// Per-batch gradient means over consecutive stretches of the chain.
///
/// The overall estimate is the size-weighted mean of the batches; see
/// [`combine_batches`].
pub fn grad_mu_sigma_batches(
    problem: &MvnProblem,
    rect: &Rectangle,
    cfg: &SamplerConfig,
) -> Result<Vec<BatchMoments>, MvnError> {
    let clipped = clip_rectangle(rect, problem, cfg.cutoff_k)?;
    let draws = sample_truncated(problem, &clipped.rect, cfg)?;
    let q = problem.factor().precision();
    let mu = problem.mean();
    let n = problem.dim();
    let m = draws.nrows();
    let batches = batch_count(m);
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let end = (b + 1) * m / batches;
        let mut sum_u = Array1::<f64>::zeros(n);
        let mut sum_uu = Array2::<f64>::zeros((n, n));
        for row in draws.slice(ndarray::s![start..end, ..]).axis_iter(Axis(0)) {
            let u = q.dot(&(&row - mu));
            for j in 0..n {
                sum_u[j] += u[j];
                for t in 0..=j {
                    sum_uu[[j, t]] += u[j] * u[t];
                }
            }
        }
        let count = (end - start) as f64;
        let d_mu = sum_u / count;
        let mut d_sigma = Array2::zeros((n, n));
        for j in 0..n {
            for t in 0..=j {
                let q_jt = 0.5 * (q[[j, t]] + q[[t, j]]);
                let v = -0.5 * (q_jt - sum_uu[[j, t]] / count);
                d_sigma[[j, t]] = v;
                d_sigma[[t, j]] = v;
            }
        }
        out.push((end - start, d_mu, d_sigma));
        start = end;
    }
    Ok(out)
}

/// Weighted mean of batch values with the batch-means standard error.
pub fn batch_mean_se<'a, D>(
    batches: impl Iterator<Item = (usize, &'a ndarray::Array<f64, D>)> + Clone,
) -> (ndarray::Array<f64, D>, ndarray::Array<f64, D>)
where
    D: ndarray::Dimension + 'a,
{
    let mut total = 0usize;
    let mut count = 0usize;
    let mut mean: Option<ndarray::Array<f64, D>> = None;
    let mut plain: Option<ndarray::Array<f64, D>> = None;
    for (size, value) in batches.clone() {
        total += size;
        count += 1;
        match mean.as_mut() {
            Some(acc) => acc.scaled_add(size as f64, value),
            None => mean = Some(value * size as f64),
        }
        match plain.as_mut() {
            Some(acc) => *acc += value,
            None => plain = Some(value.clone()),
        }
    }
    let mean = mean.expect("at least one batch") / total as f64;
    let plain = plain.expect("at least one batch") / count as f64;
    let mut var = plain.mapv(|_| 0.0);
    for (_, value) in batches {
        var.zip_mut_with(&(value - &plain), |acc, d| *acc += d * d);
    }
    let se = if count < 2 {
        var.mapv(|_| f64::NAN)
    } else {
        var.mapv(|v| (v / (count - 1) as f64 / count as f64).sqrt())
    };
    (mean, se)
}

/// Monte-Carlo estimate of `∂ log Pr / ∂μ` and `∂ log Pr / ∂Σ`.
///
/// The rectangle is clipped at `μ ± k·σ` internally before sampling.
pub fn grad_mu_sigma(
    problem: &MvnProblem,
    rect: &Rectangle,
    cfg: &SamplerConfig,
) -> Result<MuSigmaGrad, MvnError> {
    let batches = grad_mu_sigma_batches(problem, rect, cfg)?;
    Ok(combine_batches(&batches))
}

pub fn combine_batches(batches: &[BatchMoments]) -> MuSigmaGrad {
    let (d_mu, d_mu_se) = batch_mean_se(batches.iter().map(|(s, m, _)| (*s, m)));
    let (d_sigma, d_sigma_se) = batch_mean_se(batches.iter().map(|(s, _, g)| (*s, g)));
    MuSigmaGrad {
        d_mu,
        d_sigma,
        d_mu_se,
        d_sigma_se,
        n_samples: batches.iter().map(|b| b.0).sum(),
    }
}

/// Gradient of the objective with respect to every model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_s: Array2<f64>,
    pub d_lambda_raw: Array2<f64>,
    pub d_w: Array2<f64>,
    pub d_mlp: MlpParams,
    pub n_obs: usize,
}

impl GradientBundle {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            d_s: Array2::zeros(params.s.raw_dim()),
            d_lambda_raw: Array2::zeros(params.lambda_raw.raw_dim()),
            d_w: Array2::zeros(params.w.raw_dim()),
            d_mlp: params.mlp.zeros_like(),
            n_obs: 0,
        }
    }

    pub fn add(&mut self, other: &GradientBundle) {
        self.d_s += &other.d_s;
        self.d_lambda_raw += &other.d_lambda_raw;
        self.d_w += &other.d_w;
        self.d_mlp.add_assign(&other.d_mlp);
        self.n_obs += other.n_obs;
    }

    pub fn scale(&mut self, factor: f64) {
        self.d_s *= factor;
        self.d_lambda_raw *= factor;
        self.d_w *= factor;
        self.d_mlp.scale(factor);
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.d_s.as_slice().expect("standard layout"),
            self.d_lambda_raw.as_slice().expect("standard layout"),
            self.d_w.as_slice().expect("standard layout"),
        ];
        out.extend(self.d_mlp.tensors());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Carries a Σ-gradient back to the raw interaction columns.
///
/// The diagonal of `d_sigma` is dropped (Σ_jj is fixed at one). For column j,
/// `d_λ_j = (2/‖λ_j‖)(I − λ̂_jλ̂_jᵀ)(Λ̂ · d_sigma[:, j])` with `d_sigma`
/// symmetrized.
pub fn lambda_backward(
    lambda_raw: &Array2<f64>,
    d_sigma: &Array2<f64>,
) -> Result<Array2<f64>, ModelError> {
    let n = lambda_raw.ncols();
    if d_sigma.dim() != (n, n) {
        return Err(ModelError::DimMismatch {
            what: "d_sigma".into(),
            expected: n,
            got: d_sigma.nrows(),
        });
    }
    let (hat, norms) = normalize_columns(lambda_raw)?;
    let mut sym = Array2::zeros((n, n));
    for j in 0..n {
        for t in 0..j {
            let v = 0.5 * (d_sigma[[j, t]] + d_sigma[[t, j]]);
            sym[[j, t]] = v;
            sym[[t, j]] = v;
        }
    }
    let mut d_hat = hat.dot(&sym);
    for (j, mut col) in d_hat.axis_iter_mut(Axis(1)).enumerate() {
        let lam = hat.column(j);
        let along = lam.dot(&col);
        col.scaled_add(-along, &lam);
        col *= 2.0 / norms[j];
    }
    Ok(d_hat)
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Bundle contributions that come through μ only (S, W and the network).
pub fn mean_part(
    params: &ModelParams,
    fwd: &MuForward,
    d_mu: ArrayView1<f64>,
) -> Result<GradientBundle, ModelError> {
    let n = params.n_species();
    if d_mu.len() != n {
        return Err(ModelError::DimMismatch {
            what: "d_mu".into(),
            expected: n,
            got: d_mu.len(),
        });
    }
    let d_s = outer(fwd.h.view(), d_mu);
    let d_h = params.s.dot(&d_mu);
    let d_w = outer(d_h.view(), fwd.dnn_output());
    let grad_out = params.w.t().dot(&d_h);
    let (d_mlp, _) = params.mlp.backward_single(&fwd.tape, grad_out.view())?;
    Ok(GradientBundle {
        d_s,
        d_lambda_raw: Array2::zeros(params.lambda_raw.raw_dim()),
        d_w,
        d_mlp,
        n_obs: 1,
    })
}

/// Chain rule from `(∂/∂μ, ∂/∂Σ)` of one observation to every tensor.
pub fn assemble_bundle(
    params: &ModelParams,
    fwd: &MuForward,
    d_mu: ArrayView1<f64>,
    d_sigma: &Array2<f64>,
) -> Result<GradientBundle, ModelError> {
    let mut bundle = mean_part(params, fwd, d_mu)?;
    bundle.d_lambda_raw = lambda_backward(&params.lambda_raw, d_sigma)?;
    Ok(bundle)
}

/// Per-batch bundles for one observation, with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct ObsGradient {
    pub bundle: GradientBundle,
    pub se: GradientBundle,
    pub mu_sigma: MuSigmaGrad,
}

/// Full gradient of `log Pr(b | l)` for one observation with standardized
/// features, with standard errors from batch means propagated through the
/// (linear) chain rule.
pub fn observation_gradient(
    params: &ModelParams,
    obs_b: &[bool],
    l: ArrayView1<f64>,
    cfg: &SamplerConfig,
) -> Result<ObsGradient, ModelError> {
    let fwd = params.mu_forward(l)?;
    let factor = params.cov_factor()?;
    let problem = MvnProblem::with_factor(fwd.mu.clone(), factor)?;
    let batches = grad_mu_sigma_batches(&problem, &Rectangle::from_presence(obs_b), cfg)?;
    let bundles: Vec<(usize, GradientBundle)> = batches
        .iter()
        .map(|(size, d_mu, d_sigma)| {
            Ok((*size, assemble_bundle(params, &fwd, d_mu.view(), d_sigma)?))
        })
        .collect::<Result<_, ModelError>>()?;
    let flat: Vec<(usize, Array1<f64>)> = bundles
        .iter()
        .map(|(s, b)| (*s, b.tensors().concat().into_iter().collect()))
        .collect();
    let (mean, se) = batch_mean_se(flat.iter().map(|(s, v)| (*s, v)));
    Ok(ObsGradient {
        bundle: unflatten(params, &mean),
        se: unflatten(params, &se),
        mu_sigma: combine_batches(&batches),
    })
}

fn unflatten(params: &ModelParams, flat: &Array1<f64>) -> GradientBundle {
    let mut out = GradientBundle::zeros_like(params);
    out.n_obs = 1;
    let mut offset = 0;
    let mut write = |dst: &mut [f64]| {
        dst.copy_from_slice(&flat.as_slice().expect("contiguous")[offset..offset + dst.len()]);
        offset += dst.len();
    };
    write(out.d_s.as_slice_mut().expect("standard layout"));
    write(out.d_lambda_raw.as_slice_mut().expect("standard layout"));
    write(out.d_w.as_slice_mut().expect("standard layout"));
    for t in out.d_mlp.tensors_mut() {
        write(t);
    }
    out
}
