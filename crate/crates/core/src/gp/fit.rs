use serde::{Deserialize, Serialize};

use super::workspace::LikelihoodWorkspace;
use super::{factor_covariance, Design, GpError, KernelFamily, KernelSpec};
use crate::domain::Bounds;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::optim::{halton_points, nelder_mead, NelderMeadOptions};
use crate::scalar::Scalar;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Length-scale bounds on the unit-cube scale.
const THETA_MIN: f64 = 1e-3;
const THETA_MAX: f64 = 10.0;

/// Prior on a positive parameter whose logarithm is normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior<T> {
    pub log_mean: T,
    pub log_sd: T,
}

impl<T: Scalar> LogNormalPrior<T> {
    pub fn new(log_mean: T, log_sd: T) -> Result<Self, GpError> {
        if !(log_sd > T::zero()) {
            return Err(GpError::InvalidHyperparameter("log-normal sd must be positive".into()));
        }
        Ok(Self { log_mean, log_sd })
    }

    pub fn log_density(&self, x: T) -> T {
        let lx = x.ln();
        let z = (lx - self.log_mean) / self.log_sd;
        -T::lit(0.5) * z * z - lx - self.log_sd.ln() - T::lit(0.5 * LOG_2PI)
    }
}

/// MAP priors. Absent fields are flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior<T> {
    /// One prior per dimension, or a single prior shared by all dimensions.
    pub length_scales: Vec<LogNormalPrior<T>>,
    pub signal_variance: Option<LogNormalPrior<T>>,
    pub noise_variance: Option<LogNormalPrior<T>>,
}

impl<T: Scalar> HyperPrior<T> {
    /// Log-Normal length-scale prior with log-mean `ln 0.25` and log-sd 1.
    pub fn default_length_scale() -> Self {
        Self {
            length_scales: vec![LogNormalPrior {
                log_mean: T::lit(0.25_f64.ln()),
                log_sd: T::one(),
            }],
            signal_variance: None,
            noise_variance: None,
        }
    }

    fn length_scale_prior(&self, d: usize) -> Option<&LogNormalPrior<T>> {
        match self.length_scales.len() {
            0 => None,
            1 => self.length_scales.first(),
            _ => self.length_scales.get(d),
        }
    }

    fn log_density(&self, params: &Hyperparameters<T>, with_noise: bool) -> T {
        let mut lp = T::zero();
        for (d, &t) in params.length_scales.iter().enumerate() {
            if let Some(p) = self.length_scale_prior(d) {
                lp = lp + p.log_density(t);
            }
        }
        if let Some(p) = &self.signal_variance {
            lp = lp + p.log_density(params.signal_variance);
        }
        if with_noise {
            if let Some(p) = &self.noise_variance {
                lp = lp + p.log_density(params.noise_variance);
            }
        }
        lp
    }
}

/// Noise treatment requested from [`fit_hyperparams`].
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel<T> {
    Interpolating,
    /// A single noise variance, estimated jointly with the kernel.
    Homoskedastic,
    /// Known per-point noise variances.
    Fixed(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters<T> {
    /// Unit-cube length scales.
    pub length_scales: Vec<T>,
    pub signal_variance: T,
    /// Zero unless the fit is homoskedastic.
    pub noise_variance: T,
}

#[derive(Debug, Clone)]
pub struct FitOptions<T> {
    pub prior: Option<HyperPrior<T>>,
    pub starts: usize,
    pub max_evals: usize,
    /// Extra start, typically the previous fit in a sequential loop.
    pub warm_start: Option<Hyperparameters<T>>,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            prior: None,
            starts: 8,
            max_evals: 600,
            warm_start: None,
        }
    }
}

/// Objective at a multi-start initialization and after local search.
#[derive(Debug, Clone, PartialEq)]
pub struct StartRecord<T> {
    pub start: Hyperparameters<T>,
    pub initial_objective: T,
    pub final_objective: T,
    pub converged: bool,
    /// Objective evaluations spent by the local search.
    pub evals: usize,
}

/// How the noise standard deviation at an unsampled index is predicted.
#[derive(Debug, Clone)]
pub enum NoiseQuery<T> {
    /// Posterior mean of the absolute-residual GP, scaled and floored.
    ResidualGp(Box<GpFit<T>>),
    Constant(T),
}

#[derive(Debug, Clone)]
pub struct HeteroNoise<T> {
    /// Estimated noise standard deviations `γ̃_i` at the design points.
    pub std_devs: Vec<T>,
    pub query: NoiseQuery<T>,
    pub q: u32,
    pub floor: T,
    pub iterations: usize,
    /// True when the residual GP could not be fitted and a pooled estimate
    /// was used instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone)]
pub enum NoiseSpec<T> {
    Interpolating,
    Homoskedastic { variance: T },
    Heteroskedastic(HeteroNoise<T>),
}

impl<T: Scalar> NoiseSpec<T> {
    /// Diagonal of `S` for a design of size `m`.
    pub fn diagonal(&self, m: usize) -> Result<Vec<T>, GpError> {
        match self {
            NoiseSpec::Interpolating => Ok(vec![T::zero(); m]),
            NoiseSpec::Homoskedastic { variance } => {
                if *variance < T::zero() {
                    return Err(GpError::InvalidHyperparameter("noise variance must be >= 0".into()));
                }
                Ok(vec![*variance; m])
            }
            NoiseSpec::Heteroskedastic(h) => {
                if h.std_devs.len() != m {
                    return Err(GpError::Dimension {
                        expected: m,
                        found: h.std_devs.len(),
                    });
                }
                Ok(h.std_devs.iter().map(|&g| g * g).collect())
            }
        }
    }

    pub fn is_interpolating(&self) -> bool {
        matches!(self, NoiseSpec::Interpolating)
    }
}

/// Noise variance added by [`GpFit::posterior_v`].
#[derive(Debug, Clone, PartialEq)]
pub enum QueryNoise<T> {
    /// Zero, the fitted γ², or the heteroskedastic prediction, by fit type.
    Fitted,
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    pub covariance: Option<Matrix<T>>,
}

/// A conditioned Gaussian process with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpFit<T> {
    kernel: KernelSpec<T>,
    noise: NoiseSpec<T>,
    prior_mean: T,
    domain: Bounds<T>,
    unit_points: Matrix<T>,
    responses: Vec<T>,
    noise_diag: Vec<T>,
    factor: Cholesky<T>,
    dual_weights: Vec<T>,
    log_marginal_likelihood: T,
    objective: T,
    starts: Vec<StartRecord<T>>,
}

struct Conditioned<T> {
    factor: Cholesky<T>,
    alpha: Vec<T>,
    prior_mean: T,
    lml: T,
}

fn condition<T: Scalar>(
    kernel: &KernelSpec<T>,
    unit_points: &Matrix<T>,
    responses: &[T],
    noise_diag: &[T],
    prior_mean: Option<T>,
) -> Result<Conditioned<T>, GpError> {
    let factor = factor_covariance(kernel, unit_points, noise_diag, "K + S")?;
    let m = responses.len();
    let prior_mean = match prior_mean {
        Some(mu) => mu,
        None => {
            // Generalized least squares for a constant mean.
            let a = factor.solve(&vec![T::one(); m]);
            let den: T = a.iter().copied().sum();
            dot(&a, responses) / den
        }
    };
    let centered: Vec<T> = responses.iter().map(|&y| y - prior_mean).collect();
    let mut alpha = factor.solve(&centered);
    let lml = -T::lit(0.5) * dot(&centered, &alpha)
        - T::lit(0.5) * factor.log_det()
        - T::lit(0.5 * LOG_2PI) * T::from_usize_lossy(m);
    if noise_diag.iter().all(|s| s.is_zero()) && factor.jitter() > T::zero() {
        alpha = refine_interpolation(kernel, unit_points, &factor, &centered, alpha);
    }
    Ok(Conditioned {
        factor,
        alpha,
        prior_mean,
        lml,
    })
}

/// The jittered solve leaves a residual of `jitter·α` at the samples, which
/// near-duplicate points inflate. Iterative refinement against the unjittered
/// `K` removes it; the best iterate is kept in case `K` is numerically
/// indefinite and the iteration stalls.
fn refine_interpolation<T: Scalar>(
    kernel: &KernelSpec<T>,
    unit_points: &Matrix<T>,
    factor: &Cholesky<T>,
    centered: &[T],
    mut alpha: Vec<T>,
) -> Vec<T> {
    let k = kernel.covariance(unit_points);
    let residual = |a: &[T]| -> Vec<T> { centered.iter().zip(k.matvec(a)).map(|(&c, ka)| c - ka).collect() };
    let size = |r: &[T]| r.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let floor = T::epsilon() * size(centered);
    let mut r = residual(&alpha);
    let mut prev = size(&r);
    let mut best = (prev, alpha.clone());
    for _ in 0..20 {
        if prev <= floor {
            break;
        }
        let step = factor.solve(&r);
        for (a, d) in alpha.iter_mut().zip(&step) {
            *a = *a + *d;
        }
        r = residual(&alpha);
        let now = size(&r);
        if now < best.0 {
            best = (now, alpha.clone());
        }
        if now > prev * T::lit(0.9) {
            break;
        }
        prev = now;
    }
    best.1
}

/// Log density of the responses under `N(μ_0 1, K + S)`.
///
/// `kernel` length scales are read on the unit-cube scale of the design's
/// domain.
pub fn log_marginal_likelihood<T: Scalar>(
    design: &Design<T>,
    prior_mean: T,
    kernel: &KernelSpec<T>,
    noise: &NoiseSpec<T>,
) -> Result<T, GpError> {
    if design.is_empty() {
        return Err(GpError::InvalidArgument("empty design".into()));
    }
    check_kernel_dim(kernel, design.dim())?;
    let diag = noise.diagonal(design.len())?;
    Ok(condition(kernel, &design.unit_points(), design.responses(), &diag, Some(prior_mean))?.lml)
}

fn check_kernel_dim<T: Scalar>(kernel: &KernelSpec<T>, dim: usize) -> Result<(), GpError> {
    if kernel.dim() != dim {
        return Err(GpError::Dimension {
            expected: dim,
            found: kernel.dim(),
        });
    }
    Ok(())
}

/// Box for the optimizer, in log coordinates.
struct SearchSpace<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    start_lower: Vec<T>,
    start_upper: Vec<T>,
}

impl<T: Scalar> SearchSpace<T> {
    fn new(dim: usize, scale: T, homoskedastic: bool) -> Self {
        let ln = |x: f64| T::lit(x.ln());
        let ls = scale.ln();
        let mut s = Self {
            lower: vec![ln(THETA_MIN); dim],
            upper: vec![ln(THETA_MAX); dim],
            start_lower: vec![ln(0.05); dim],
            start_upper: vec![ln(1.0); dim],
        };
        s.lower.push(ls + ln(1e-4));
        s.upper.push(ls + ln(1e3));
        s.start_lower.push(ls + ln(0.3));
        s.start_upper.push(ls + ln(3.0));
        if homoskedastic {
            s.lower.push(ls + ln(1e-10));
            s.upper.push(ls + ln(10.0));
            s.start_lower.push(ls + ln(1e-3));
            s.start_upper.push(ls + ln(0.5));
        }
        s
    }

    fn clamp(&self, p: &[T]) -> (Vec<T>, T) {
        let mut excess = T::zero();
        let c = p
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = x.max(self.lower[i]).min(self.upper[i]);
                excess = excess + (x - y) * (x - y);
                y
            })
            .collect();
        (c, excess)
    }
}

fn unpack<T: Scalar>(p: &[T], dim: usize, homoskedastic: bool) -> Hyperparameters<T> {
    Hyperparameters {
        length_scales: p[..dim].iter().map(|x| x.exp()).collect(),
        signal_variance: p[dim].exp(),
        noise_variance: if homoskedastic { p[dim + 1].exp() } else { T::zero() },
    }
}

fn pack<T: Scalar>(h: &Hyperparameters<T>, homoskedastic: bool) -> Vec<T> {
    let mut p: Vec<T> = h.length_scales.iter().map(|x| x.ln()).collect();
    p.push(h.signal_variance.ln());
    if homoskedastic {
        p.push(h.noise_variance.max(T::min_positive_value()).ln());
    }
    p
}

/// Fits kernel (and, for [`NoiseModel::Homoskedastic`], noise)
/// hyperparameters by maximizing the log marginal likelihood, plus the log
/// prior when one is given, over a Nelder–Mead multi-start search in log
/// coordinates. The constant prior mean is profiled by GLS at every
/// candidate.
pub fn fit_hyperparams<T: Scalar>(
    design: &Design<T>,
    family: KernelFamily,
    noise: NoiseModel<T>,
    options: &FitOptions<T>,
) -> Result<GpFit<T>, GpError> {
    let m = design.len();
    if m < 2 {
        return Err(GpError::InvalidArgument(format!(
            "hyperparameter fitting needs at least 2 design points, found {m}"
        )));
    }
    if let NoiseModel::Fixed(v) = &noise {
        if v.len() != m || v.iter().any(|&x| !(x >= T::zero())) {
            return Err(GpError::InvalidArgument(
                "fixed noise variances must be nonnegative, one per design point".into(),
            ));
        }
    }
    if let Some(prior) = &options.prior {
        if let Some(bad) = prior
            .length_scales
            .iter()
            .chain(&prior.signal_variance)
            .chain(&prior.noise_variance)
            .find(|p| !(p.log_sd > T::zero()))
        {
            return Err(GpError::InvalidHyperparameter(format!(
                "log-normal prior sd must be positive, found {}",
                bad.log_sd
            )));
        }
    }

    let dim = design.dim();
    let homo = matches!(noise, NoiseModel::Homoskedastic);
    let unit = design.unit_points();
    let responses = design.responses();
    let sd = design.response_sd();
    let scale = if sd > T::zero() && sd.is_finite() { sd * sd } else { T::one() };
    let space = SearchSpace::new(dim, scale, homo);

    let fixed_diag: Option<Vec<T>> = match &noise {
        NoiseModel::Fixed(v) => Some(v.clone()),
        _ => None,
    };
    let eval_params = |h: &Hyperparameters<T>| -> Option<(Conditioned<T>, T)> {
        let kernel = KernelSpec {
            family,
            length_scales: h.length_scales.clone(),
            signal_variance: h.signal_variance,
        };
        let diag = match &fixed_diag {
            Some(v) => v.clone(),
            None => vec![h.noise_variance; m],
        };
        let c = condition(&kernel, &unit, responses, &diag, None).ok()?;
        let mut obj = c.lml;
        if let Some(prior) = &options.prior {
            obj = obj + prior.log_density(h, homo);
        }
        obj.is_finite().then_some((c, obj))
    };
    let penalty = T::lit(10.0);
    let mut workspace = LikelihoodWorkspace::new(family, &unit, responses);
    let mut neg_objective = |p: &[T]| -> T {
        let (c, excess) = space.clamp(p);
        let h = unpack(&c, dim, homo);
        let lml = match &fixed_diag {
            Some(v) => workspace.lml(&h.length_scales, h.signal_variance, |i| v[i]),
            None => workspace.lml(&h.length_scales, h.signal_variance, |_| h.noise_variance),
        };
        let obj = match (lml, &options.prior) {
            (Some(l), Some(prior)) => l + prior.log_density(&h, homo),
            (Some(l), None) => l,
            (None, _) => return T::infinity(),
        };
        if obj.is_finite() {
            -obj + penalty * excess
        } else {
            T::infinity()
        }
    };

    let mut starts: Vec<Vec<T>> = halton_points(options.starts, space.lower.len())
        .into_iter()
        .map(|u| {
            u.iter()
                .enumerate()
                .map(|(i, &x)| {
                    space.start_lower[i] + T::lit(x) * (space.start_upper[i] - space.start_lower[i])
                })
                .collect()
        })
        .collect();
    if let Some(w) = &options.warm_start {
        if w.length_scales.len() == dim {
            starts.push(space.clamp(&pack(w, homo)).0);
        }
    }

    let step = vec![T::lit(0.8); space.lower.len()];
    let nm = NelderMeadOptions {
        max_evals: options.max_evals,
        f_tol: T::lit(1e-6),
        x_tol: T::lit(1e-3),
    };
    let mut records = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<T>, T)> = None;
    for s in &starts {
        let initial = -neg_objective(s);
        let min = nelder_mead(&mut neg_objective, s, &step, nm);
        let (x, _) = space.clamp(&min.x);
        // Report the objective at the clamped point so that records and the
        // returned fit agree.
        let final_obj = eval_params(&unpack(&x, dim, homo)).map_or(T::neg_infinity(), |(_, o)| o);
        let final_obj = if final_obj >= initial { final_obj } else { initial };
        let x = if -neg_objective(&x) >= initial { x } else { s.clone() };
        records.push(StartRecord {
            start: unpack(s, dim, homo),
            initial_objective: initial,
            final_objective: final_obj,
            converged: min.converged,
            evals: min.evals,
        });
        if final_obj.is_finite() && best.as_ref().is_none_or(|(_, b)| final_obj > *b) {
            best = Some((x, final_obj));
        }
    }

    // Once the length scales are short enough that design points decorrelate,
    // the kernel acts as a second nugget and the search stalls on the ridge
    // trading signal for noise. Polish from the end with the signal folded in.
    if homo {
        if let Some((x, obj)) = best.as_mut() {
            let mut folded = x.clone();
            let total = folded[dim].exp() + folded[dim + 1].exp();
            folded[dim] = space.lower[dim];
            folded[dim + 1] = (total - folded[dim].exp()).ln();
            let (folded, _) = space.clamp(&folded);
            let min = nelder_mead(&mut neg_objective, &folded, &step, nm);
            let (cand, _) = space.clamp(&min.x);
            for c in [folded, cand] {
                if let Some((_, o)) = eval_params(&unpack(&c, dim, homo)) {
                    if o > *obj {
                        *x = c;
                        *obj = o;
                    }
                }
            }
        }
    }

    let best_seen = best.as_ref().map(|(x, _)| x.iter().map(|v| v.as_f64()).collect());
    let Some((best_x, _)) = best else {
        return Err(GpError::FitFailed {
            diagnostic: "objective was not finite at any start".into(),
            best: None,
        });
    };
    if !records.iter().any(|r| r.converged) {
        return Err(GpError::FitFailed {
            diagnostic: format!(
                "none of {} starts converged within {} evaluations",
                records.len(),
                options.max_evals
            ),
            best: best_seen,
        });
    }

    let h = unpack(&best_x, dim, homo);
    let (c, objective) = eval_params(&h).ok_or_else(|| GpError::FitFailed {
        diagnostic: "best parameters no longer factorize".into(),
        best: best_seen.clone(),
    })?;
    let kernel = KernelSpec::new(family, h.length_scales.clone(), h.signal_variance)?;
    let (noise_spec, noise_diag) = match noise {
        NoiseModel::Interpolating => (NoiseSpec::Interpolating, vec![T::zero(); m]),
        NoiseModel::Homoskedastic => (
            NoiseSpec::Homoskedastic {
                variance: h.noise_variance,
            },
            vec![h.noise_variance; m],
        ),
        NoiseModel::Fixed(v) => {
            let std_devs: Vec<T> = v.iter().map(|x| x.sqrt()).collect();
            let pooled = std_devs.iter().copied().sum::<T>() / T::from_usize_lossy(m);
            (
                NoiseSpec::Heteroskedastic(HeteroNoise {
                    std_devs,
                    query: NoiseQuery::Constant(pooled),
                    q: 1,
                    floor: T::zero(),
                    iterations: 0,
                    fell_back: false,
                }),
                v,
            )
        }
    };
    Ok(GpFit {
        kernel,
        noise: noise_spec,
        prior_mean: c.prior_mean,
        domain: design.domain().clone(),
        unit_points: unit,
        responses: responses.to_vec(),
        noise_diag,
        factor: c.factor,
        dual_weights: c.alpha,
        log_marginal_likelihood: c.lml,
        objective,
        starts: records,
    })
}

impl<T: Scalar> GpFit<T> {
    /// Conditions a GP with given hyperparameters on a design. The prior mean
    /// is profiled by GLS when `prior_mean` is `None`.
    pub fn condition(
        design: &Design<T>,
        kernel: KernelSpec<T>,
        noise: NoiseSpec<T>,
        prior_mean: Option<T>,
    ) -> Result<Self, GpError> {
        if design.is_empty() {
            return Err(GpError::InvalidArgument("empty design".into()));
        }
        check_kernel_dim(&kernel, design.dim())?;
        let unit = design.unit_points();
        let noise_diag = noise.diagonal(design.len())?;
        let c = condition(&kernel, &unit, design.responses(), &noise_diag, prior_mean)?;
        Ok(Self {
            kernel,
            noise,
            prior_mean: c.prior_mean,
            domain: design.domain().clone(),
            unit_points: unit,
            responses: design.responses().to_vec(),
            noise_diag,
            factor: c.factor,
            dual_weights: c.alpha,
            log_marginal_likelihood: c.lml,
            objective: c.lml,
            starts: Vec::new(),
        })
    }

    /// Same points and kernel, new responses and noise; nothing is
    /// re-optimized.
    pub fn recondition(&self, responses: Vec<T>, noise: NoiseSpec<T>, prior_mean: Option<T>) -> Result<Self, GpError> {
        if responses.len() != self.responses.len() {
            return Err(GpError::InvalidArgument(format!(
                "expected {} responses, found {}",
                self.responses.len(),
                responses.len()
            )));
        }
        let noise_diag = noise.diagonal(responses.len())?;
        let c = condition(&self.kernel, &self.unit_points, &responses, &noise_diag, prior_mean)?;
        Ok(Self {
            kernel: self.kernel.clone(),
            noise,
            prior_mean: c.prior_mean,
            domain: self.domain.clone(),
            unit_points: self.unit_points.clone(),
            responses,
            noise_diag,
            factor: c.factor,
            dual_weights: c.alpha,
            log_marginal_likelihood: c.lml,
            objective: c.lml,
            starts: Vec::new(),
        })
    }

    /// Interpolating fit through this fit's posterior means at its own design
    /// points, with the same kernel and prior mean. An interpolating fit is
    /// returned unchanged.
    pub fn reinterpolated(&self) -> Result<Self, GpError> {
        if self.noise.is_interpolating() {
            return Ok(self.clone());
        }
        let m = self.responses.len();
        let fitted: Vec<T> = (0..m)
            .map(|i| self.predict_mean_unit(self.unit_points.row(i)))
            .collect();
        let noise_diag = vec![T::zero(); m];
        let factor = factor_covariance(&self.kernel, &self.unit_points, &noise_diag, "K")?;
        // K⁻¹(ŷ − μ₀) = K⁻¹K(K + S)⁻¹(υ − μ₀) is exactly the regressive weight
        // vector, so it is reused instead of solved for.
        let alpha = self.dual_weights.clone();
        let centered: Vec<T> = fitted.iter().map(|&y| y - self.prior_mean).collect();
        let lml = -T::lit(0.5) * dot(&centered, &alpha)
            - T::lit(0.5) * factor.log_det()
            - T::lit(0.5 * LOG_2PI) * T::from_usize_lossy(m);
        Ok(Self {
            kernel: self.kernel.clone(),
            noise: NoiseSpec::Interpolating,
            prior_mean: self.prior_mean,
            domain: self.domain.clone(),
            unit_points: self.unit_points.clone(),
            responses: fitted,
            noise_diag,
            factor,
            dual_weights: alpha,
            log_marginal_likelihood: lml,
            objective: lml,
            starts: Vec::new(),
        })
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn noise(&self) -> &NoiseSpec<T> {
        &self.noise
    }

    pub fn prior_mean(&self) -> T {
        self.prior_mean
    }

    pub fn domain(&self) -> &Bounds<T> {
        &self.domain
    }

    pub fn responses(&self) -> &[T] {
        &self.responses
    }

    pub fn unit_points(&self) -> &Matrix<T> {
        &self.unit_points
    }

    /// Design points in original coordinates.
    pub fn points(&self) -> Vec<Vec<T>> {
        self.unit_points.rows_iter().map(|u| self.domain.from_unit(u)).collect()
    }

    pub fn noise_diagonal(&self) -> &[T] {
        &self.noise_diag
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    pub fn jitter(&self) -> T {
        self.factor.jitter()
    }

    pub fn dual_weights(&self) -> &[T] {
        &self.dual_weights
    }

    pub fn log_marginal_likelihood(&self) -> T {
        self.log_marginal_likelihood
    }

    /// Log marginal likelihood plus log prior (MAP) at the fitted values.
    pub fn objective(&self) -> T {
        self.objective
    }

    pub fn start_records(&self) -> &[StartRecord<T>] {
        &self.starts
    }

    pub fn hyperparameters(&self) -> Hyperparameters<T> {
        Hyperparameters {
            length_scales: self.kernel.length_scales.clone(),
            signal_variance: self.kernel.signal_variance,
            noise_variance: match &self.noise {
                NoiseSpec::Homoskedastic { variance } => *variance,
                _ => T::zero(),
            },
        }
    }

    /// Length scales expressed in original index units.
    pub fn length_scales_original(&self) -> Vec<T> {
        self.kernel
            .length_scales
            .iter()
            .enumerate()
            .map(|(d, &t)| t * self.domain.range(d))
            .collect()
    }

    pub(crate) fn with_start_records(mut self, starts: Vec<StartRecord<T>>) -> Self {
        self.starts = starts;
        self
    }

    fn check_query(&self, q: &[T]) -> Result<(), GpError> {
        if q.len() != self.domain.dim() {
            return Err(GpError::Dimension {
                expected: self.domain.dim(),
                found: q.len(),
            });
        }
        Ok(())
    }

    /// Latent mean and variance at a unit-cube point.
    #[inline]
    pub fn predict_unit(&self, u: &[T]) -> (T, T) {
        let k = self.kernel.cross(&self.unit_points, u);
        let mean = self.prior_mean + dot(&k, &self.dual_weights);
        let v = self.factor.solve_lower(&k);
        let var = (self.kernel.signal_variance - dot(&v, &v)).max(T::zero());
        (mean, var)
    }

    #[inline]
    pub fn predict_mean_unit(&self, u: &[T]) -> T {
        let k = self.kernel.cross(&self.unit_points, u);
        self.prior_mean + dot(&k, &self.dual_weights)
    }

    /// Latent posterior mean at a point in original coordinates.
    pub fn predict_mean(&self, q: &[T]) -> T {
        self.predict_mean_unit(&self.domain.to_unit(q))
    }

    /// Posterior of the latent surface `f` at the queries.
    pub fn posterior_f(&self, queries: &[Vec<T>]) -> Result<PosteriorMoments<T>, GpError> {
        let mut mean = Vec::with_capacity(queries.len());
        let mut variance = Vec::with_capacity(queries.len());
        for q in queries {
            self.check_query(q)?;
            let (m, v) = self.predict_unit(&self.domain.to_unit(q));
            mean.push(m);
            variance.push(v);
        }
        Ok(PosteriorMoments {
            mean,
            variance,
            covariance: None,
        })
    }

    /// Posterior of `f` including the joint covariance over the queries.
    pub fn posterior_f_full(&self, queries: &[Vec<T>]) -> Result<PosteriorMoments<T>, GpError> {
        let g = queries.len();
        let mut units = Vec::with_capacity(g);
        for q in queries {
            self.check_query(q)?;
            units.push(self.domain.to_unit(q));
        }
        let mut mean = Vec::with_capacity(g);
        let mut whitened = Vec::with_capacity(g);
        for u in &units {
            let k = self.kernel.cross(&self.unit_points, u);
            mean.push(self.prior_mean + dot(&k, &self.dual_weights));
            whitened.push(self.factor.solve_lower(&k));
        }
        let mut cov = Matrix::zeros(g, g);
        for i in 0..g {
            for j in 0..=i {
                let c = self.kernel.eval_unchecked(&units[i], &units[j]) - dot(&whitened[i], &whitened[j]);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let variance = (0..g).map(|i| cov[(i, i)].max(T::zero())).collect();
        Ok(PosteriorMoments {
            mean,
            variance,
            covariance: Some(cov),
        })
    }

    /// Noise variance predicted at a new index.
    pub fn noise_variance_at(&self, q: &[T]) -> T {
        match &self.noise {
            NoiseSpec::Interpolating => T::zero(),
            NoiseSpec::Homoskedastic { variance } => *variance,
            NoiseSpec::Heteroskedastic(h) => {
                let sd = match &h.query {
                    NoiseQuery::ResidualGp(fit) => {
                        (T::lit(super::ABS_RESIDUAL_SCALE) * fit.predict_mean(q)).max(h.floor)
                    }
                    NoiseQuery::Constant(c) => *c,
                };
                sd * sd
            }
        }
    }

    /// Posterior of a new noisy observation: latent moments plus noise
    /// variance.
    pub fn posterior_v(&self, queries: &[Vec<T>], noise: &QueryNoise<T>) -> Result<PosteriorMoments<T>, GpError> {
        let extra: Vec<T> = match noise {
            QueryNoise::Explicit(v) => {
                if v.len() != queries.len() {
                    return Err(GpError::InvalidArgument(format!(
                        "{} noise variances for {} queries",
                        v.len(),
                        queries.len()
                    )));
                }
                if v.iter().any(|&x| !(x >= T::zero())) {
                    return Err(GpError::InvalidArgument("query noise variance must be >= 0".into()));
                }
                v.clone()
            }
            QueryNoise::Fitted => {
                for q in queries {
                    self.check_query(q)?;
                }
                queries.iter().map(|q| self.noise_variance_at(q)).collect()
            }
        };
        let mut post = self.posterior_f(queries)?;
        for (v, e) in post.variance.iter_mut().zip(extra) {
            *v = *v + e;
        }
        Ok(post)
    }
}
