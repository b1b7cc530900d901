//! Pairwise maximum-entropy surrogate.
//!
//! For each label separately, finds the highest-entropy distribution over the
//! `2^n` outcomes whose one- and two-variable marginals equal the empirical
//! label-conditional ones. Two solvers are available: iterative proportional
//! fitting on the full state vector, and Fisher-preconditioned gradient
//! ascent on the log-likelihood of the Ising-form exponential family
//! `q(x) ∝ exp(Σ h_i s_i + Σ_{i<j} J_ij s_i s_j)` with spins `s = 1 - 2b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{decompose_exact, Conditionals, LatticeDecomposition};
use crate::linalg::solve_spd;
use crate::records::{Label, LabeledCounts};
use crate::scalar::{Field, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitAlgorithm {
    #[default]
    IterativeProportionalFitting,
    GradientAscent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Largest allowed absolute mismatch of any 1- or 2-body marginal.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub algorithm: FitAlgorithm,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100_000,
            algorithm: FitAlgorithm::IterativeProportionalFitting,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Invalid(format!(
                "fit tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ising-form parameters in spin encoding, fixed up to the normalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseParams<T = f64> {
    pub fields: Vec<T>,
    /// Upper triangle in row order: (0,1), (0,2), …, (0,n-1), (1,2), …
    pub couplings: Vec<T>,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn spin_product(x: usize, mask: usize) -> i32 {
    if (x & mask).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

impl<T: Real> PairwiseParams<T> {
    pub fn coupling(&self, i: usize, j: usize) -> T {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.couplings[pair_index(self.fields.len(), i, j)]
    }

    /// Normalized distribution implied by the parameters.
    pub fn joint(&self) -> Vec<T> {
        let n = self.fields.len();
        let energy = |x: usize| {
            let mut e = T::zero();
            for i in 0..n {
                e = e + self.fields[i] * T::from_f64_lossy(spin_product(x, 1 << i) as f64);
                for j in i + 1..n {
                    e = e + self.coupling(i, j) * T::from_f64_lossy(spin_product(x, (1 << i) | (1 << j)) as f64);
                }
            }
            e
        };
        let energies: Vec<T> = (0..1usize << n).map(energy).collect();
        let top = energies.iter().copied().fold(T::neg_infinity(), T::max);
        let weights: Vec<T> = energies.iter().map(|&e| (e - top).exp()).collect();
        let z: T = weights.iter().copied().sum();
        weights.into_iter().map(|w| w / z).collect()
    }

    /// Walsh coefficients of `log q` on singletons and pairs. `None` if any cell is zero.
    pub fn from_joint(n: usize, joint: &[T]) -> Option<Self> {
        if joint.iter().any(|&p| !(p > T::zero())) {
            return None;
        }
        let logs: Vec<T> = joint.iter().map(|p| p.ln()).collect();
        let scale = T::one() / T::from_f64_lossy(joint.len() as f64);
        let coeff = |mask: usize| {
            logs.iter()
                .enumerate()
                .map(|(x, &l)| l * T::from_f64_lossy(spin_product(x, mask) as f64))
                .sum::<T>()
                * scale
        };
        let fields = (0..n).map(|i| coeff(1 << i)).collect();
        let mut couplings = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                couplings.push(coeff((1 << i) | (1 << j)));
            }
        }
        Some(Self { fields, couplings })
    }
}

/// Fitted distribution for one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFit<T = f64> {
    pub joint: Vec<T>,
    /// Present only when every cell of the joint is positive.
    pub params: Option<PairwiseParams<T>>,
    pub residual: T,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntSurrogate<T = f64> {
    pub n: usize,
    pub algorithm: FitAlgorithm,
    pub labels: [LabelFit<T>; 2],
    /// Worse of the two label residuals.
    pub fit_residual: T,
}

impl<T: Real> MaxEntSurrogate<T> {
    pub fn conditionals(&self) -> Result<Conditionals<T>> {
        Conditionals::new(self.n, self.labels[0].joint.clone(), self.labels[1].joint.clone())
    }

    pub fn iterations(&self) -> [usize; 2] {
        [self.labels[0].iterations, self.labels[1].iterations]
    }
}

/// 1- and 2-body marginals of a distribution, in a fixed order.
struct LowOrderMarginals<T> {
    singles: Vec<[T; 2]>,
    pairs: Vec<[T; 4]>,
}

fn low_order_marginals<T: Real>(n: usize, dist: &[T]) -> LowOrderMarginals<T> {
    let mut singles = vec![[T::zero(); 2]; n];
    let mut pairs = vec![[T::zero(); 4]; n * (n - 1) / 2];
    for (x, &p) in dist.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        for i in 0..n {
            let bi = x >> i & 1;
            singles[i][bi] = singles[i][bi] + p;
            for j in i + 1..n {
                let cell = bi | (x >> j & 1) << 1;
                let k = pair_index(n, i, j);
                pairs[k][cell] = pairs[k][cell] + p;
            }
        }
    }
    LowOrderMarginals { singles, pairs }
}

/// Largest absolute 1- or 2-body marginal mismatch between two distributions.
pub fn marginal_residual<T: Real>(n: usize, fitted: &[T], target: &[T]) -> T {
    let a = low_order_marginals(n, fitted);
    let b = low_order_marginals(n, target);
    let singles = a.singles.iter().zip(&b.singles).flat_map(|(u, v)| u.iter().zip(v));
    let pairs = a.pairs.iter().zip(&b.pairs).flat_map(|(u, v)| u.iter().zip(v));
    singles
        .chain(pairs)
        .map(|(&u, &v)| (u - v).abs())
        .fold(T::zero(), T::max)
}

/// `KL(target ‖ q)` in bits.
pub fn kl_divergence<T: Real>(target: &[T], q: &[T]) -> T {
    target.iter().zip(q).map(|(&t, &p)| T::xlog2_ratio(t, p)).sum()
}

fn check_target<T: Real>(n: usize, target: &[T]) -> Result<()> {
    if n < 2 || target.len() != 1 << n {
        return Err(Error::WidthMismatch {
            expected: 1 << n,
            found: target.len(),
        });
    }
    let total: T = target.iter().copied().sum();
    if target.iter().any(|p| !(p.is_finite() && *p >= T::zero())) || (total - T::one()).abs() > T::epsilon().sqrt() {
        return Err(Error::Invalid("fit target is not a probability vector".into()));
    }
    Ok(())
}

/// Iterative proportional fitting from the uniform distribution, cycling over
/// all pair constraints each sweep. `observer` sees the joint after every sweep.
pub fn fit_ipf<T: Real>(
    n: usize,
    target: &[T],
    config: &FitConfig,
    mut observer: impl FnMut(&[T]),
) -> Result<LabelFit<T>> {
    config.validate()?;
    check_target(n, target)?;
    let tol = T::from_f64_lossy(config.tolerance);
    let targets = low_order_marginals(n, target).pairs;
    let size = 1usize << n;
    let mut q = vec![T::one() / T::from_f64_lossy(size as f64); size];
    let mut residual = marginal_residual(n, &q, target);
    let mut sweeps = 0;
    while residual >= tol {
        if sweeps == config.max_iterations {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                residual: residual.to_f64_lossy(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                let k = pair_index(n, i, j);
                let mut current = [T::zero(); 4];
                for (x, &p) in q.iter().enumerate() {
                    let cell = (x >> i & 1) | (x >> j & 1) << 1;
                    current[cell] = current[cell] + p;
                }
                let ratio: [T; 4] = std::array::from_fn(|c| {
                    if current[c] > T::zero() {
                        targets[k][c] / current[c]
                    } else {
                        T::zero()
                    }
                });
                for (x, p) in q.iter_mut().enumerate() {
                    *p = *p * ratio[(x >> i & 1) | (x >> j & 1) << 1];
                }
            }
        }
        sweeps += 1;
        observer(&q);
        residual = marginal_residual(n, &q, target);
    }
    Ok(LabelFit {
        params: PairwiseParams::from_joint(n, &q),
        joint: q,
        residual,
        iterations: sweeps,
    })
}

/// Natural-gradient ascent on the exponential-family log-likelihood with
/// backtracking. Targets on the boundary of the marginal polytope are reached
/// only as parameters diverge, so convergence there is slow.
pub fn fit_gradient<T: Real>(n: usize, target: &[T], config: &FitConfig) -> Result<LabelFit<T>> {
    config.validate()?;
    check_target(n, target)?;
    let tol = T::from_f64_lossy(config.tolerance);
    let mut masks: Vec<usize> = (0..n).map(|i| 1 << i).collect();
    for i in 0..n {
        for j in i + 1..n {
            masks.push((1 << i) | (1 << j));
        }
    }
    let dim = masks.len();
    let size = 1usize << n;
    let features: Vec<Vec<T>> = (0..size)
        .map(|x| {
            masks
                .iter()
                .map(|&m| T::from_f64_lossy(spin_product(x, m) as f64))
                .collect()
        })
        .collect();
    let moments = |dist: &[T]| -> Vec<T> {
        (0..dim)
            .map(|k| dist.iter().zip(&features).map(|(&p, f)| p * f[k]).sum())
            .collect()
    };
    let target_moments = moments(target);

    let model = |theta: &[T]| -> (Vec<T>, T) {
        let energies: Vec<T> = features
            .iter()
            .map(|f| f.iter().zip(theta).map(|(&a, &b)| a * b).sum())
            .collect();
        let top = energies.iter().copied().fold(T::neg_infinity(), T::max);
        let w: Vec<T> = energies.iter().map(|&e| (e - top).exp()).collect();
        let z: T = w.iter().copied().sum();
        let log_z = top + z.ln();
        (w.into_iter().map(|v| v / z).collect(), log_z)
    };
    let objective =
        |theta: &[T], log_z: T| -> T { theta.iter().zip(&target_moments).map(|(&a, &b)| a * b).sum::<T>() - log_z };

    let mut theta = vec![T::zero(); dim];
    let (mut q, mut log_z) = model(&theta);
    let mut residual = marginal_residual(n, &q, target);
    let mut iterations = 0;
    let jitter = T::from_f64_lossy(1e-12);
    let half = T::from_f64_lossy(0.5);
    while residual >= tol {
        if iterations == config.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual.to_f64_lossy(),
            });
        }
        let mu = moments(&q);
        let grad: Vec<T> = target_moments.iter().zip(&mu).map(|(&t, &m)| t - m).collect();
        let mut fisher = vec![T::zero(); dim * dim];
        for (f, &p) in features.iter().zip(&q) {
            for a in 0..dim {
                let da = f[a] - mu[a];
                for b in 0..=a {
                    fisher[a * dim + b] = fisher[a * dim + b] + p * da * (f[b] - mu[b]);
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                fisher[b * dim + a] = fisher[a * dim + b];
            }
            fisher[a * dim + a] = fisher[a * dim + a] + jitter;
        }
        let direction = solve_spd(&fisher, &grad).unwrap_or_else(|| grad.clone());
        let slope: T = direction.iter().zip(&grad).map(|(&d, &g)| d * g).sum();
        let current = objective(&theta, log_z);
        // below the objective's rounding level Armijo cannot see progress, and
        // the quadratic model behind the Newton step is exact there anyway
        let resolvable = slope > T::from_f64_lossy(64.0) * T::epsilon() * current.abs().max(T::one());
        let mut step = T::one();
        loop {
            let trial: Vec<T> = theta.iter().zip(&direction).map(|(&t, &d)| t + step * d).collect();
            let (tq, tz) = model(&trial);
            let value = objective(&trial, tz);
            if !resolvable
                || value >= current + T::from_f64_lossy(1e-4) * step * slope
                || step < T::from_f64_lossy(1e-12)
            {
                theta = trial;
                q = tq;
                log_z = tz;
                break;
            }
            step = step * half;
        }
        iterations += 1;
        residual = marginal_residual(n, &q, target);
    }
    Ok(LabelFit {
        params: PairwiseParams::from_joint(n, &q),
        joint: q,
        residual,
        iterations,
    })
}

pub fn fit_label<T: Real>(n: usize, target: &[T], config: &FitConfig) -> Result<LabelFit<T>> {
    match config.algorithm {
        FitAlgorithm::IterativeProportionalFitting => fit_ipf(n, target, config, |_| {}),
        FitAlgorithm::GradientAscent => fit_gradient(n, target, config),
    }
}

/// Fits both label-conditionals independently.
pub fn fit_surrogate_exact<T: Real>(cond: &Conditionals<T>, config: &FitConfig) -> Result<MaxEntSurrogate<T>> {
    let n = cond.n();
    let (zero, one) = rayon::join(
        || fit_label(n, cond.dist(Label::Zero), config),
        || fit_label(n, cond.dist(Label::One), config),
    );
    let labels = [zero?, one?];
    let fit_residual = labels[0].residual.max(labels[1].residual);
    Ok(MaxEntSurrogate {
        n,
        algorithm: config.algorithm,
        labels,
        fit_residual,
    })
}

/// Fits the surrogate to the empirical label-conditionals of `counts`.
pub fn fit_surrogate(counts: &LabeledCounts, config: &FitConfig) -> Result<MaxEntSurrogate<f64>> {
    fit_surrogate_exact(&Conditionals::<f64>::from_counts(counts)?, config)
}

/// Exact lattice decomposition of the surrogate's joint over `(Y, X)`.
pub fn surrogate_decomposition<T: Real>(
    surrogate: &MaxEntSurrogate<T>,
    prior: [T; 2],
) -> Result<LatticeDecomposition<T>> {
    Ok(decompose_exact(&surrogate.conditionals()?, prior))
}

/// `Σ_x max_y prior(y) p(x | y)`.
pub fn bayes_accuracy<T: Field>(zero: &[T], one: &[T], prior: [T; 2]) -> T {
    zero.iter().zip(one).fold(T::zero(), |acc, (&a, &b)| {
        let (u, v) = (prior[0] * a, prior[1] * b);
        acc + if u >= v { u } else { v }
    })
}
