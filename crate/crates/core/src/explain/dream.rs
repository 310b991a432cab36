//! DiffeRential Evolution Adaptive Metropolis: chains advance in lock-step,
//! each proposing a jump along differences of other chains' current states.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

const ACCEPTANCE_WINDOW: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DreamConfig {
    pub n_chains: usize,
    pub n_generations: usize,
    /// Leading fraction of generations discarded.
    pub burn_in: f64,
    /// Fixed jump scale; `None` uses `2.38 / sqrt(2 δ d')`.
    pub gamma: Option<f64>,
    /// Chain pairs per difference vector (δ).
    pub delta: usize,
    /// Crossover probabilities, chosen uniformly per proposal.
    pub crossover: Vec<f64>,
    /// Share of proposals using γ = 1 for jumps between modes.
    pub unit_jump_probability: f64,
    /// Half-width of the multiplicative jitter on γ.
    pub jitter: f64,
    /// Standard deviation of the additive proposal noise.
    pub noise: f64,
    /// Keep every `thin`-th retained generation.
    pub thin: usize,
    pub seed: u64,
}

impl Default for DreamConfig {
    fn default() -> Self {
        Self {
            n_chains: 8,
            n_generations: 20_000,
            burn_in: 0.5,
            gamma: None,
            delta: 1,
            crossover: vec![1.0 / 3.0, 2.0 / 3.0, 1.0],
            unit_jump_probability: 0.1,
            jitter: 0.05,
            noise: 1e-6,
            thin: 1,
            seed: 0,
        }
    }
}

impl DreamConfig {
    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("dream: {m}")));
        if self.n_chains < 2 * self.delta + 1 {
            return bad(format!("{} chains cannot form {} difference pairs", self.n_chains, self.delta));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad(format!("burn_in {} outside [0, 1)", self.burn_in));
        }
        if self.crossover.is_empty() || self.crossover.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return bad("crossover probabilities must lie in (0, 1]".into());
        }
        if self.thin == 0 || self.n_generations == 0 || self.delta == 0 {
            return bad("thin, n_generations and delta must be >= 1".into());
        }
        if self.n_chains < 2 * d {
            log::warn!("dream: {} chains for {d} dimensions; at least {} recommended", self.n_chains, 2 * d);
        }
        Ok(())
    }
}

/// Metropolis acceptance probability for a symmetric proposal.
pub fn acceptance_probability(log_p_current: f64, log_p_proposal: f64) -> f64 {
    if log_p_proposal.is_nan() {
        return 0.0;
    }
    (log_p_proposal - log_p_current).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DreamResult {
    /// `chains[c][s]` is the `s`-th retained state of chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub acceptance_rate: f64,
    pub chain_acceptance: Vec<f64>,
    /// Split-R̂ per dimension over the retained samples.
    pub r_hat: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DreamResult {
    pub fn pooled(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flatten()
    }

    pub fn n_samples(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }
}

/// Split-R̂ of one scalar quantity across chains (each chain halved).
pub fn split_r_hat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let n = half as f64;
    let m = parts.len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Runs DREAM from `init` (one starting state per chain). Chain `c` draws
/// from its own stream derived from `(seed, c)`, and every proposal in a
/// generation reads the states from the end of the previous generation.
pub fn dream_sample<F>(log_density: F, init: &[Vec<f64>], cfg: &DreamConfig) -> Result<DreamResult>
where
    F: Fn(&[f64]) -> f64,
{
    let n_chains = init.len();
    if n_chains != cfg.n_chains {
        return Err(Error::Config(format!(
            "dream: {} initial states for {} chains",
            n_chains, cfg.n_chains
        )));
    }
    let d = init[0].len();
    if d == 0 || init.iter().any(|s| s.len() != d) {
        return Err(Error::Config("dream: initial states need one common positive dimension".into()));
    }
    cfg.validate(d)?;
    let mut states: Vec<Vec<f64>> = init.to_vec();
    let mut logp: Vec<f64> = states.iter().map(|s| log_density(s)).collect();
    if logp.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("dream: log density not finite at an initial state".into()));
    }
    let mut rngs: Vec<rng::Rng> = (0..n_chains).map(|c| rng::derived(cfg.seed, &[c as u64])).collect();
    let burn = (cfg.burn_in * cfg.n_generations as f64).floor() as usize;
    let mut chains: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_chains];
    let mut accepted = vec![0usize; n_chains];
    let mut window_accepts = 0usize;
    let mut warnings = Vec::new();
    let mut proposals = vec![vec![0.0; d]; n_chains];
    for gen in 0..cfg.n_generations {
        for c in 0..n_chains {
            let r = &mut rngs[c];
            // distinct partner chains, excluding c
            let mut partners = Vec::with_capacity(2 * cfg.delta);
            while partners.len() < 2 * cfg.delta {
                let k = r.random_range(0..n_chains);
                if k != c && !partners.contains(&k) {
                    partners.push(k);
                }
            }
            let cr = cfg.crossover[r.random_range(0..cfg.crossover.len())];
            let mut dims: Vec<usize> = (0..d).filter(|_| r.random::<f64>() < cr).collect();
            if dims.is_empty() {
                dims.push(r.random_range(0..d));
            }
            let gamma = if r.random::<f64>() < cfg.unit_jump_probability {
                1.0
            } else {
                cfg.gamma.unwrap_or(2.38 / (2.0 * cfg.delta as f64 * dims.len() as f64).sqrt())
            };
            let prop = &mut proposals[c];
            prop.copy_from_slice(&states[c]);
            for &j in &dims {
                let diff: f64 = (0..cfg.delta)
                    .map(|p| states[partners[2 * p]][j] - states[partners[2 * p + 1]][j])
                    .sum();
                let e = r.random_range(-cfg.jitter..=cfg.jitter);
                let eps: f64 = StandardNormal.sample(r);
                prop[j] += (1.0 + e) * gamma * diff + cfg.noise * eps;
            }
        }
        for c in 0..n_chains {
            let lp = log_density(&proposals[c]);
            let u: f64 = rngs[c].random();
            if lp.is_finite() && u < acceptance_probability(logp[c], lp) {
                states[c].copy_from_slice(&proposals[c]);
                logp[c] = lp;
                accepted[c] += 1;
                window_accepts += 1;
            }
        }
        if (gen + 1) % ACCEPTANCE_WINDOW == 0 {
            if window_accepts == 0 {
                let msg = format!(
                    "no proposal accepted in generations {}..{}",
                    gen + 1 - ACCEPTANCE_WINDOW,
                    gen + 1
                );
                log::warn!("dream: {msg}");
                warnings.push(msg);
            }
            window_accepts = 0;
        }
        if gen >= burn && (gen - burn).is_multiple_of(cfg.thin) {
            for c in 0..n_chains {
                chains[c].push(states[c].clone());
            }
        }
    }
    let r_hat = (0..d)
        .map(|j| {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|ch| ch.iter().map(|s| s[j]).collect()).collect();
            split_r_hat(&per_chain)
        })
        .collect();
    let g = cfg.n_generations as f64;
    Ok(DreamResult {
        chains,
        acceptance_rate: accepted.iter().sum::<usize>() as f64 / (g * n_chains as f64),
        chain_acceptance: accepted.iter().map(|&a| a as f64 / g).collect(),
        r_hat,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_is_metropolis_for_symmetric_proposals() {
        assert_eq!(acceptance_probability(-1.0, 0.0), 1.0);
        assert_eq!(acceptance_probability(0.0, 0.0), 1.0);
        assert!((acceptance_probability(0.0, -2.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(0.0, f64::NEG_INFINITY), 0.0);
        assert_eq!(acceptance_probability(0.0, f64::NAN), 0.0);
    }

    #[test]
    fn split_r_hat_of_identical_iid_chains_is_near_one() {
        let mut r = rng::seeded(1);
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..2000).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
        assert!((split_r_hat(&chains) - 1.0).abs() < 0.01);
        let shifted: Vec<Vec<f64>> = chains.iter().enumerate().map(|(i, c)| c.iter().map(|v| v + i as f64).collect()).collect();
        assert!(split_r_hat(&shifted) > 1.5);
    }
}
