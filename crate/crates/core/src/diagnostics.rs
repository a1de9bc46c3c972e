//! Convergence diagnostics: split-R̂ and multi-chain effective sample size
//! (Geyer initial-monotone-sequence truncation).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub mean: f64,
    pub rhat: f64,
    pub ess: f64,
    pub mcse: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Between/within decomposition over `chains` of equal length.
fn between_within(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    let b = if chains.len() > 1 { n * var(&means) } else { 0.0 };
    (b, w)
}

/// Split-R̂: every chain is halved and the classic potential scale
/// reduction computed over the halves. Constant traces report 1, and
/// disagreeing constant traces report infinity.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = len / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[len - half..len]);
    }
    let (b, w) = between_within(&halves);
    let n = half as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn autocovariance(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (xs[i] - m) * (xs[i + lag] - m);
    }
    s / n as f64
}

/// Multi-chain effective sample size. Constant traces report the total
/// number of draws.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if n < 4 {
        return f64::NAN;
    }
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let (b, w) = between_within(&trimmed);
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let means: Vec<f64> = trimmed.iter().map(|c| mean(c)).collect();
    let rho = |lag: usize| -> f64 {
        let acov = trimmed
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

/// Mean, split-R̂, ESS and Monte Carlo standard error of the mean.
pub fn summarize(chains: &[Vec<f64>]) -> Diagnostic {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let mu = mean(&all);
    let e = ess(chains);
    let sd = if all.len() > 1 { var(&all).sqrt() } else { 0.0 };
    Diagnostic {
        mean: mu,
        rhat: split_rhat(chains),
        ess: e,
        mcse: if sd == 0.0 { 0.0 } else { sd / e.sqrt() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_chains_have_rhat_near_one_and_full_ess() {
        let mut rng = RngStream::new(9, 0);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        let e = ess(&chains);
        assert!(e > 6000.0 && e < 10000.0, "ess {e}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // ESS/N = (1 − φ)/(1 + φ) for an AR(1) chain.
        let phi: f64 = 0.9;
        let mut rng = RngStream::new(10, 0);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..50_000)
                    .map(|_| {
                        let e: f64 = rng.sample(StandardNormal);
                        x = phi * x + (1.0 - phi * phi).sqrt() * e;
                        x
                    })
                    .collect()
            })
            .collect();
        let ratio = ess(&chains) / 200_000.0;
        let target = (1.0 - phi) / (1.0 + phi);
        assert!((ratio / target - 1.0).abs() < 0.15, "ratio {ratio} target {target}");
    }

    #[test]
    fn shifted_chains_are_flagged() {
        let mut rng = RngStream::new(11, 0);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|c| (0..1000).map(|_| c as f64 * 3.0 + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        assert!(split_rhat(&chains) > 1.1);
    }

    #[test]
    fn constant_traces() {
        let same = vec![vec![1.0; 100], vec![1.0; 100]];
        assert_eq!(split_rhat(&same), 1.0);
        assert_eq!(ess(&same), 200.0);
        let differ = vec![vec![1.0; 100], vec![0.0; 100]];
        assert!(split_rhat(&differ).is_infinite());
    }
}
