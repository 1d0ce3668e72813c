use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{PgaError, Result};
use crate::rng::{self, SeededRng};

const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSpec {
    pub n_states: usize,
    /// Row-stochastic n_states × n_states.
    pub transition: Vec<Vec<f64>>,
    /// Row-stochastic n_states × alphabet.
    pub emission: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(PgaError::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(PgaError::invalid(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

pub(crate) fn dirichlet_ones(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut v: Vec<f64> = (0..len).map(|_| g.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub(crate) fn sample_index(rng: &mut SeededRng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off left u above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl HmmSpec {
    pub fn alphabet(&self) -> usize {
        self.emission.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n == 0 {
            return Err(PgaError::invalid("an HMM needs at least one state"));
        }
        if self.transition.len() != n || self.emission.len() != n || self.initial.len() != n {
            return Err(PgaError::invalid("HMM tables disagree on the number of states"));
        }
        let alphabet = self.alphabet();
        if alphabet == 0 {
            return Err(PgaError::invalid("HMM alphabet is empty"));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(PgaError::invalid(format!("transition row {i} has wrong length")));
            }
            check_distribution(row, &format!("transition row {i}"))?;
        }
        for (i, row) in self.emission.iter().enumerate() {
            if row.len() != alphabet {
                return Err(PgaError::invalid(format!("emission row {i} has wrong length")));
            }
            check_distribution(row, &format!("emission row {i}"))?;
        }
        check_distribution(&self.initial, "initial distribution")
    }

    /// State i moves to i+1 mod n and emits symbol i.
    pub fn cycle(n: usize) -> Self {
        let eye = |shift: usize| {
            (0..n)
                .map(|i| (0..n).map(|j| if j == (i + shift) % n { 1.0 } else { 0.0 }).collect())
                .collect()
        };
        HmmSpec {
            n_states: n,
            transition: eye(1),
            emission: eye(0),
            initial: vec![1.0 / n as f64; n],
        }
    }

    /// Two states that stay put with probability `stay` and emit their own
    /// symbol with probability `fidelity`.
    pub fn symmetric_two_state(stay: f64, fidelity: f64) -> Self {
        HmmSpec {
            n_states: 2,
            transition: vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]],
            emission: vec![vec![fidelity, 1.0 - fidelity], vec![1.0 - fidelity, fidelity]],
            initial: vec![0.5, 0.5],
        }
    }

    /// Sticky transitions (self-loop mass `stay`, the rest Dirichlet(1)) and
    /// Dirichlet(1) emissions over `alphabet` symbols.
    pub fn random(n_states: usize, alphabet: usize, stay: f64, seed: u64) -> Self {
        let mut g = rng::seeded(seed);
        let transition = (0..n_states)
            .map(|i| {
                let rest = dirichlet_ones(&mut g, n_states);
                (0..n_states)
                    .map(|j| (1.0 - stay) * rest[j] + if i == j { stay } else { 0.0 })
                    .collect()
            })
            .collect();
        let emission = (0..n_states).map(|_| dirichlet_ones(&mut g, alphabet)).collect();
        HmmSpec {
            n_states,
            transition,
            emission,
            initial: vec![1.0 / n_states as f64; n_states],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmSample {
    pub tokens: Vec<usize>,
    pub hidden_path: Vec<usize>,
    /// length × n_states posterior over the current state after each token.
    pub beliefs: DMatrix<f64>,
}

pub fn gen_hmm(spec: &HmmSpec, length: usize, seed: u64) -> Result<HmmSample> {
    spec.validate()?;
    let n = spec.n_states;
    let mut g = rng::seeded(seed);
    let mut tokens = Vec::with_capacity(length);
    let mut hidden_path = Vec::with_capacity(length);
    let mut beliefs = DMatrix::zeros(length, n);
    let mut state = sample_index(&mut g, &spec.initial);
    let mut prior = spec.initial.clone();
    for t in 0..length {
        if t > 0 {
            state = sample_index(&mut g, &spec.transition[state]);
        }
        let x = sample_index(&mut g, &spec.emission[state]);
        hidden_path.push(state);
        tokens.push(x);
        let mut post: Vec<f64> = (0..n).map(|s| prior[s] * spec.emission[s][x]).collect();
        let z: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= z);
        for s in 0..n {
            beliefs[(t, s)] = post[s];
        }
        prior = (0..n)
            .map(|j| (0..n).map(|i| post[i] * spec.transition[i][j]).sum())
            .collect();
    }
    Ok(HmmSample {
        tokens,
        hidden_path,
        beliefs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_is_fully_observed() {
        let s = gen_hmm(&HmmSpec::cycle(4), 50, 1).unwrap();
        assert_eq!(s.tokens, s.hidden_path);
        for t in 0..50 {
            assert_eq!(s.beliefs[(t, s.hidden_path[t])], 1.0);
        }
        for w in s.hidden_path.windows(2) {
            assert_eq!(w[1], (w[0] + 1) % 4);
        }
    }

    #[test]
    fn symmetric_two_state_frequencies() {
        let s = gen_hmm(&HmmSpec::symmetric_two_state(0.7, 0.8), 40_000, 3).unwrap();
        let ones = s.hidden_path.iter().filter(|&&h| h == 1).count() as f64 / 40_000.0;
        assert!((ones - 0.5).abs() < 0.02, "{ones}");
    }

    #[test]
    fn beliefs_are_distributions_and_deterministic() {
        let spec = HmmSpec::random(5, 6, 0.6, 9);
        spec.validate().unwrap();
        let a = gen_hmm(&spec, 300, 2).unwrap();
        assert_eq!(a, gen_hmm(&spec, 300, 2).unwrap());
        for row in a.beliefs.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = HmmSpec::cycle(3);
        spec.transition[0][0] = 0.5;
        assert!(gen_hmm(&spec, 10, 0).is_err());
    }
}
