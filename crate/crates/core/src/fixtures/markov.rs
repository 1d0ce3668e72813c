use nalgebra::DMatrix;
use rand::Rng;

use super::hmm::{dirichlet_ones, sample_index};
use crate::error::{PgaError, Result};
use crate::rng;

/// Largest number of history classes (alphabet^order) accepted.
pub const MAX_CONTEXTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSample {
    pub order: usize,
    pub alphabet: usize,
    pub tokens: Vec<usize>,
    /// History class of each position t ≥ order − 1: the last `order` tokens
    /// read as a base-`alphabet` number. Entry i belongs to position order − 1 + i.
    pub context_ids: Vec<usize>,
    /// alphabet^order × alphabet next-token table, one Dirichlet(1) row per history.
    pub table: DMatrix<f64>,
}

impl MarkovSample {
    /// Next-token distribution after each labelled position (the causal state).
    pub fn beliefs(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.context_ids.len(), self.alphabet);
        for (i, &c) in self.context_ids.iter().enumerate() {
            out.row_mut(i).copy_from(&self.table.row(c));
        }
        out
    }

    pub fn distinct_contexts(&self) -> usize {
        let mut ids = self.context_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

pub fn gen_markov(order: usize, alphabet: usize, length: usize, seed: u64) -> Result<MarkovSample> {
    if !(1..=3).contains(&order) {
        return Err(PgaError::invalid(format!("Markov order must be 1, 2 or 3, found {order}")));
    }
    if alphabet < 2 {
        return Err(PgaError::invalid("Markov alphabet needs at least 2 symbols"));
    }
    let contexts = alphabet
        .checked_pow(order as u32)
        .filter(|&c| c <= MAX_CONTEXTS)
        .ok_or_else(|| {
            PgaError::invalid(format!(
                "alphabet^order exceeds {MAX_CONTEXTS} history classes"
            ))
        })?;
    let mut g = rng::seeded(seed);
    let mut table = DMatrix::zeros(contexts, alphabet);
    for c in 0..contexts {
        let row = dirichlet_ones(&mut g, alphabet);
        for (j, p) in row.into_iter().enumerate() {
            table[(c, j)] = p;
        }
    }
    gen_markov_with_table(order, table, length, seed)
}

/// Samples a sequence from a given alphabet^order × alphabet table.
pub fn gen_markov_with_table(
    order: usize,
    table: DMatrix<f64>,
    length: usize,
    seed: u64,
) -> Result<MarkovSample> {
    let alphabet = table.ncols();
    if order == 0 || alphabet.checked_pow(order as u32) != Some(table.nrows()) {
        return Err(PgaError::invalid("Markov table shape does not match alphabet^order"));
    }
    for (i, r) in table.row_iter().enumerate() {
        if r.iter().any(|&p| !(p >= 0.0)) || (r.sum() - 1.0).abs() > 1e-9 {
            return Err(PgaError::invalid(format!("Markov table row {i} is not a distribution")));
        }
    }
    if length < order {
        return Err(PgaError::invalid("sequence shorter than the Markov order"));
    }
    // the sequence stream is separate from the table stream
    let mut g = rng::seeded(seed ^ 0x6d61_726b_6f76);
    let mut tokens: Vec<usize> = (0..order).map(|_| g.random_range(0..alphabet)).collect();
    let class = |window: &[usize]| window.iter().fold(0, |acc, &t| acc * alphabet + t);
    let mut context_ids = vec![class(&tokens)];
    let mut row = vec![0.0; alphabet];
    while tokens.len() < length {
        let c = *context_ids.last().expect("non-empty");
        for (j, r) in row.iter_mut().enumerate() {
            *r = table[(c, j)];
        }
        tokens.push(sample_index(&mut g, &row));
        context_ids.push(class(&tokens[tokens.len() - order..]));
    }
    Ok(MarkovSample {
        order,
        alphabet,
        tokens,
        context_ids,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_one_binary_frequencies() {
        let s = gen_markov_with_table(1, DMatrix::from_element(2, 2, 0.5), 20_000, 4).unwrap();
        let ones = s.tokens.iter().filter(|&&t| t == 1).count() as f64 / 20_000.0;
        assert!((ones - 0.5).abs() < 0.02);
    }

    #[test]
    fn context_classes() {
        let s = gen_markov(1, 4, 2000, 1).unwrap();
        assert_eq!(s.distinct_contexts(), 4);
        assert_eq!(s.context_ids.len(), 2000);
        assert_eq!(s.context_ids[5], s.tokens[5]);
        let s2 = gen_markov(2, 3, 500, 1).unwrap();
        assert_eq!(s2.context_ids.len(), 499);
        assert_eq!(s2.context_ids[0], s2.tokens[0] * 3 + s2.tokens[1]);
    }

    #[test]
    fn deterministic_and_rows_stochastic() {
        let a = gen_markov(3, 3, 400, 8).unwrap();
        assert_eq!(a, gen_markov(3, 3, 400, 8).unwrap());
        for r in a.table.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn limits() {
        assert!(gen_markov(4, 2, 10, 0).is_err());
        assert!(gen_markov(3, 101, 10, 0).is_err());
        assert!(gen_markov_with_table(2, DMatrix::from_element(3, 3, 1.0 / 3.0), 10, 0).is_err());
    }
}
