//! Vose alias method: O(n) construction, O(1) weighted index sampling.

use crate::error::{Error, Result};
use rand::Rng;
use rand_pcg::Pcg64Mcg;

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Build from positive weights; sampling returns index i with probability
    /// w_i / sum(w).
    pub fn build(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("alias table needs at least one weight".into()));
        }
        if weights.len() > u32::MAX as usize {
            return Err(Error::Validation("alias table limited to u32 indices".into()));
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Validation(format!("weight[{i}] = {w} is not positive")));
            }
            total += w;
        }
        let n = weights.len();
        let scale = n as f64 / total;
        let mut prob = vec![0.0; n];
        let mut alias = vec![0u32; n];
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        let mut scaled: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are numerically 1.
        for &i in large.iter().chain(small.iter()) {
            prob[i] = 1.0;
            alias[i] = i as u32;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draw from two uniforms in [0, 1).
    pub fn draw(&self, u1: f64, u2: f64) -> usize {
        let n = self.prob.len();
        let i = ((u1 * n as f64) as usize).min(n - 1);
        if u2 < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    pub fn sample(&self, rng: &mut Pcg64Mcg) -> usize {
        self.draw(rng.gen::<f64>(), rng.gen::<f64>())
    }

    /// Reconstruct the probability each index is drawn with. Exact inverse of
    /// the construction up to float rounding; used to verify the table.
    pub fn implied_probabilities(&self) -> Vec<f64> {
        let n = self.prob.len();
        let mut p = vec![0.0; n];
        for i in 0..n {
            p[i] += self.prob[i] / n as f64;
            p[self.alias[i] as usize] += (1.0 - self.prob[i]) / n as f64;
        }
        p
    }
}
