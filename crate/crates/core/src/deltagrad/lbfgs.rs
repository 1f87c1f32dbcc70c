use std::collections::VecDeque;

use crate::error::{ChefError, Result};
use crate::linalg::{dot, norm};

/// Curvature pairs `(dw, dg)` with `dw^T dg` below this fraction of
/// `|dw| |dg|` are skipped.
pub const CURVATURE_EPS: f64 = 1e-12;

/// The last `m0` accepted curvature pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsHistory {
    pub m0: usize,
    pub dw: VecDeque<Vec<f64>>,
    pub dg: VecDeque<Vec<f64>>,
    pub pushes: usize,
    pub rejected: usize,
}

impl LbfgsHistory {
    pub fn new(m0: usize) -> Self {
        LbfgsHistory {
            m0: m0.max(1),
            dw: VecDeque::new(),
            dg: VecDeque::new(),
            pushes: 0,
            rejected: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    /// Returns whether the pair was kept.
    pub fn push(&mut self, dw: Vec<f64>, dg: Vec<f64>) -> bool {
        self.pushes += 1;
        let curvature = dot(&dw, &dg);
        if !(curvature > CURVATURE_EPS * norm(&dw) * norm(&dg)) {
            self.rejected += 1;
            return false;
        }
        if self.dw.len() == self.m0 {
            self.dw.pop_front();
            self.dg.pop_front();
        }
        self.dw.push_back(dw);
        self.dg.push_back(dg);
        true
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.pushes == 0 {
            0.0
        } else {
            self.rejected as f64 / self.pushes as f64
        }
    }
}

/// Quasi-Hessian product `B v`, where `B` is the BFGS update of `sigma I`
/// through every stored pair, `sigma = dg^T dw / dw^T dw` of the newest pair.
pub fn lbfgs_product(history: &LbfgsHistory, v: &[f64]) -> Result<Vec<f64>> {
    let (s_last, y_last) = match (history.dw.back(), history.dg.back()) {
        (Some(s), Some(y)) => (s, y),
        _ => return Err(ChefError::History),
    };
    let sigma = dot(y_last, s_last) / dot(s_last, s_last);
    // b_i = B_i s_i, built up pair by pair; B_i is the update through pairs < i
    let mut bs: Vec<Vec<f64>> = Vec::with_capacity(history.len());
    let mut sbs: Vec<f64> = Vec::with_capacity(history.len());
    let apply = |bs: &[Vec<f64>], sbs: &[f64], u: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = u.iter().map(|x| sigma * x).collect();
        for (i, (b, sb)) in bs.iter().zip(sbs).enumerate() {
            let y = &history.dg[i];
            let s = &history.dw[i];
            let cb = -dot(b, u) / sb;
            let cy = dot(y, u) / dot(y, s);
            for ((o, bi), yi) in out.iter_mut().zip(b).zip(y) {
                *o += cb * bi + cy * yi;
            }
        }
        out
    };
    for s in &history.dw {
        let b = apply(&bs, &sbs, s);
        sbs.push(dot(s, &b));
        bs.push(b);
    }
    Ok(apply(&bs, &sbs, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_an_error() {
        assert!(matches!(lbfgs_product(&LbfgsHistory::new(2), &[1.0]), Err(ChefError::History)));
    }

    #[test]
    fn zero_in_zero_out() {
        let mut h = LbfgsHistory::new(2);
        h.push(vec![1.0, 0.5], vec![2.0, 0.3]);
        assert_eq!(lbfgs_product(&h, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_pair_matches_hand_expanded_update() {
        let s = [1.0, 2.0, -1.0];
        let y = [3.0, 1.0, 0.5];
        let mut h = LbfgsHistory::new(3);
        assert!(h.push(s.to_vec(), y.to_vec()));
        let sigma = dot(&y, &s) / dot(&s, &s);
        // B = sigma I - sigma s s^T / s^T s + y y^T / y^T s
        let v = [0.3, -0.7, 2.0];
        let expected: Vec<f64> = (0..3)
            .map(|i| sigma * v[i] - sigma * s[i] * dot(&s, &v) / dot(&s, &s) + y[i] * dot(&y, &v) / dot(&y, &s))
            .collect();
        let got = lbfgs_product(&h, &v).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_curvature_is_rejected() {
        let mut h = LbfgsHistory::new(2);
        assert!(!h.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(h.is_empty());
        assert_eq!(h.rejection_rate(), 1.0);
    }

    #[test]
    fn window_keeps_newest_pairs() {
        let mut h = LbfgsHistory::new(2);
        for k in 1..=3 {
            h.push(vec![k as f64, 0.0], vec![k as f64, 0.0]);
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.dw[0], vec![2.0, 0.0]);
    }
}
