//! Score accumulation and halting for one chunk's request loop.

use serde::{Deserialize, Serialize};

/// Outcome of the request loop for one chunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaltState {
    /// Accumulated score at halting.
    pub c: f64,
    /// Remainder: the weight given to the last requested microphone.
    pub r: f64,
    /// Scores `s_1..s_N`; the last one is forced to 1 when `N = M`.
    pub scores: Vec<f64>,
    /// Microphones requested.
    pub n: usize,
    /// Chunk cost `N + r`.
    pub p: f64,
}

impl HaltState {
    /// Weights applied to `h^(1..N)`: the scores before halting, then `r`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.scores[..self.n - 1].to_vec();
        w.push(self.r);
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Keep streaming; the score is applied as this microphone's weight.
    Continue,
    /// Stop; the remainder is applied as this microphone's weight.
    Halt,
}

/// Incremental halting state, fed one score per requested microphone.
#[derive(Clone, Debug)]
pub struct Halting {
    mics: usize,
    threshold: f64,
    c: f64,
    r: f64,
    p: f64,
    scores: Vec<f64>,
    done: bool,
}

impl Halting {
    pub fn new(mics: usize, eps: f64) -> Self {
        assert!(mics >= 1, "request loop needs at least one microphone");
        Self {
            mics,
            threshold: 1.0 - eps,
            c: 0.0,
            r: 1.0,
            p: 0.0,
            scores: Vec::with_capacity(mics),
            done: false,
        }
    }

    /// Index (1-based) of the microphone the next score belongs to.
    pub fn next_k(&self) -> usize {
        self.scores.len() + 1
    }

    /// True when the next score is overridden to 1.
    pub fn next_is_forced(&self) -> bool {
        self.next_k() == self.mics
    }

    pub fn remainder(&self) -> f64 {
        self.r
    }

    pub fn push(&mut self, score: f64) -> Step {
        assert!(!self.done, "push after halting");
        let s = if self.next_is_forced() { 1.0 } else { score };
        self.scores.push(s);
        self.c += s;
        self.p += 1.0;
        if self.c < self.threshold {
            self.r -= s;
            Step::Continue
        } else {
            self.p += self.r;
            self.done = true;
            Step::Halt
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn finish(self) -> HaltState {
        assert!(self.done, "request loop has not halted");
        HaltState {
            c: self.c,
            r: self.r,
            n: self.scores.len(),
            scores: self.scores,
            p: self.p,
        }
    }
}

/// Runs the halting rule over a full score sequence (one score per
/// microphone; entries after the halting point are ignored).
pub fn halt_on_scores(scores: &[f64], eps: f64) -> HaltState {
    let mut h = Halting::new(scores.len(), eps);
    for &s in scores {
        if h.push(s) == Step::Halt {
            break;
        }
    }
    h.finish()
}

/// Cost of aggregating exactly `k` microphones with uniform weights.
pub fn fixed_k_state(k: usize) -> HaltState {
    let w = 1.0 / k as f64;
    HaltState {
        c: 1.0,
        r: w,
        scores: vec![w; k],
        n: k,
        p: k as f64 + w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn near_one_first_score_halts_immediately() {
        let h = halt_on_scores(&[0.99995, 0.3, 0.3], 1e-4);
        assert_eq!(h.n, 1);
        assert_eq!(h.weights(), vec![1.0]);
        assert_eq!(h.p, 2.0);
    }

    #[test]
    fn step_through_example() {
        let h = halt_on_scores(&[0.6, 0.5, 0.2, 0.1], 1e-4);
        assert_eq!(h.n, 2);
        let w = h.weights();
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
        assert!((h.p - 2.4).abs() < 1e-15);
    }

    #[test]
    fn small_scores_run_to_the_last_microphone() {
        let h = halt_on_scores(&[0.01; 6], 1e-4);
        assert_eq!(h.n, 6);
        assert_eq!(*h.scores.last().unwrap(), 1.0);
        assert!((h.r - 0.95).abs() < 1e-12);
    }

    #[test]
    fn single_microphone_costs_two() {
        let h = halt_on_scores(&[0.2], 1e-4);
        assert_eq!((h.n, h.p), (1, 2.0));
    }

    #[test]
    fn fixed_k_cost() {
        let s = fixed_k_state(4);
        assert_eq!(s.n, 4);
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(scores in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let h = halt_on_scores(&scores, 1e-4);
            let w = h.weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(h.n >= 1 && h.n <= scores.len());
            prop_assert_eq!(h.p, h.n as f64 + h.r);
            prop_assert!(h.p > h.n as f64 && h.p <= h.n as f64 + 1.0);
        }

        #[test]
        fn higher_scores_never_request_more(
            scores in prop::collection::vec(0.0f64..1.0, 1..12),
            bump in 0.0f64..0.5,
        ) {
            let up: Vec<f64> = scores.iter().map(|s| (s + bump).min(1.0)).collect();
            prop_assert!(halt_on_scores(&up, 1e-4).n <= halt_on_scores(&scores, 1e-4).n);
        }
    }
}
