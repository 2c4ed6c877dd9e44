//! Adaptive moment estimation over the model's parameter slices.

use crate::par::{self, Execution};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.99;
const EPSILON: f64 = 1e-15;
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub step: u64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[&[f64]]) -> Self {
        Self {
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
            learning_rate: 0.0,
        }
    }

    pub fn update(&mut self, exec: Execution, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, learning_rate: f64) {
        assert_eq!(params.len(), self.first.len(), "parameter layout changed");
        self.step += 1;
        self.learning_rate = learning_rate;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        let step = learning_rate / c1;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            assert_eq!(p.len(), g.len());
            // Elementwise, so chunking cannot change the result.
            let mut items: Vec<(&mut f64, &f64, &mut f64, &mut f64)> = p
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .map(|(((p, g), m), v)| (p, g, m, v))
                .collect();
            par::for_each_chunk_mut(exec, &mut items, CHUNK, |_, chunk| {
                for (p, &g, m, v) in chunk.iter_mut() {
                    **m = BETA1 * **m + (1.0 - BETA1) * g;
                    **v = BETA2 * **v + (1.0 - BETA2) * g * g;
                    **p -= step * **m / ((**v / c2).sqrt() + EPSILON);
                }
            });
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first.iter().chain(&self.second).all(|s| s.iter().all(|v| v.is_finite()))
    }
}
