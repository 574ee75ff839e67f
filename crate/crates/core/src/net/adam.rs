use std::ops::Range;

use super::Real;

/// Adam with bias correction. First and second moments are kept in double
/// precision for every parameter of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One update of the parameters inside `ranges`; everything else is left
    /// untouched.
    pub fn step<T: Real>(&mut self, params: &mut [T], grads: &[T], lr: f64, ranges: &[Range<usize>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), params.len(), "gradient count differs");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let (inv_c1, inv_c2) = (1.0 / c1, 1.0 / c2);
        for r in ranges {
            let moments = self.m[r.clone()].iter_mut().zip(&mut self.v[r.clone()]);
            for ((p, g), (m, v)) in params[r.clone()].iter_mut().zip(&grads[r.clone()]).zip(moments) {
                let g = g.as_f64();
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let step = lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
                *p = T::of(p.as_f64() - step);
            }
        }
    }
}
