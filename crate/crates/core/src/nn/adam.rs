use super::LayerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

/// Adam with bias correction. Moments are kept per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u32,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[LayerParams]) -> Self {
        let shapes: Vec<usize> = params.iter().flat_map(|p| [p.weights.len(), p.bias.len()]).collect();
        Adam {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [LayerParams], grads: &[LayerParams]) {
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let correction1 = 1.0 - c.beta1.powi(t);
        let correction2 = 1.0 - c.beta2.powi(t);
        let tensors = params.iter_mut().flat_map(|p| [&mut p.weights, &mut p.bias]);
        let grad_tensors = grads.iter().flat_map(|g| [&g.weights, &g.bias]);
        for (((p, g), m), v) in tensors.zip(grad_tensors).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
    }
}
