use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate >= 0.0)
            || !in_unit(self.beta1)
            || !in_unit(self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid optimizer settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state over a fixed list of parameter groups.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    /// `group_sizes` fixes the shape of every parameter group this state
    /// will ever update.
    pub fn new(config: AdamConfig, group_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    /// State shaped for an MLP: one group per weight matrix and bias vector.
    pub fn for_mlp(config: AdamConfig, mlp: &Mlp) -> Result<Self> {
        let sizes: Vec<usize> = mlp
            .layers()
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self::new(config, &sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} groups, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(Error::Shape(format!(
                    "parameter group {k} has the wrong length"
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, mlp: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if grads.layers.len() != mlp.layers().len() {
            return Err(Error::Shape(
                "gradient layer count differs from network".into(),
            ));
        }
        let mut params: Vec<&mut [f64]> = Vec::new();
        for l in mlp.layers_mut() {
            params.push(l.weights.as_slice_mut().expect("weights are contiguous"));
            params.push(l.bias.as_slice_mut().expect("bias is contiguous"));
        }
        let mut g: Vec<&[f64]> = Vec::new();
        for l in &grads.layers {
            g.push(
                l.weights
                    .as_slice()
                    .ok_or_else(|| Error::Shape("non-contiguous gradient".into()))?,
            );
            g.push(
                l.bias
                    .as_slice()
                    .ok_or_else(|| Error::Shape("non-contiguous gradient".into()))?,
            );
        }
        self.step(&mut params, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut mlp = Mlp::init(&[3, 4, 2], Activation::Relu, 3).unwrap();
        let before = mlp.clone();
        let mut adam = Adam::for_mlp(AdamConfig::default(), &mlp).unwrap();
        let grads = MlpGrads::zeros_like(&mlp);
        adam.step_mlp(&mut mlp, &grads).unwrap();
        assert_eq!(mlp, before);
        assert_eq!(adam.step_count(), 1);
        assert!(adam.first_moments().iter().flatten().all(|&m| m == 0.0));
        assert!(adam.second_moments().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1, so the update is lr / (1 + eps)
        let mut adam = Adam::new(AdamConfig::default(), &[1]).unwrap();
        let mut p = [0.5];
        adam.step(&mut [&mut p], &[&[1.0]]).unwrap();
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut adam = Adam::new(AdamConfig::default(), &[1]).unwrap();
        let mut p = [0.0];
        let mut prev = p[0];
        for _ in 0..50 {
            adam.step(&mut [&mut p], &[&[-2.0]]).unwrap();
            assert!(p[0] > prev);
            prev = p[0];
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = [0.0];
        assert!(matches!(
            adam.step(&mut [&mut p], &[&[1.0]]),
            Err(Error::Shape(_))
        ));
    }
}
