use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Bias-corrected Adam (Kingma & Ba). Defaults follow their suggested
/// β1, β2, ε with the learning rate supplied by the caller.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new<'m>(lr: f64, params: impl IntoIterator<Item = &'m Matrix>) -> Self {
        let (first, second): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i]` pairs with `params[i]`; a `None` gradient
    /// is treated as zero.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Option<&Matrix>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "adam tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() {
                return Err(Error::Dimension(format!("parameter {i} changed shape")));
            }
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::Dimension(format!(
                        "gradient {:?} for parameter {i} of shape {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);

        for (i, p) in params.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let pd = p.data_mut();
            match grads[i] {
                Some(g) => {
                    for (((pv, mv), vv), gv) in pd.iter_mut().zip(m).zip(v).zip(g.data()) {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                None => {
                    for ((pv, mv), vv) in pd.iter_mut().zip(m).zip(v) {
                        *mv *= b1;
                        *vv *= b2;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::column(&[1.0, -2.0, 0.5]);
        let g = Matrix::column(&[0.3, 4.0, 1e-3]);
        let mut adam = AdamState::new(4e-4, [&p]);
        adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        // After one step m̂ = g and v̂ = g², so the move is lr·g/(|g|+ε).
        let step = |g: f64| 4e-4 * g / (g.abs() + 1e-8);
        let expect = [1.0 - step(0.3), -2.0 - step(4.0), 0.5 - step(1e-3)];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((p.get(0, 0) - (1.0 - 4e-4)).abs() < 1e-9);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Matrix::column(&[1.0, 2.0]);
        let g = Matrix::zeros(2, 1);
        let mut adam = AdamState::new(0.1, [&p]);
        adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        adam.step(&mut [&mut p], &[None]).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn matches_scalar_recurrence_on_square() {
        // independent hand-rolled recurrence for f(x) = x^2
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }

        let mut p = Matrix::scalar(1.0);
        let mut adam = AdamState::new(0.1, [&p]);
        for e in expected {
            let g = Matrix::scalar(2.0 * p.data()[0]);
            adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
            assert!((p.data()[0] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Matrix::column(&[1.0, 2.0]);
        let g = Matrix::zeros(3, 1);
        let mut adam = AdamState::new(0.1, [&p]);
        assert!(adam.step(&mut [&mut p], &[Some(&g)]).is_err());
        assert_eq!(adam.step_count(), 0);
    }
}
