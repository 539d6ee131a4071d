use super::{ParamId, ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one group of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub t: u64,
    params: Vec<ParamId>,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, params: Vec<ParamId>, config: AdamConfig) -> Self {
        let m = params
            .iter()
            .map(|&id| Tensor::zeros(store.get(id).value.shape()))
            .collect();
        let v = params
            .iter()
            .map(|&id| Tensor::zeros(store.get(id).value.shape()))
            .collect();
        Self {
            config,
            t: 0,
            params,
            m,
            v,
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }
}

/// Bias-corrected Adam update of every parameter in the group. Gradients
/// are left in place; callers zero them.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, state: &mut AdamState<T>) {
    state.t += 1;
    let c = state.config;
    let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
    let bc1 = T::c(1.0 - c.beta1.powi(state.t as i32));
    let bc2 = T::c(1.0 - c.beta2.powi(state.t as i32));
    let lr = T::c(c.lr);
    let eps = T::c(c.eps);
    for (k, &id) in state.params.iter().enumerate() {
        let p = store.get_mut(id);
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (((w, &g), mi), vi) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * g;
            *vi = b2 * *vi + (T::one() - b2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w = *w - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("p", Tensor::scalar(1.0)).unwrap();
        store.get_mut(id).grad = Tensor::scalar(1.0);
        let mut st = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.1));
        adam_step(&mut store, &mut st);
        // m = 0.1, v = 0.001; mhat = 0.1 / 0.1 = 1, vhat = 0.001 / 0.001 = 1
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((store.get(id).value.item() - expected).abs() < 1e-12);
        assert_eq!(st.t, 1);
        assert_eq!(store.get(id).grad.item(), 1.0, "grads untouched");
    }

    #[test]
    fn hand_computed_second_step() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("p", Tensor::scalar(0.5)).unwrap();
        let mut st = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.01));
        let mut w = 0.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 2.0), (2, -1.0), (3, 0.5)] {
            store.get_mut(id).grad = Tensor::scalar(g);
            adam_step(&mut store, &mut st);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t));
            let vhat = v / (1.0 - 0.999f64.powi(t));
            w -= 0.01 * mhat / (vhat.sqrt() + 1e-8);
            assert!((store.get(id).value.item() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("p", Tensor::scalar(0.3)).unwrap();
        let mut st = AdamState::new(&store, vec![id], AdamConfig::with_lr(0.1));
        adam_step(&mut store, &mut st);
        assert_eq!(store.get(id).value.item(), 0.3);
    }

    #[test]
    fn groups_update_independently() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("a", Tensor::scalar(1.0)).unwrap();
        let b = store.add("b", Tensor::scalar(1.0)).unwrap();
        store.get_mut(a).grad = Tensor::scalar(1.0);
        store.get_mut(b).grad = Tensor::scalar(1.0);
        let mut sa = AdamState::new(&store, vec![a], AdamConfig::with_lr(0.1));
        let mut sb = AdamState::new(&store, vec![b], AdamConfig::with_lr(0.1));
        adam_step(&mut store, &mut sa);
        assert_eq!(store.get(b).value.item(), 1.0);
        adam_step(&mut store, &mut sb);
        assert_eq!(store.get(a).value.item(), store.get(b).value.item());
    }
}
