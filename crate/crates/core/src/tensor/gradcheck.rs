use rand::seq::index::sample;

use super::{Graph, NodeId, ParamId, ParamStore, Scalar};
use crate::error::Result;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// (parameter name, max relative error, coordinates checked)
    pub per_param: Vec<(String, f64, usize)>,
}

impl GradCheckReport {
    pub fn coordinates_checked(&self) -> usize {
        self.per_param.iter().map(|p| p.2).sum()
    }
}

/// Compares analytic gradients against central differences
/// (f(x+h) − f(x−h)) / 2h on up to `max_coords` randomly chosen
/// coordinates per parameter. The relative error of a coordinate is
/// |a − n| / max(|a|, |n|, 1e-8).
///
/// `f` rebuilds the scalar loss from the current parameter values.
pub fn grad_check<T, F>(
    store: &mut ParamStore<T>,
    params: &[ParamId],
    h: f64,
    max_coords: usize,
    seed: u64,
    mut f: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> Result<(Graph<T>, NodeId)>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    store.zero_grads();
    let (g, loss) = f(store)?;
    g.backward(loss, store)?;
    drop(g);

    let mut rng = seed::rng(seed, "gradcheck");
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        per_param: Vec::new(),
    };
    let step = T::c(h);
    let two_h = 2.0 * h;

    for &id in params {
        let n = store.get(id).value.numel();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst = 0.0f64;
        for &k in &coords {
            let analytic = store.get(id).grad.data()[k].as_f64();
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + step;
            let (gp, lp) = f(store)?;
            let fp = gp.scalar_value(lp).as_f64();
            store.get_mut(id).value.data_mut()[k] = orig - step;
            let (gm, lm) = f(store)?;
            let fm = gm.scalar_value(lm).as_f64();
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (fp - fm) / two_h;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = k;
            }
        }
        report.per_param.push((store.get(id).name.clone(), worst, coords.len()));
    }
    store.zero_grads();
    Ok(report)
}
