//! Central finite-difference gradient checks.

use rand::Rng;

use super::{Graph, NodeId, ParamId, ParamStore, Result, Tensor};

/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// Checks gradients with respect to constant inputs. Returns the largest
/// relative error over every input coordinate.
pub fn check_inputs<F>(inputs: &[Tensor], step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let empty = ParamStore::new();
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new(&empty);
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &ids)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new(&empty);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &ids)?;
    let grads = g.backward(out)?;
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        for i in 0..inputs[k].len() {
            let analytic = grads.get(*id).map_or(0.0, |g| g[i]);
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

/// Checks parameter gradients. `coords` selects `(param, flat index)` pairs;
/// `None` checks every coordinate of every parameter.
pub fn check_params<F>(
    params: &ParamStore,
    step: f64,
    coords: Option<&[(ParamId, usize)]>,
    build: F,
) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(p);
        let out = build(&mut g)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new(params);
    let out = build(&mut g)?;
    let grads = g.backward(out)?;
    let pgrads = g.param_grads(&grads);
    let all: Vec<(ParamId, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = params.ids().flat_map(|id| (0..params.get(id).len()).map(move |i| (id, i))).collect();
            &all
        }
    };
    let mut work = params.clone();
    let mut worst = 0.0f64;
    for &(id, i) in coords {
        let analytic = pgrads.get(id).map_or(0.0, |g| g[i]);
        let orig = work.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + step;
        let plus = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig - step;
        let minus = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        worst = worst.max(relative_error(analytic, (plus - minus) / (2.0 * step)));
    }
    Ok(worst)
}

/// Finite-difference check for a plain function with a hand-written gradient.
pub fn check_fn<F>(x: &[f64], analytic: &[f64], step: f64, f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut work = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        work[i] = x[i] + step;
        let plus = f(&work);
        work[i] = x[i] - step;
        let minus = f(&work);
        work[i] = x[i];
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * step)));
    }
    worst
}
