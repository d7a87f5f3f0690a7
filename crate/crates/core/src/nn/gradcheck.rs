//! Central finite-difference checks for graph-built scalar functions.

use super::{Graph, NnError, ParamStore, Tensor, Var};

/// Error between an analytic and a numeric derivative, relative to the larger
/// magnitude but never to less than `floor` (avoids dividing by near-zero
/// derivatives whose absolute error is at round-off level).
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Checks d f / d inputs, where `f` records a scalar on a fresh graph from leaves
/// holding `inputs`.
pub fn check_inputs<F>(inputs: &[Tensor], step: f64, floor: f64, f: F) -> Result<CheckReport, NnError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NnError>,
{
    let eval = |xs: &[Tensor]| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        Ok(g.value(y).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    g.backward(y)?;
    let mut report = CheckReport { max_rel_err: 0.0, checked: 0 };
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].data.len()]);
        for e in 0..inputs[k].data.len() {
            let x0 = xs[k].data[e];
            xs[k].data[e] = x0 + step;
            let fp = eval(&xs)?;
            xs[k].data[e] = x0 - step;
            let fm = eval(&xs)?;
            xs[k].data[e] = x0;
            let numeric = (fp - fm) / (2.0 * step);
            report.max_rel_err = report.max_rel_err.max(relative_error(analytic[e], numeric, floor));
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Checks d loss / d every trainable parameter of `store`.
pub fn check_params<F>(store: &ParamStore, step: f64, floor: f64, loss: F) -> Result<CheckReport, NnError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, NnError>,
{
    let mut analytic = store.clone();
    let mut g = Graph::new();
    let y = loss(&mut g, &analytic)?;
    g.backward(y)?;
    analytic.zero_grad();
    analytic.accumulate(&g, 1.0);
    let mut work = store.clone();
    let mut report = CheckReport { max_rel_err: 0.0, checked: 0 };
    let eval = |s: &ParamStore| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let y = loss(&mut g, s)?;
        Ok(g.value(y).item())
    };
    for i in 0..store.len() {
        if store.params()[i].frozen {
            continue;
        }
        for e in 0..store.params()[i].value.data.len() {
            let x0 = work.params()[i].value.data[e];
            work.params_mut()[i].value.data[e] = x0 + step;
            let fp = eval(&work)?;
            work.params_mut()[i].value.data[e] = x0 - step;
            let fm = eval(&work)?;
            work.params_mut()[i].value.data[e] = x0;
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic.params()[i].grad[e];
            report.max_rel_err = report.max_rel_err.max(relative_error(a, numeric, floor));
            report.checked += 1;
        }
    }
    Ok(report)
}
