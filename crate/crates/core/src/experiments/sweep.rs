//! Closed-form size and cost sweep; no model is allocated.

use serde::{Deserialize, Serialize};

use super::{ModelSection, Report, Table};
use crate::error::{Error, Result};
use crate::models::{closed_form_counts, flop_count, ModelKind};

fn default_orders() -> Vec<usize> {
    vec![3, 4, 5]
}
fn default_dims() -> Vec<usize> {
    vec![10, 20, 40, 80]
}
fn default_alphas() -> Vec<f64> {
    vec![0.5]
}
fn default_batch() -> usize {
    1
}

/// Config of `param-sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSweepConfig {
    /// Batch-tensor orders (batch mode included).
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Batch size used for the FLOP column.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// `alpha` inside this section is ignored in favour of `alphas`.
    #[serde(default)]
    pub model: ModelSection,
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "order",
    "dim",
    "alpha",
    "model",
    "param_count",
    "bias_count",
    "weight_count",
    "flops",
    "input_features",
    "latent_features",
    "weights_vs_ma_ntae",
];

/// Parameter and FLOP counts for every (order, dim, alpha, model).
///
/// `weights_vs_ma_ntae` divides a model's bias-free size by that of the
/// mode-aware model on the same shape.
pub fn param_sweep(cfg: &ParamSweepConfig) -> Result<Report> {
    if cfg.orders.is_empty() || cfg.dims.is_empty() || cfg.alphas.is_empty() || cfg.batch == 0 {
        return Err(Error::Config(
            "orders, dims and alphas must be non-empty and batch positive".into(),
        ));
    }
    if cfg.orders.contains(&0) || cfg.orders.contains(&1) {
        return Err(Error::Config("orders must be at least 2".into()));
    }
    let mut t = Table::new("param_sweep", &SWEEP_COLUMNS);
    for &order in &cfg.orders {
        for &dim in &cfg.dims {
            for &alpha in &cfg.alphas {
                let shape = vec![dim; order - 1];
                let plan = cfg.model.plan(&shape, alpha)?;
                let mut input = vec![cfg.batch];
                input.extend(&shape);
                let reference = closed_form_counts(ModelKind::MaNtae, &shape, &plan)?.weights();
                let latent: usize = plan.latent_sample_shape(&shape).iter().product();
                for &kind in &cfg.model.kinds {
                    let c = closed_form_counts(kind, &shape, &plan)?;
                    t.push(vec![
                        order.into(),
                        dim.into(),
                        alpha.into(),
                        kind.name().into(),
                        c.total.into(),
                        c.biases.into(),
                        c.weights().into(),
                        flop_count(kind, &input, &plan)?.into(),
                        shape.iter().product::<usize>().into(),
                        latent.into(),
                        (c.weights() as f64 / reference as f64).into(),
                    ]);
                }
            }
        }
    }
    let mut report = Report::new("param-sweep", cfg)?;
    report.tables.push(t);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::parse_config;

    #[test]
    fn grid_size_and_known_row() {
        let cfg: ParamSweepConfig = parse_config("orders = [3]\ndims = [20]\n").unwrap();
        let r = param_sweep(&cfg).unwrap();
        let t = &r.tables[0];
        assert_eq!(t.rows.len(), 3);
        let mantae = &t.rows[0];
        assert_eq!(mantae[t.col("weight_count")], 1000);
        assert_eq!(mantae[t.col("latent_features")], 25);
        assert_eq!(mantae[t.col("weights_vs_ma_ntae")], 1.0);
        let dae = &t.rows[2];
        assert_eq!(dae[t.col("param_count")], 85_625);
    }

    #[test]
    fn large_shapes_need_no_memory() {
        let cfg: ParamSweepConfig = parse_config("orders = [5]\ndims = [100]\nbatch = 512\n").unwrap();
        let r = param_sweep(&cfg).unwrap();
        let t = &r.tables[0];
        let dae_w = t.rows[2][t.col("weight_count")].as_u64().unwrap();
        assert!(dae_w > 10_u64.pow(15));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(param_sweep(&parse_config("orders = []\n").unwrap()).is_err());
        assert!(param_sweep(&parse_config("orders = [1]\n").unwrap()).is_err());
        assert!(parse_config::<ParamSweepConfig>("dimz = [3]\n").is_err());
    }
}
