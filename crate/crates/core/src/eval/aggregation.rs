//! Memory rows versus max/mean pooling of per-section hidden states.

use super::{probe_split, SvmConfig};
use crate::error::{contract_err, shape_err, Result};
use crate::model::{pooled_feature, HyperParams, MemoryBank, PoolKind, ShapeViews, VipGanParams};
use crate::tensor::Real;

pub const AGGREGATION_COLUMNS: [&str; 5] = [
    "MaxP (non-trainable F)",
    "MeanP (non-trainable F)",
    "MaxP (trainable F)",
    "MeanP (trainable F)",
    "Ours",
];

/// Trained networks with their memory bank.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub params: VipGanParams<T>,
    pub memory: MemoryBank<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationRow {
    pub method: String,
    pub instance_acc: f64,
    pub class_acc: f64,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Evaluates the five feature variants with the linear probe.
///
/// `zero_memory` was trained with frozen all-zero memory rows; pooling from
/// it forms the non-trainable columns. `trainable` supplies both the
/// trainable pooling columns and the memory rows themselves.
pub fn compare_aggregation<T: Real>(
    zero_memory: &TrainedModel<T>,
    trainable: &TrainedModel<T>,
    data: &[ShapeViews<T>],
    labels: &[usize],
    is_train: &[bool],
    hp: &HyperParams,
    cfg: &SvmConfig,
) -> Result<Vec<AggregationRow>> {
    for m in [zero_memory, trainable] {
        if m.params.steps == 0 {
            return Err(contract_err!("pooling comparison needs trained networks"));
        }
        if m.memory.shapes() != data.len() {
            return Err(shape_err!("memory has {} rows for {} shapes", m.memory.shapes(), data.len()));
        }
    }
    let mut rows = Vec::with_capacity(5);
    let variants = [
        (zero_memory, PoolKind::Max, false),
        (zero_memory, PoolKind::Mean, false),
        (trainable, PoolKind::Max, true),
        (trainable, PoolKind::Mean, true),
    ];
    for (col, (model, kind, use_rows)) in variants.into_iter().enumerate() {
        let feats = data
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let row = use_rows.then(|| model.memory.row(i));
                pooled_feature(&model.params, row, shape, hp, kind).map(|f| to_f64(&f))
            })
            .collect::<Result<Vec<_>>>()?;
        let (inst, class) = probe_split(&feats, labels, is_train, cfg)?;
        rows.push(AggregationRow { method: AGGREGATION_COLUMNS[col].into(), instance_acc: inst, class_acc: class });
    }
    let ours: Vec<Vec<f64>> = (0..data.len()).map(|i| to_f64(trainable.memory.row(i))).collect();
    let (inst, class) = probe_split(&ours, labels, is_train, cfg)?;
    rows.push(AggregationRow { method: AGGREGATION_COLUMNS[4].into(), instance_acc: inst, class_acc: class });
    Ok(rows)
}
