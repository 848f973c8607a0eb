use ndarray::Array2;

use super::{AttentionStack, ComboTag, Lama, Lava, Order, Reduce};

/// Reduces all `(layer, head)` matrices of a stack to one `n x n` LAMA.
///
/// `hl` collapses the head axis with `step1` inside each layer and then the
/// resulting per-layer matrices with `step2`; `lh` swaps the axes. Any
/// `step3` on the tag is ignored.
pub fn aggregate_lama(stack: &AttentionStack, combo: ComboTag) -> Lama {
    let tensor = stack.tensor();
    let (layers, heads, n, _) = tensor.dim();
    let (outer, inner) = match combo.order {
        Order::HeadsFirst => (layers, heads),
        Order::LayersFirst => (heads, layers),
    };
    let entry = |o: usize, k: usize, i: usize, j: usize| -> f64 {
        match combo.order {
            Order::HeadsFirst => f64::from(tensor[[o, k, i, j]]),
            Order::LayersFirst => f64::from(tensor[[k, o, i, j]]),
        }
    };
    let mut matrix = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc2 = 0.0;
            for o in 0..outer {
                let mut acc1 = entry(o, 0, i, j);
                for k in 1..inner {
                    acc1 = combo.step1.combine(acc1, entry(o, k, i, j));
                }
                acc2 = if o == 0 {
                    acc1
                } else {
                    combo.step2.combine(acc2, acc1)
                };
            }
            matrix[[i, j]] = acc2;
        }
    }
    Lama {
        sample_id: stack.sample_id().to_string(),
        combo: combo.lama_part(),
        matrix,
    }
}

/// Reduces each LAMA row to a single value: its maximum or its sum.
pub fn aggregate_lava(lama: &Lama, step3: Reduce) -> Lava {
    let vector = lama
        .matrix
        .rows()
        .into_iter()
        .map(|row| match step3 {
            Reduce::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Reduce::Sum => row.iter().sum(),
        })
        .collect();
    Lava {
        sample_id: lama.sample_id.clone(),
        combo: lama.combo.with_step3(step3),
        vector,
    }
}
