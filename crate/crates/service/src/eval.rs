//! Offline leave-one-out evaluation of the collaborative filter.

use fmgc_core::grouprec::recommend_next_item;
use fmgc_core::{predict_rating, Error, InteractionMatrix, ItemKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean absolute error over predictable held-out cells; `None` when no
    /// cell could be predicted.
    pub mae: Option<f64>,
    /// Fraction of held-out cells that were predictable.
    pub coverage: f64,
    /// Next-item hit rate; order data only, and only when some member has
    /// at least two ranked items.
    pub precision_at_1: Option<f64>,
}

/// Hides each rating in turn and predicts it from the rest.
///
/// For order data, also hides each member's rank-1 item and checks whether
/// the single-member recommendation names it.
pub fn eval_loo(m: &InteractionMatrix, k: usize) -> Result<EvalResult, Error> {
    if m.members().len() < 2 {
        return Err(Error::MatrixTooSmall { needed: 2, got: m.members().len() });
    }
    let mut cells: Vec<(String, String, f64)> =
        m.cells().map(|(u, i, r)| (u.to_string(), i.to_string(), r)).collect();
    cells.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));

    let mut errors = Vec::new();
    for (u, item, truth) in &cells {
        if let Some(p) = predict_rating(u, item, &m.without(u, item), k)? {
            errors.push((p - truth).abs());
        }
    }
    let mae = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    let coverage = if cells.is_empty() { 0.0 } else { errors.len() as f64 / cells.len() as f64 };

    let precision_at_1 = match m.kind() {
        ItemKind::FeatureChoice => None,
        ItemKind::ConstraintOrder => {
            let mut members: Vec<&str> = m.members().iter().map(|u| u.as_str()).collect();
            members.sort_unstable();
            let (mut hits, mut eligible) = (0usize, 0usize);
            for u in members {
                let Some(row) = m.ratings_of(u) else { continue };
                if row.len() < 2 {
                    continue;
                }
                eligible += 1;
                let first = row
                    .iter()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(item, _)| item.clone())
                    .expect("row has items");
                if recommend_next_item(u, &m.without(u, &first), k)?.as_deref() == Some(first.as_str()) {
                    hits += 1;
                }
            }
            (eligible > 0).then(|| hits as f64 / eligible as f64)
        }
    };
    Ok(EvalResult { mae, coverage, precision_at_1 })
}
