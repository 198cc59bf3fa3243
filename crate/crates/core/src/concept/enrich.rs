use super::{EmbedError, EmbeddingTable};
use crate::kg::{ConceptGraph, ConceptId};

/// Averages each concept with the mean of its parents:
/// `c'_i = ½ (c_i + mean_{p ∈ Par_i} c_p)`.
///
/// Every update reads the original table, so iteration order does not
/// matter. Concepts without parents are copied unchanged.
pub fn enrich_hierarchical(table: &EmbeddingTable, graph: &ConceptGraph) -> Result<EmbeddingTable, EmbedError> {
    let mut out = EmbeddingTable::new(table.dim());
    for (id, v) in table.iter() {
        let enriched = match graph.parents_ref(id) {
            Some(parents) if !parents.is_empty() => {
                let mut mean = vec![0.0; table.dim()];
                for p in parents {
                    let pv = table.get(p).ok_or_else(|| EmbedError::MissingParentVector {
                        child: id.clone(),
                        parent: p.clone(),
                    })?;
                    mean.iter_mut().zip(pv).for_each(|(m, x)| *m += x);
                }
                let n = parents.len() as f64;
                v.iter().zip(&mean).map(|(c, m)| 0.5 * (c + m / n)).collect()
            }
            _ => v.to_vec(),
        };
        out.insert(id.clone(), enriched)?;
    }
    out.set_enriched(true);
    Ok(out)
}

/// L2-normalised sum of the table vectors sharing `c`'s 7-character
/// prefix. `None` when no such vector exists or the sum vanishes.
pub fn compose_from_prefix(table: &EmbeddingTable, graph: &ConceptGraph, c: &ConceptId) -> Option<Vec<f64>> {
    let bucket = graph.prefix_bucket(c.prefix()).ok()?;
    let mut sum = vec![0.0; table.dim()];
    let mut any = false;
    for s in bucket.iter().filter(|s| *s != c) {
        if let Some(v) = table.get(s) {
            sum.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            any = true;
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !any || norm == 0.0 {
        return None;
    }
    Some(sum.into_iter().map(|x| x / norm).collect())
}

/// Embedding for a concept absent from `table`, falling back to
/// `unk_fallback` when no prefix neighbour has a vector.
pub fn compose_unknown(
    table: &EmbeddingTable,
    graph: &ConceptGraph,
    c: &ConceptId,
    unk_fallback: &[f64],
) -> Result<Vec<f64>, EmbedError> {
    if table.contains(c) {
        return Err(EmbedError::AlreadyKnown(c.clone()));
    }
    Ok(compose_from_prefix(table, graph, c).unwrap_or_else(|| unk_fallback.to_vec()))
}
