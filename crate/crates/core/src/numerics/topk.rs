use std::cmp::Ordering;

use super::ShapeError;

/// Indices of the `k` largest-magnitude entries of `v`, in ascending index order.
///
/// Equal magnitudes are ranked by lower index first. Selection is done with
/// a linear-time partial partition rather than a full sort.
pub fn top_k_indices(v: &[f64], k: usize) -> Result<Vec<usize>, ShapeError> {
    if k == 0 || k > v.len() {
        return Err(ShapeError::InvalidK { k, len: v.len() });
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    if k < v.len() {
        let rank = |a: &usize, b: &usize| -> Ordering {
            v[*b].abs().total_cmp(&v[*a].abs()).then_with(|| a.cmp(b))
        };
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
        idx.sort_unstable();
    }
    Ok(idx)
}
