use crate::error::{Result, UmtsError};
use crate::umts::{ElementaryTask, GeneralTask};

/// Slices every general task into elementary tasks of size `eps`.
///
/// With the charges of a task sorted decreasingly `delta_1 >= delta_2 >= ...`
/// (states `v_1, v_2, ...`), slice `j = 1, 2, ...` is `(v_1, eps) ... (v_k, eps)`
/// with `k = max{i : delta_i >= j eps}`. Remainders below `eps` are dropped,
/// so the offline optimum can only go down.
pub fn elementarize(sigma: &[GeneralTask], eps: f64) -> Result<Vec<ElementaryTask>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(UmtsError::Precondition(format!("slice size must be positive, got {eps}")));
    }
    let mut out = Vec::new();
    for task in sigma {
        let mut order: Vec<usize> = (0..task.charges.len()).collect();
        // stable on ties: lower index first
        order.sort_by(|&a, &b| task.charges[b].total_cmp(&task.charges[a]));
        let mut j = 1u64;
        loop {
            let level = j as f64 * eps * (1.0 - 1e-12);
            let k = order.iter().take_while(|&&v| task.charges[v] >= level).count();
            if k == 0 {
                break;
            }
            out.extend(order[..k].iter().map(|&v| ElementaryTask::new(v, eps)));
            j += 1;
        }
    }
    Ok(out)
}
