use crate::umts::{apply_elementary, apply_task, initial_work_function, opt_value, ElementaryTask, GeneralTask, Umts};

/// `min_v w_sigma(v)` via the work-function recursion from `dist(init, .)`.
pub fn offline_opt(u: &Umts, sigma: &[GeneralTask]) -> f64 {
    let mut w = initial_work_function(u);
    for t in sigma {
        w = apply_task(&u.metric, &w, t);
    }
    opt_value(&w)
}

/// Same for elementary tasks, using the single-entry update.
pub fn offline_opt_elementary(u: &Umts, sigma: &[ElementaryTask]) -> f64 {
    let mut w = initial_work_function(u);
    for t in sigma {
        apply_elementary(&u.metric, &mut w, *t);
    }
    opt_value(&w)
}
