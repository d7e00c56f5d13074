//! Static checks on estimator settings, so configs fail before any compute.

use crate::twostep::{BandwidthPolicy, Dims, TransformKind, Variant};

pub(crate) enum DimCheck {
    Given(Dims),
    Bootstrap(usize),
}

pub(crate) struct FitCheck<'a> {
    pub name: &'a str,
    /// `None` for the oracle, which fits nothing.
    pub variant: Option<Variant>,
    pub dims: DimCheck,
    pub bandwidth: &'a BandwidthPolicy,
    pub transform: TransformKind,
    pub outer_order: usize,
    pub inner_order: usize,
}

fn in_range(out: &mut Vec<String>, name: &str, what: &str, v: Option<usize>, max: usize) {
    match v {
        None => out.push(format!("estimator '{name}': dims.{what} is required")),
        Some(d) if d == 0 || d > max => out.push(format!("estimator '{name}': dims.{what} = {d} must be in 1..={max}")),
        Some(_) => {}
    }
}

/// Violations for one estimator on data with `p` covariates, `r` auxiliary
/// columns and `n` rows.
pub(crate) fn check_fit(c: &FitCheck, p: usize, r: usize, n: usize, out: &mut Vec<String>) {
    let name = c.name;
    if name.trim().is_empty() {
        out.push("estimator name must not be empty".into());
    }
    for (what, m) in [("outer_order", c.outer_order), ("inner_order", c.inner_order)] {
        if m < 2 || m % 2 != 0 {
            out.push(format!("estimator '{name}': {what} = {m} must be even and >= 2"));
        }
    }
    let Some(variant) = c.variant else { return };
    let two_step = variant.uses_aux();
    if two_step && r == 0 {
        out.push(format!("estimator '{name}': {} needs auxiliary columns", variant.label()));
    }
    if !two_step && c.transform != TransformKind::None {
        out.push(format!("estimator '{name}': transforms apply only to two-step estimators"));
    }
    match &c.dims {
        DimCheck::Bootstrap(reps) => {
            if *reps == 0 {
                out.push(format!("estimator '{name}': bootstrap replicates must be >= 1"));
            }
        }
        DimCheck::Given(d) => {
            let outer = match variant {
                Variant::Full => None,
                Variant::Reduced => {
                    in_range(out, name, "central", d.central, p);
                    None
                }
                Variant::TwoStep => {
                    in_range(out, name, "joint", d.joint, p + r);
                    in_range(out, name, "outer", d.outer, p);
                    d.outer
                }
                Variant::Nested => {
                    in_range(out, name, "central", d.central, p);
                    let central = d.central.unwrap_or(p).min(p);
                    in_range(out, name, "joint", d.joint, r + central);
                    in_range(out, name, "outer", d.outer, central);
                    d.outer
                }
            };
            if let Some(o) = outer {
                if o >= 2 * c.outer_order {
                    out.push(format!(
                        "estimator '{name}': outer dimension {o} needs outer_order > {}, got {}",
                        o / 2 * 2,
                        c.outer_order
                    ));
                }
            }
        }
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    match c.bandwidth {
        BandwidthPolicy::Cv { folds, inner_grid, outer_grid } => {
            if *folds < 2 {
                out.push(format!("estimator '{name}': cv folds = {folds} must be >= 2"));
            } else if *folds > n {
                out.push(format!("estimator '{name}': cv folds = {folds} exceed n = {n}"));
            }
            for (what, g) in [("inner_grid", inner_grid), ("outer_grid", outer_grid)] {
                if g.is_empty() || !g.iter().all(|v| positive(*v)) {
                    out.push(format!("estimator '{name}': {what} must be nonempty and positive"));
                }
            }
        }
        BandwidthPolicy::Fixed { inner, outer } | BandwidthPolicy::Absolute { inner, outer } => {
            if !positive(*inner) || !positive(*outer) {
                out.push(format!("estimator '{name}': bandwidths must be positive"));
            }
        }
    }
}

/// Names must be unique; reports each duplicate once.
pub(crate) fn check_names<'a>(names: impl Iterator<Item = &'a str>, out: &mut Vec<String>) {
    let mut seen = std::collections::BTreeSet::new();
    let mut dup = std::collections::BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            dup.insert(n);
        }
    }
    for d in dup {
        out.push(format!("estimator name '{d}' is used more than once"));
    }
}

pub(crate) fn check_workers(workers: Option<usize>, out: &mut Vec<String>) {
    if workers == Some(0) {
        out.push("workers must be >= 1".into());
    }
}
