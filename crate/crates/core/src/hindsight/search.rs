//! Bounded scalar minimisation.

use crate::error::Result;

/// Points in the coarse grid that precedes golden-section refinement.
pub const GRID_POINTS: usize = 33;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[a, b]` down to an interval of width `tol`.
///
/// Returns the best evaluated `(x, f(x))`, including both end points, with
/// ties going to the smaller `|x|`.
pub fn golden_section<F>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut best = (lo, f(lo)?);
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx < best.1 || (fx == best.1 && x.abs() < best.0.abs()) {
            *best = (x, fx);
        }
    };
    let f_hi = f(hi)?;
    consider(hi, f_hi, &mut best);
    if hi - lo <= tol {
        return Ok(best);
    }

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
            consider(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
            consider(x2, f2, &mut best);
        }
    }
    Ok(best)
}
