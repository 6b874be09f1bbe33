//! Brute-force oracle for the simplex min-norm problem.
//!
//! The solver's correctness claims are only as good as the reference they
//! are checked against, so this module minimizes `wᵀ M w` over the simplex
//! by entirely different means than Frank–Wolfe: exhaustive grid search at
//! a fixed resolution, refined by projected gradient descent from several
//! starts. It shares no iteration logic with the solver.

use crate::scalar::{real, Scalar};
use crate::solver::GramMatrix;

/// Euclidean projection of an arbitrary point onto the probability simplex
/// (sort-based algorithm).
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = v.len();
    assert!(n >= 1, "projection needs at least one coordinate");
    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    let mut found = false;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - T::one()) / real::<T>((i + 1) as f64);
        if u - candidate > T::zero() {
            tau = candidate;
            found = true;
        }
    }
    debug_assert!(found, "simplex projection always finds a threshold");
    let _ = found;
    v.iter()
        .map(|&x| {
            let d = x - tau;
            if d > T::zero() {
                d
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Exhaustive search over the lattice {w : w_i = c_i/steps, Σ c_i = steps}.
/// Returns the best lattice point and its objective value.
pub fn grid_min<T: Scalar>(m: &GramMatrix<T>, steps: usize) -> (Vec<T>, T) {
    let k = m.k();
    assert!(k >= 1 && steps >= 1);

    // Recursively enumerate every composition of `steps` into k parts
    // (depth = K, at most a handful of levels).
    fn walk<T: Scalar>(
        m: &GramMatrix<T>,
        counts: &mut [usize],
        pos: usize,
        left: usize,
        steps: usize,
        best: &mut (Vec<T>, T),
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let denom = real::<T>(steps as f64);
            let w: Vec<T> = counts
                .iter()
                .map(|&c| real::<T>(c as f64) / denom)
                .collect();
            let val = m.quad(&w);
            if val < best.1 {
                *best = (w, val);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            walk(m, counts, pos + 1, left - c, steps, best);
        }
    }

    let mut counts = vec![0usize; k];
    let mut best = (vec![T::zero(); k], T::infinity());
    walk(m, &mut counts, 0, steps, steps, &mut best);
    best
}

/// Projected gradient descent on `wᵀ M w` from a given simplex start,
/// with the conservative step 1/(2·max(trace, tiny)) (a Lipschitz bound on
/// the gradient for PSD `M`). Runs until the iterate stalls.
pub fn projected_gradient_min<T: Scalar>(
    m: &GramMatrix<T>,
    start: &[T],
    max_iters: usize,
) -> (Vec<T>, T) {
    let k = m.k();
    debug_assert_eq!(start.len(), k);
    let trace = m.trace();
    if trace <= T::zero() {
        // All-zero PSD matrix: everything is optimal.
        return (start.to_vec(), m.quad(start));
    }
    let step = T::one() / (trace + trace);
    let stall = real::<T>(1e-15);
    let mut w = start.to_vec();
    for _ in 0..max_iters {
        let grad = m.mul(&w);
        let moved: Vec<T> = w
            .iter()
            .zip(&grad)
            .map(|(&wi, &gi)| wi - step * (gi + gi))
            .collect();
        let next = project_to_simplex(&moved);
        let delta: T = next
            .iter()
            .zip(&w)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        w = next;
        if delta < stall {
            break;
        }
    }
    let val = m.quad(&w);
    (w, val)
}

/// Reference minimizer of `wᵀ M w` over the simplex.
///
/// Resolution follows the oracle contract: grid at 1e−3 for K = 2 and
/// 1e−2 for K = 3 (coarser for larger K), then projected-gradient
/// refinement from the grid's best point, the uniform point, and every
/// vertex. Supports any K ≥ 1, tuned for K ≤ 5.
pub fn min_norm_oracle<T: Scalar>(m: &GramMatrix<T>) -> (Vec<T>, T) {
    let k = m.k();
    if k == 1 {
        return (vec![T::one()], m.at(0, 0));
    }
    let steps = match k {
        2 => 1000,
        3 => 100,
        _ => 12,
    };
    let (grid_w, grid_val) = grid_min(m, steps);

    let mut starts: Vec<Vec<T>> = vec![grid_w.clone(), vec![T::one() / real::<T>(k as f64); k]];
    for i in 0..k {
        let mut v = vec![T::zero(); k];
        v[i] = T::one();
        starts.push(v);
    }

    let mut best_w = grid_w;
    let mut best_val = grid_val;
    for start in starts {
        let (w, val) = projected_gradient_min(m, &start, 20_000);
        if val < best_val {
            best_val = val;
            best_w = w;
        }
    }
    (best_w, best_val)
}
