//! Oracles shared by the integration tests.
#![allow(dead_code)]

use firegrid::lp::LinearProgram;
use rand::{Rng, RngExt};

/// Minimum of the objective over all vertices of a bounded LP, found by
/// intersecting every choice of `n` constraint hyperplanes. `None` when no
/// vertex is feasible.
pub fn brute_force_lp(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for b in [lp.lower[j], lp.upper[j]] {
            if b.is_finite() {
                planes.push((e.clone(), b));
            }
        }
    }
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        planes.push((a.clone(), row.lo));
        if row.hi != row.lo {
            planes.push((a, row.hi));
        }
    }
    planes.retain(|p| p.1.is_finite());
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    combos(planes.len(), n, 0, 0, &mut pick, &mut |idx| {
        let sys: Vec<(Vec<f64>, f64)> = idx.iter().map(|&k| planes[k].clone()).collect();
        if let Some(x) = solve_square(sys) {
            let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if lp.max_violation(&x) <= 1e-9 * scale {
                let obj = lp.objective_value(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    });
    best
}

fn combos(
    total: usize,
    k: usize,
    start: usize,
    depth: usize,
    pick: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        f(pick);
        return;
    }
    for i in start..total {
        pick[depth] = i;
        combos(total, k, i + 1, depth + 1, pick, f);
    }
}

fn solve_square(mut sys: Vec<(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = sys.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| sys[a].0[c].abs().total_cmp(&sys[b].0[c].abs()))?;
        if sys[p].0[c].abs() < 1e-10 {
            return None;
        }
        sys.swap(p, c);
        for r in 0..n {
            if r != c {
                let f = sys[r].0[c] / sys[c].0[c];
                if f != 0.0 {
                    for k in c..n {
                        let v = sys[c].0[k];
                        sys[r].0[k] -= f * v;
                    }
                    let v = sys[c].1;
                    sys[r].1 -= f * v;
                }
            }
        }
    }
    Some((0..n).map(|i| sys[i].1 / sys[i].0[i]).collect())
}

/// Random boxed LP with up to `max_vars` variables and `max_rows` rows of
/// mixed senses; integer coefficients make degenerate vertices common.
pub fn random_lp<R: Rng>(rng: &mut R, max_vars: usize, max_rows: usize) -> LinearProgram {
    use firegrid::lp::Row;
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(1..=max_rows);
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        let lo = rng.random_range(-3..=1) as f64;
        let hi = lo + rng.random_range(1..=5) as f64;
        let c = if rng.random::<f64>() < 0.5 {
            rng.random_range(-4..=4) as f64
        } else {
            rng.random::<f64>() * 6.0 - 3.0
        };
        lp.add_var(c, lo, hi);
    }
    // most rows pass through a random point of the box so that the
    // majority of instances are feasible
    let anchor: Vec<f64> = (0..n)
        .map(|j| lp.lower[j] + rng.random::<f64>() * (lp.upper[j] - lp.lower[j]))
        .collect();
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random::<f64>() < 0.7 {
                coeffs.push((j, rng.random_range(-3..=3) as f64));
            }
        }
        let at: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
        let base = if rng.random::<f64>() < 0.9 {
            at.round()
        } else {
            rng.random_range(-4..=6) as f64
        };
        let row = match rng.random_range(0..7) {
            0 | 1 => Row::le(coeffs, base + rng.random_range(0..=2) as f64),
            2 | 3 => Row::ge(coeffs, base - rng.random_range(0..=2) as f64),
            4 => Row::eq(coeffs, base),
            _ => Row::range(
                coeffs,
                base - rng.random_range(0..=2) as f64,
                base + rng.random_range(0..=2) as f64,
            ),
        };
        lp.add_row(row);
    }
    lp
}
