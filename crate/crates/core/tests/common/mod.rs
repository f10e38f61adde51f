#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Dense two-phase simplex for `min cᵀx  s.t.  Ax = b, x >= 0` using
/// Bland's rule. Returns `None` when infeasible or unbounded.
pub fn simplex(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, n) = a.shape();
    let tol = 1e-11;
    // tableau columns: n originals, m artificials, rhs
    let width = n + m + 1;
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = flip * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, width - 1)] = flip * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |t: &mut DMatrix<f64>, row: usize, col: usize| {
        let p = t[(row, col)];
        for j in 0..t.ncols() {
            t[(row, j)] /= p;
        }
        for i in 0..t.nrows() {
            if i != row {
                let f = t[(i, col)];
                if f != 0.0 {
                    for j in 0..t.ncols() {
                        let v = t[(row, j)];
                        t[(i, j)] -= f * v;
                    }
                }
            }
        }
    };

    let run = |t: &mut DMatrix<f64>, basis: &mut Vec<usize>, allowed: usize| -> bool {
        for _ in 0..10_000 {
            let obj = t.nrows() - 1;
            let Some(col) = (0..allowed).find(|&j| t[(obj, j)] < -tol) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..obj {
                if t[(i, col)] > tol {
                    let ratio = t[(i, t.ncols() - 1)] / t[(i, col)];
                    let better = match best {
                        None => true,
                        Some((bi, br)) => ratio < br - tol || (ratio <= br + tol && basis[i] < basis[bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = best else {
                return false;
            };
            pivot(t, row, col);
            basis[row] = col;
        }
        false
    };

    // phase one: minimize the sum of artificials
    for i in 0..m {
        for j in 0..width {
            let v = t[(i, j)];
            t[(m, j)] -= v;
        }
        t[(m, n + i)] += 1.0;
    }
    if !run(&mut t, &mut basis, n + m) || t[(m, width - 1)].abs() > 1e-9 {
        return None;
    }
    // drive degenerate artificials out of the basis
    for row in 0..m {
        if basis[row] >= n {
            if let Some(col) = (0..n).find(|&j| t[(row, j)].abs() > 1e-9) {
                pivot(&mut t, row, col);
                basis[row] = col;
            }
        }
    }

    // phase two
    for j in 0..width {
        t[(m, j)] = 0.0;
    }
    for j in 0..n {
        t[(m, j)] = c[j];
    }
    for row in 0..m {
        let col = basis[row];
        if col < n {
            let f = t[(m, col)];
            for j in 0..width {
                let v = t[(row, j)];
                t[(m, j)] -= f * v;
            }
        }
    }
    // artificials are barred from re-entering
    if !run(&mut t, &mut basis, n) {
        return None;
    }
    let mut x = DVector::zeros(n);
    for (row, &col) in basis.iter().enumerate() {
        if col < n {
            x[col] = t[(row, width - 1)];
        }
    }
    Some(x)
}

/// `min ||x||_1  s.t.  Mx = b` through the split `x = u - v`.
pub fn l1_simplex(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = m.ncols();
    let mut a = DMatrix::zeros(m.nrows(), 2 * n);
    a.columns_mut(0, n).copy_from(m);
    a.columns_mut(n, n).copy_from(&(-m));
    let uv = simplex(&a, b, &DVector::from_element(2 * n, 1.0))?;
    Some(DVector::from_fn(n, |i, _| uv[i] - uv[n + i]))
}

/// All minimizers of `||x||_1` over `Mx = b` that are basic solutions,
/// found by enumerating every support of size at most `rank(M)`.
/// Returns the optimal value and the distinct optimal basic solutions.
pub fn l1_exhaustive(m: &DMatrix<f64>, b: &DVector<f64>) -> (f64, Vec<DVector<f64>>) {
    let (rows, n) = m.shape();
    let mut best = f64::INFINITY;
    let mut sols: Vec<DVector<f64>> = Vec::new();
    let max_size = rows.min(n);
    let scale = 1.0 + b.norm();
    for mask in 1u64..(1u64 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if support.len() > max_size {
            continue;
        }
        let cols: Vec<DVector<f64>> = support.iter().map(|&i| m.column(i).into_owned()).collect();
        let a = DMatrix::from_columns(&cols);
        let svd = a.clone().svd(true, true);
        let smin = svd.singular_values.min();
        if smin < 1e-10 * svd.singular_values.max() {
            continue;
        }
        let Ok(coef) = svd.solve(b, 1e-14) else { continue };
        if (&a * &coef - b).norm() > 1e-9 * scale {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (k, &i) in support.iter().enumerate() {
            x[i] = coef[k];
        }
        let val = x.lp_norm(1);
        if val < best - 1e-9 {
            best = val;
            sols.clear();
            sols.push(x);
        } else if (val - best).abs() <= 1e-9 && !sols.iter().any(|s| (s - &x).norm() < 1e-8) {
            sols.push(x);
        }
    }
    (best, sols)
}

/// Euclidean projection of `c` onto `{y : gᵢᵀ y <= hᵢ}` by enumerating
/// every active set. `None` when the polyhedron is empty.
pub fn brute_force_projection(c: &DVector<f64>, g: &[DVector<f64>], h: &[f64]) -> Option<DVector<f64>> {
    let k = g.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << k) {
        let active: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let y = if active.is_empty() {
            c.clone()
        } else {
            let ga = DMatrix::from_rows(&active.iter().map(|&i| g[i].transpose()).collect::<Vec<_>>());
            let gram = &ga * ga.transpose();
            if gram.determinant().abs() < 1e-12 {
                continue;
            }
            let rhs = &ga * c - DVector::from_iterator(active.len(), active.iter().map(|&i| h[i]));
            let Some(lambda) = gram.lu().solve(&rhs) else { continue };
            c - ga.transpose() * lambda
        };
        let feasible = (0..k).all(|i| g[i].dot(&y) <= h[i] + 1e-9 * (1.0 + h[i].abs()));
        if !feasible {
            continue;
        }
        let d = (&y - c).norm();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.map(|(_, y)| y)
}
