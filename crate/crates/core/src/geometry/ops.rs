//! One-dimensional difference stencils and their tensor-product assembly.

use crate::sparse::CsrMatrix;

/// First derivative on `n` equispaced nodes: central inside, second-order
/// one-sided at both ends.
pub(crate) fn d1_bounded(n: usize, h: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(3 * n);
    let c = 1.0 / (2.0 * h);
    t.extend([(0, 0, -3.0 * c), (0, 1, 4.0 * c), (0, 2, -c)]);
    for i in 1..n - 1 {
        t.push((i, i - 1, -c));
        t.push((i, i + 1, c));
    }
    t.extend([(n - 1, n - 1, 3.0 * c), (n - 1, n - 2, -4.0 * c), (n - 1, n - 3, c)]);
    CsrMatrix::from_triplets(n, n, &t)
}

/// Second derivative on `n` equispaced nodes with second-order one-sided end rows.
pub(crate) fn d2_bounded(n: usize, h: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * n);
    let c = 1.0 / (h * h);
    t.extend([(0, 0, 2.0 * c), (0, 1, -5.0 * c), (0, 2, 4.0 * c), (0, 3, -c)]);
    for i in 1..n - 1 {
        t.extend([(i, i - 1, c), (i, i, -2.0 * c), (i, i + 1, c)]);
    }
    let l = n - 1;
    t.extend([(l, l, 2.0 * c), (l, l - 1, -5.0 * c), (l, l - 2, 4.0 * c), (l, l - 3, -c)]);
    CsrMatrix::from_triplets(n, n, &t)
}

pub(crate) fn d1_periodic(n: usize, h: f64) -> CsrMatrix {
    let c = 1.0 / (2.0 * h);
    let mut t = Vec::with_capacity(2 * n);
    for i in 0..n {
        t.push((i, (i + n - 1) % n, -c));
        t.push((i, (i + 1) % n, c));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

pub(crate) fn d2_periodic(n: usize, h: f64) -> CsrMatrix {
    let c = 1.0 / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, (i + n - 1) % n, c));
        t.push((i, i, -2.0 * c));
        t.push((i, (i + 1) % n, c));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Lifts a 1D operator acting along the fast index `a` (node `b * na + a`).
pub(crate) fn along_a(op: &CsrMatrix, na: usize, nb: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(op.nnz() * nb);
    for b in 0..nb {
        for i in 0..na {
            for (j, v) in op.row(i) {
                t.push((b * na + i, b * na + j, v));
            }
        }
    }
    CsrMatrix::from_triplets(na * nb, na * nb, &t)
}

/// Lifts a 1D operator acting along the slow index `b`.
pub(crate) fn along_b(op: &CsrMatrix, na: usize, nb: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(op.nnz() * na);
    for i in 0..nb {
        for (j, v) in op.row(i) {
            for a in 0..na {
                t.push((i * na + a, j * na + a, v));
            }
        }
    }
    CsrMatrix::from_triplets(na * nb, na * nb, &t)
}

/// Cartesian derivative operators on a grid.
#[derive(Clone, Debug)]
pub struct DiffOps {
    pub dx: CsrMatrix,
    pub dy: CsrMatrix,
    pub dxx: CsrMatrix,
    pub dyy: CsrMatrix,
    pub dxy: CsrMatrix,
    pub lap: CsrMatrix,
}

impl DiffOps {
    pub(crate) fn rectangle(na: usize, nb: usize, hx: f64, hy: f64) -> Self {
        let dx = along_a(&d1_bounded(na, hx), na, nb);
        let dy = along_b(&d1_bounded(nb, hy), na, nb);
        let dxx = along_a(&d2_bounded(na, hx), na, nb);
        let dyy = along_b(&d2_bounded(nb, hy), na, nb);
        let dxy = dx.mul(&dy);
        let lap = CsrMatrix::combine(&[(1.0, &dxx), (1.0, &dyy)]);
        Self {
            dx,
            dy,
            dxx,
            dyy,
            dxy,
            lap,
        }
    }

    /// Polar grid with Cartesian outputs: radial index `a`, periodic angular index `b`.
    pub(crate) fn polar(na: usize, nb: usize, dr: f64, dth: f64, r: &[f64], th: &[f64]) -> Self {
        let fr = along_a(&d1_bounded(na, dr), na, nb);
        let frr = along_a(&d2_bounded(na, dr), na, nb);
        let ft = along_b(&d1_periodic(nb, dth), na, nb);
        let ftt = along_b(&d2_periodic(nb, dth), na, nb);
        let frt = fr.mul(&ft);
        let c: Vec<f64> = th.iter().map(|t| t.cos()).collect();
        let s: Vec<f64> = th.iter().map(|t| t.sin()).collect();
        let m = r.len();
        let v = |f: &dyn Fn(usize) -> f64| (0..m).map(f).collect::<Vec<f64>>();

        let dx = CsrMatrix::combine(&[
            (1.0, &fr.scale_rows(&c)),
            (-1.0, &ft.scale_rows(&v(&|k| s[k] / r[k]))),
        ]);
        let dy = CsrMatrix::combine(&[
            (1.0, &fr.scale_rows(&s)),
            (1.0, &ft.scale_rows(&v(&|k| c[k] / r[k]))),
        ]);
        let dxx = CsrMatrix::combine(&[
            (1.0, &frr.scale_rows(&v(&|k| c[k] * c[k]))),
            (-1.0, &frt.scale_rows(&v(&|k| 2.0 * c[k] * s[k] / r[k]))),
            (1.0, &ft.scale_rows(&v(&|k| 2.0 * c[k] * s[k] / (r[k] * r[k])))),
            (1.0, &fr.scale_rows(&v(&|k| s[k] * s[k] / r[k]))),
            (1.0, &ftt.scale_rows(&v(&|k| s[k] * s[k] / (r[k] * r[k])))),
        ]);
        let dyy = CsrMatrix::combine(&[
            (1.0, &frr.scale_rows(&v(&|k| s[k] * s[k]))),
            (1.0, &frt.scale_rows(&v(&|k| 2.0 * c[k] * s[k] / r[k]))),
            (-1.0, &ft.scale_rows(&v(&|k| 2.0 * c[k] * s[k] / (r[k] * r[k])))),
            (1.0, &fr.scale_rows(&v(&|k| c[k] * c[k] / r[k]))),
            (1.0, &ftt.scale_rows(&v(&|k| c[k] * c[k] / (r[k] * r[k])))),
        ]);
        let dxy = CsrMatrix::combine(&[
            (1.0, &frr.scale_rows(&v(&|k| c[k] * s[k]))),
            (1.0, &frt.scale_rows(&v(&|k| (c[k] * c[k] - s[k] * s[k]) / r[k]))),
            (-1.0, &ft.scale_rows(&v(&|k| (c[k] * c[k] - s[k] * s[k]) / (r[k] * r[k])))),
            (-1.0, &fr.scale_rows(&v(&|k| c[k] * s[k] / r[k]))),
            (-1.0, &ftt.scale_rows(&v(&|k| c[k] * s[k] / (r[k] * r[k])))),
        ]);
        let lap = CsrMatrix::combine(&[(1.0, &dxx), (1.0, &dyy)]);
        Self {
            dx,
            dy,
            dxx,
            dyy,
            dxy,
            lap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(op: &CsrMatrix, f: impl Fn(f64) -> f64, h: f64) -> Vec<f64> {
        let n = op.nrows();
        let x: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
        op.mul_vec(&x)
    }

    #[test]
    fn bounded_stencils_are_exact_on_quadratics_and_cubics() {
        let h = 0.1;
        let d1 = apply(&d1_bounded(9, h), |x| 3.0 * x * x - x + 2.0, h);
        for (i, v) in d1.iter().enumerate() {
            assert!((v - (6.0 * i as f64 * h - 1.0)).abs() < 1e-12);
        }
        let d2 = apply(&d2_bounded(9, h), |x| x * x * x, h);
        for (i, v) in d2.iter().enumerate() {
            assert!((v - 6.0 * i as f64 * h).abs() < 1e-9, "{i}: {v}");
        }
    }

    #[test]
    fn periodic_stencils_annihilate_constants() {
        let d1 = d1_periodic(7, 0.3).mul_vec(&[2.0; 7]);
        let d2 = d2_periodic(7, 0.3).mul_vec(&[2.0; 7]);
        assert!(d1.iter().chain(&d2).all(|v| v.abs() < 1e-14));
    }
}
