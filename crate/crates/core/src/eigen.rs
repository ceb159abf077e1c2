//! Symmetric eigen-decomposition for 3x3 and 2x2 Hessians.

/// Eigenvalues ordered by magnitude (`|lambda1| <= |lambda2| <= |lambda3|`)
/// and the unit eigenvector of `lambda1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenSystem {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub v1: [f64; 3],
}

/// Full decomposition: values ordered by magnitude, `vectors[c]` is the unit
/// eigenvector of `values[c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

const MAX_SWEEPS: usize = 32;

/// Cyclic Jacobi rotations on a symmetric matrix. Only the upper triangle
/// is read.
pub fn eig_sym3_full(h: [[f64; 3]; 3]) -> EigenDecomposition {
    let mut a = [
        [h[0][0], h[0][1], h[0][2]],
        [h[0][1], h[1][1], h[1][2]],
        [h[0][2], h[1][2], h[2][2]],
    ];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    let frob2: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 || off <= 1e-36 * frob2 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            a[p][p] -= t * apq;
            a[q][q] += t * apq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let r = 3 - p - q;
            let (arp, arq) = (a[r][p], a[r][q]);
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| a[x][x].abs().total_cmp(&a[y][y].abs()));
    let values = order.map(|c| a[c][c]);
    let vectors = order.map(|c| {
        let col = [v[0][c], v[1][c], v[2][c]];
        let n = (col[0] * col[0] + col[1] * col[1] + col[2] * col[2]).sqrt();
        [col[0] / n, col[1] / n, col[2] / n]
    });
    EigenDecomposition { values, vectors }
}

pub fn eig_sym3(h: [[f64; 3]; 3]) -> EigenSystem {
    let d = eig_sym3_full(h);
    EigenSystem {
        lambda1: d.values[0],
        lambda2: d.values[1],
        lambda3: d.values[2],
        v1: d.vectors[0],
    }
}

/// Symmetric matrix from `[xx, yy, zz, xy, xz, yz]`.
#[inline]
pub fn sym3(e: [f64; 6]) -> [[f64; 3]; 3] {
    [[e[0], e[3], e[4]], [e[3], e[1], e[5]], [e[4], e[5], e[2]]]
}

/// Eigenvalues `(mu1, mu2)` of `[[xx, xy], [xy, yy]]` with `|mu1| <= |mu2|`.
#[inline]
pub fn eig_sym2(xx: f64, yy: f64, xy: f64) -> (f64, f64) {
    let mean = 0.5 * (xx + yy);
    let rad = (0.5 * (xx - yy)).hypot(xy);
    let (a, b) = (mean - rad, mean + rad);
    if a.abs() <= b.abs() {
        (a, b)
    } else {
        (b, a)
    }
}

/// Unit eigenvector of `[[xx, xy], [xy, yy]]` for eigenvalue `mu`.
pub fn eigvec_sym2(xx: f64, yy: f64, xy: f64, mu: f64) -> [f64; 2] {
    // Rows of (H - mu I) are orthogonal to the eigenvector; use the larger.
    let r1 = [xx - mu, xy];
    let r2 = [xy, yy - mu];
    let n1 = r1[0].hypot(r1[1]);
    let n2 = r2[0].hypot(r2[1]);
    let (r, n) = if n1 >= n2 { (r1, n1) } else { (r2, n2) };
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [-r[1] / n, r[0] / n]
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matvec(h: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|r| h[r][0] * x[0] + h[r][1] * x[1] + h[r][2] * x[2])
    }

    #[test]
    fn diagonal_case() {
        let e = eig_sym3([[0.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -3.0]]);
        assert_eq!((e.lambda1, e.lambda2, e.lambda3), (0.0, -1.0, -3.0));
        assert_eq!(e.v1[0].abs(), 1.0);
    }

    #[test]
    fn identity_is_degenerate_but_valid() {
        let e = eig_sym3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!((e.lambda1, e.lambda2, e.lambda3), (1.0, 1.0, 1.0));
        let n: f64 = e.v1.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let e = eig_sym3([[0.0; 3]; 3]);
        assert_eq!((e.lambda1, e.lambda2, e.lambda3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn random_matrices_satisfy_eigen_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let e6 = [0; 6].map(|_| rng.random_range(-2.0..2.0));
            let h = sym3(e6);
            let d = eig_sym3_full(h);
            let norm = h.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            assert!(
                d.values[0].abs() <= d.values[1].abs() && d.values[1].abs() <= d.values[2].abs()
            );
            for c in 0..3 {
                let hv = matvec(&h, &d.vectors[c]);
                for r in 0..3 {
                    assert!((hv[r] - d.values[c] * d.vectors[c][r]).abs() < 1e-9 * norm);
                }
            }
        }
    }

    #[test]
    fn two_by_two() {
        let (a, b) = eig_sym2(-3.0, 1.0, 0.0);
        assert_eq!((a, b), (1.0, -3.0));
        let (xx, yy, xy) = (2.0, -1.0, 0.7);
        let (m1, m2) = eig_sym2(xx, yy, xy);
        assert!(m1.abs() <= m2.abs());
        for mu in [m1, m2] {
            let v = eigvec_sym2(xx, yy, xy, mu);
            assert!((xx * v[0] + xy * v[1] - mu * v[0]).abs() < 1e-12);
            assert!((xy * v[0] + yy * v[1] - mu * v[1]).abs() < 1e-12);
        }
    }
}
