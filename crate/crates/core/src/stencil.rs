//! Finite-difference weights on arbitrary nodes (Fornberg's recursion).

/// Weights `w[k][j]` such that `f^(k)(z) ~ sum_j w[k][j] f(nodes[j])` for
/// every derivative order `k <= max_deriv`.
pub fn fd_weights(z: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One-sided weights on unit-spaced nodes `0, -1, ..., -(npoints-1)` for the
/// `deriv`-th derivative at node 0. Scale by `dt^-deriv` for spacing `dt`.
/// The stencil is exact for polynomials of degree below `npoints`.
pub fn backward_difference_weights(deriv: usize, npoints: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..npoints).map(|j| -(j as f64)).collect();
    fd_weights(0.0, &nodes, deriv).swap_remove(deriv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_second_derivative() {
        assert_eq!(backward_difference_weights(2, 3), vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn two_point_first_derivative() {
        assert_eq!(backward_difference_weights(1, 2), vec![1.0, -1.0]);
    }

    #[test]
    fn bdf2_style_first_derivative() {
        let w = backward_difference_weights(1, 3);
        for (a, b) in w.iter().zip([1.5, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_zero_for_derivatives() {
        for d in 1..=4 {
            for np in d + 1..=8 {
                let s: f64 = backward_difference_weights(d, np).iter().sum();
                assert!(s.abs() < 1e-9, "d={d} np={np} sum={s}");
            }
        }
    }
}
