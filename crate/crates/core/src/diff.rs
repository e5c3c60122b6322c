//! Central finite differences on uniform stencils.

/// (f(x+h) - f(x-h)) / 2h with one Richardson step (error O(h⁴)).
pub fn richardson_first<E>(mut f: impl FnMut(f64) -> Result<f64, E>, x: f64, h: f64) -> Result<f64, E> {
    let d = |f: &mut dyn FnMut(f64) -> Result<f64, E>, h: f64| -> Result<f64, E> {
        Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
    };
    let coarse = d(&mut f, h)?;
    let fine = d(&mut f, h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// First derivative from values at x-2h, x-h, x+h, x+2h.
pub fn five_point_first(m2: f64, m1: f64, p1: f64, p2: f64, h: f64) -> f64 {
    (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
}

/// Second derivative from values at x-2h..x+2h.
pub fn five_point_second(m2: f64, m1: f64, c: f64, p1: f64, p2: f64, h: f64) -> f64 {
    (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h)
}

/// Fourth derivative from values at x-2h..x+2h (error O(h²)).
pub fn five_point_fourth(m2: f64, m1: f64, c: f64, p1: f64, p2: f64, h: f64) -> f64 {
    (p2 - 4.0 * p1 + 6.0 * c - 4.0 * m1 + m2) / h.powi(4)
}

/// Weights w_i with f^(m)(x0) ≈ Σ w_i f(nodes_i), by Fornberg's recursion.
pub fn fd_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for the k-th derivative
    let mut c = vec![vec![0.0; m + 1]; n];
    if n == 0 {
        return Vec::new();
    }
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}
