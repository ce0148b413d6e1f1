//! Reference integrators shared by the Riccati oracle and the acceptance run.
#![allow(dead_code)]

use faer::Mat;
use locfilter::minimax_filter::midpoint_dre_step;

/// Right-hand side `A P + P Aᵀ + B − P D P`.
pub fn dre_rhs(a: &Mat<f64>, b: &Mat<f64>, d: &Mat<f64>, p: &Mat<f64>) -> Mat<f64> {
    a * p + p * a.transpose() + b - p * d * p
}

pub fn rk4(
    a: &Mat<f64>,
    b: &Mat<f64>,
    d: &Mat<f64>,
    p0: &Mat<f64>,
    t: f64,
    steps: usize,
) -> Mat<f64> {
    let h = t / steps as f64;
    let mut p = p0.clone();
    for _ in 0..steps {
        let k1 = dre_rhs(a, b, d, &p);
        let k2 = dre_rhs(a, b, d, &(&p + &k1 * (0.5 * h)));
        let k3 = dre_rhs(a, b, d, &(&p + &k2 * (0.5 * h)));
        let k4 = dre_rhs(a, b, d, &(&p + &k3 * h));
        p = &p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    p
}

pub fn midpoint(
    a: &Mat<f64>,
    b: &Mat<f64>,
    d: &Mat<f64>,
    p0: &Mat<f64>,
    t: f64,
    h: f64,
) -> Mat<f64> {
    let steps = (t / h).round() as usize;
    let mut p = p0.clone();
    for _ in 0..steps {
        p = midpoint_dre_step(a.as_ref(), b.as_ref(), d.as_ref(), p.as_ref(), h).unwrap();
    }
    p
}

pub fn max_abs_diff(x: &Mat<f64>, y: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            m = m.max((x[(i, j)] - y[(i, j)]).abs());
        }
    }
    m
}

/// Constant-coefficient test system of size `n`: a non-normal drift, SPD `B`, `D`, `P₀`.
pub fn system(n: usize) -> (Mat<f64>, Mat<f64>, Mat<f64>, Mat<f64>) {
    let a = Mat::from_fn(n, n, |i, j| match i as isize - j as isize {
        0 => -0.4 - 0.1 * i as f64,
        1 => 0.3,
        -1 => -0.2,
        _ => 0.0,
    });
    let spd = |diag: f64, off: f64| {
        Mat::from_fn(n, n, move |i, j| {
            if i == j {
                diag
            } else {
                off / (1.0 + (i as f64 - j as f64).abs())
            }
        })
    };
    (a, spd(0.8, 0.1), spd(1.5, 0.2), spd(2.0, 0.3))
}
