//! Shared helpers for integration tests: an independent Gauss–Hermite
//! quadrature oracle for classical normal expectations, and reference-setup
//! builders.

/// Nodes and weights of n-point Gauss–Hermite quadrature (weight e^{-z^2}),
/// computed by Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut out = vec![(0.0f64, 0.0f64); n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // p1 = orthonormal H_n(z), p2 = H_{n-1}(z)
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out
}

/// `E[phi(sigma Z)]` for standard normal Z, via 40-point Gauss–Hermite.
pub fn normal_expect(phi: impl Fn(f64) -> f64, sigma: f64) -> f64 {
    let gh = gauss_hermite(40);
    let root_pi = std::f64::consts::PI.sqrt();
    let s2 = std::f64::consts::SQRT_2;
    gh.iter()
        .map(|&(z, w)| w * phi(sigma * s2 * z))
        .sum::<f64>()
        / root_pi
}

#[allow(dead_code)]
pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{}: got {}, want {} (tol {})",
        what,
        got,
        want,
        tol
    );
}
