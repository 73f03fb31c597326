//! Reference solvers shared by the integration test targets.

/// Minimises `½‖v - rhs‖² + (dt/p) Σ_c h |s_c|^p` over interior values of a
/// 1D zero-boundary field by nonlinear conjugate gradients, where
/// `s_c` are cell slopes.
pub fn energy_minimiser_1d(rhs: &[f64], h: f64, dt: f64, p: f64) -> Vec<f64> {
    let n = rhs.len() - 1;
    let gradient = |v: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n + 1];
        for i in 1..n {
            g[i] += h * (v[i] - rhs[i]);
        }
        for c in 0..n {
            let s = (v[c + 1] - v[c]) / h;
            let flux = dt * s.abs().powf(p - 2.0) * s;
            g[c + 1] += flux;
            g[c] -= flux;
        }
        g[0] = 0.0;
        g[n] = 0.0;
        g
    };
    let mut v = rhs.to_vec();
    v[0] = 0.0;
    v[n] = 0.0;
    // Polak-Ribiere conjugate gradients with an exact line search (bisection
    // on the directional derivative, which avoids comparing energy values)
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let along = |v: &[f64], d: &[f64], t: f64| -> Vec<f64> {
        v.iter().zip(d).map(|(a, b)| a + t * b).collect()
    };
    let mut g = gradient(&v);
    let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
    for it in 0..100_000 {
        let gnorm = g.iter().map(|x| x * x / h).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            break;
        }
        if dot(&g, &d) >= 0.0 || it % n == 0 {
            d = g.iter().map(|x| -x).collect();
        }
        let slope_at = |t: f64| dot(&gradient(&along(&v, &d, t)), &d);
        let (mut lo, mut hi) = (0.0, 1e-6);
        while slope_at(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope_at(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        v = along(&v, &d, 0.5 * (lo + hi));
        let g_new = gradient(&v);
        let beta = (dot(&g_new, &g_new) - dot(&g_new, &g)) / dot(&g, &g);
        d = g_new
            .iter()
            .zip(&d)
            .map(|(a, b)| -a + beta.max(0.0) * b)
            .collect();
        g = g_new;
    }
    v
}
