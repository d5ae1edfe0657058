//! One-dimensional quadrature: Gauss–Legendre rules and globally adaptive
//! Gauss–Kronrod (7/15) for vector-valued integrands.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::sync::OnceLock;

/// `n`-point Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        x[0] = 0.0;
        w[0] = 2.0;
    } else if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// 16-point Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gl16_unit() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(16);
        let mut xs = [0.0; 16];
        let mut ws = [0.0; 16];
        for i in 0..16 {
            xs[i] = 0.5 * (x[i] + 1.0);
            ws[i] = 0.5 * w[i];
        }
        (xs, ws)
    })
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the 7-point rule living on XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let fc = f(c);
    for n in 0..N {
        kron[n] = WGK[7] * fc[n];
        gauss[n] = WG[3] * fc[n];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for n in 0..N {
            let s = f1[n] + f2[n];
            kron[n] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[n] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0f64;
    for n in 0..N {
        kron[n] *= h;
        gauss[n] *= h;
        err = err.max((kron[n] - gauss[n]).abs());
    }
    (kron, err)
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    val: [f64; N],
    err: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    /// Sum over panels of the Gauss/Kronrod discrepancy (max over components).
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive G7K15 integration of a vector-valued integrand.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `abs_tol` or `max_panels` is reached.
pub fn integrate_gk<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Integral<N> {
    if a == b {
        return Integral { value: [0.0; N], error: 0.0, panels: 0 };
    }
    let (val, err) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val, err });
    let mut total_err = err;
    while total_err > abs_tol && heap.len() < max_panels {
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        total_err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
    }
    // sum in ascending position so the result does not depend on heap order
    let mut panels: Vec<Panel<N>> = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut value = [0.0; N];
    let mut error = 0.0;
    for p in &panels {
        for n in 0..N {
            value[n] += p.val[n];
        }
        error += p.err;
    }
    Integral { value, error, panels: panels.len() }
}

/// Scalar convenience wrapper around [`integrate_gk`].
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate_gk(|x| [f(x)], a, b, abs_tol, 4000).value[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q} vs {exact}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn kronrod_and_gauss_exactness() {
        // K15 is exact to degree 22, G7 to degree 13
        for deg in 0..=22 {
            let f = |x: f64| [x.powi(deg)];
            let (k, _) = gk15(&mut { f }, -1.0, 1.0);
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((k[0] - exact).abs() < 1e-14, "deg {deg}");
        }
        let (_, err) = gk15(&mut |x: f64| [x.powi(12)], -1.0, 1.0);
        assert!(err < 1e-14);
        let (_, err) = gk15(&mut |x: f64| [x.powi(14)], -1.0, 1.0);
        assert!(err > 1e-6);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = integrate(|x| x.powf(0.05), 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 1.05).abs() < 1e-11);
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn adaptive_vector_components() {
        let r = integrate_gk(|x| [x.sin(), x.cos(), (-x).exp()], 0.0, 3.0, 1e-13, 1000);
        assert!((r.value[0] - (1.0 - 3f64.cos())).abs() < 1e-13);
        assert!((r.value[1] - 3f64.sin()).abs() < 1e-13);
        assert!((r.value[2] - (1.0 - (-3f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn gl16_unit_integrates_degree_31() {
        let (x, w) = gl16_unit();
        let q: f64 = (0..16).map(|i| w[i] * x[i].powi(31)).sum();
        assert!((q - 1.0 / 32.0).abs() < 1e-15);
    }
}
