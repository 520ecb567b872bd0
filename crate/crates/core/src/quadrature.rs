//! One-dimensional quadrature rules: Gauss–Legendre, Clenshaw–Curtis (nested under
//! doubling) and a Gauss rule for the weight `t^{−1/2}` on `(0, t₀]`.

use std::f64::consts::PI;

/// Nodes and weights of a rule on a fixed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Affine map of a rule on `[−1, 1]` to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss–Legendre rule on `[−1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    if n == 1 {
        return Rule { nodes: vec![0.0], weights: vec![2.0] };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Clenshaw–Curtis rule with `n + 1` points `cos(kπ/n)` on `[−1, 1]`; the rule for `2n`
/// contains these nodes at even indices.
pub fn clenshaw_curtis(n: usize) -> Rule {
    assert!(n >= 1);
    let nf = n as f64;
    let nodes: Vec<f64> = (0..=n).map(|k| -(PI * k as f64 / nf).cos()).collect();
    let weights = (0..=n)
        .map(|k| {
            let c = if k == 0 || k == n { 1.0 } else { 2.0 };
            let mut s = 0.0;
            for j in 1..=n / 2 {
                let b = if 2 * j == n { 1.0 } else { 2.0 };
                s += b / (4.0 * (j * j) as f64 - 1.0) * (2.0 * PI * (j * k) as f64 / nf).cos();
            }
            c / nf * (1.0 - s)
        })
        .collect();
    Rule { nodes, weights }
}

/// Gauss rule for `∫₀^{t₀} g(t) t^{−1/2} dt`: the substitution `t = t₀s²` turns it into
/// `2√t₀ ∫₀¹ g(t₀s²) ds`, and symmetric Gauss–Legendre on `[−1, 1]` restricted to `s > 0`
/// is exact for polynomials of degree `2n − 1` in `t`.
pub fn inverse_sqrt_weight(n: usize, t0: f64) -> Rule {
    let gl = gauss_legendre(2 * n);
    let scale = 2.0 * t0.sqrt();
    let (mut nodes, mut weights) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (&s, &w) in gl.nodes.iter().zip(&gl.weights).skip(n) {
        nodes.push(t0 * s * s);
        weights.push(scale * w);
    }
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre rule on geometric panels `[a·r^k, a·r^{k+1}]` covering `[a, b]`.
pub fn geometric_panels(a: f64, b: f64, ratio: f64, per_panel: usize) -> Vec<Rule> {
    assert!(a > 0.0 && b > a && ratio > 1.0);
    let gl = gauss_legendre(per_panel);
    let mut panels = Vec::new();
    let mut lo = a;
    while lo < b * (1.0 - 1e-12) {
        let hi = (lo * ratio).min(b);
        panels.push(gl.mapped(lo, hi));
        lo = hi;
    }
    panels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        for n in [1, 2, 5, 12, 40] {
            let r = gauss_legendre(n);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                let got = r.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n {n} deg {deg}");
            }
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn known_three_point_rule() {
        let r = gauss_legendre(3);
        assert!((r.nodes[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((r.weights[0] - 5.0 / 9.0).abs() < 1e-15 && (r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn clenshaw_curtis_nesting_and_accuracy() {
        let a = clenshaw_curtis(8);
        let b = clenshaw_curtis(16);
        for k in 0..=8 {
            assert!((a.nodes[k] - b.nodes[2 * k]).abs() < 1e-15);
        }
        assert!((b.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exp on [−1, 1]
        let exact = 1f64.exp() - (-1f64).exp();
        assert!((b.integrate(f64::exp) - exact).abs() < 1e-14);
        for deg in 0..=8 {
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            assert!((a.integrate(|x| x.powi(deg)) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_sqrt_rule() {
        // ∫₀^{t₀} t^k t^{−1/2} dt = t₀^{k+1/2}/(k + 1/2)
        let t0 = 0.3;
        let r = inverse_sqrt_weight(6, t0);
        for k in 0..12 {
            let exact = t0.powf(k as f64 + 0.5) / (k as f64 + 0.5);
            assert!((r.integrate(|t| t.powi(k)) - exact).abs() < 1e-14 * exact.max(1.0), "k {k}");
        }
        assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn geometric_panels_cover_interval() {
        let panels = geometric_panels(1e-3, 2.0, 1.25, 4);
        let total: f64 = panels.iter().map(|p| p.weights.iter().sum::<f64>()).sum();
        assert!((total - (2.0 - 1e-3)).abs() < 1e-13);
        let exact = (2.0f64 / 1e-3).ln();
        let got: f64 = panels.iter().map(|p| p.integrate(|t| 1.0 / t)).sum();
        assert!((got - exact).abs() < 1e-8);
    }
}
