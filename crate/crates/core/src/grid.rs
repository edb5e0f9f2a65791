//! Chebyshev–Gauss–Lobatto collocation grid.
//!
//! Nodes are stored in ascending order, `x_j = -cos(jπ/N)`, so `x_0 = -1`
//! and `x_N = 1`. Dense differentiation matrices are assembled from the
//! barycentric weights with the negative-sum trick, which makes them
//! annihilate constants exactly. Quadrature weights are Clenshaw–Curtis
//! (exact for polynomials of degree ≤ N). Sup norms are taken over an
//! oversampled evaluation mesh so that extrema between nodes are seen.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Oversampling factor for the C⁰-norm evaluation mesh.
const C0_OVERSAMPLE: usize = 8;

#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    nodes: Array1<f64>,
    d1: Array2<f64>,
    d2: Array2<f64>,
    weights: Array1<f64>,
    bary: Array1<f64>,
    /// Maps node values to Chebyshev coefficients of the interpolant.
    analysis: Array2<f64>,
    /// Maps node values of `f` to node values of `∫_{-1}^x f`, exactly for
    /// the degree-N interpolant (the antiderivative keeps degree N+1).
    cumint: Array2<f64>,
    fine_mesh: Array1<f64>,
}

impl Grid {
    /// Builds the grid and all derived operators. `n` is the polynomial
    /// degree; the grid has `n + 1` nodes.
    pub fn new(n: usize) -> Result<Grid> {
        if !(8..=1024).contains(&n) {
            return Err(Error::GridSize(n));
        }
        let nf = n as f64;
        let nodes = Array1::from_shape_fn(n + 1, |j| {
            // -cos(jπ/N), with the endpoints and midpoint pinned exactly.
            if j == 0 {
                -1.0
            } else if j == n {
                1.0
            } else if 2 * j == n {
                0.0
            } else {
                -(j as f64 * std::f64::consts::PI / nf).cos()
            }
        });

        let mut bary = Array1::from_shape_fn(n + 1, |j| if j % 2 == 0 { 1.0 } else { -1.0 });
        bary[0] *= 0.5;
        bary[n] *= 0.5;

        let mut d1 = Array2::zeros((n + 1, n + 1));
        for i in 0..=n {
            let mut row_sum = 0.0;
            for j in 0..=n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    d1[[i, j]] = v;
                    row_sum += v;
                }
            }
            d1[[i, i]] = -row_sum;
        }
        let mut d2 = d1.dot(&d1);
        // Re-apply the negative-sum trick to the product so that second
        // derivatives also annihilate constants to rounding.
        for i in 0..=n {
            let off: f64 = (0..=n).filter(|&j| j != i).map(|j| d2[[i, j]]).sum();
            d2[[i, i]] = -off;
        }

        let analysis = analysis_matrix(n);
        let weights = quadrature_weights(n, &analysis);
        let cumint = cumulative_integral_matrix(n, &analysis);

        let m = C0_OVERSAMPLE * n;
        let fine_mesh = Array1::from_shape_fn(m + 1, |i| {
            if i == 0 {
                -1.0
            } else if i == m {
                1.0
            } else {
                -(i as f64 * std::f64::consts::PI / m as f64).cos()
            }
        });

        Ok(Grid {
            n,
            nodes,
            d1,
            d2,
            weights,
            bary,
            analysis,
            cumint,
            fine_mesh,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &Array1<f64> {
        &self.nodes
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn d1(&self) -> &Array2<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &Array2<f64> {
        &self.d2
    }

    pub fn diff1(&self, f: &Array1<f64>) -> Array1<f64> {
        self.d1.dot(f)
    }

    pub fn diff2(&self, f: &Array1<f64>) -> Array1<f64> {
        self.d2.dot(f)
    }

    /// `∫_{-1}^{1} f dx` by Clenshaw–Curtis quadrature (plain `dx` measure).
    pub fn integrate(&self, f: &Array1<f64>) -> f64 {
        self.weights.dot(f)
    }

    /// Chebyshev coefficients of the degree-N interpolant of `f`.
    pub fn chebyshev_coeffs(&self, f: &Array1<f64>) -> Array1<f64> {
        self.analysis.dot(f)
    }

    /// Node values of `∫_{-1}^x f`, exact for the interpolant of `f`.
    pub fn antiderivative(&self, f: &Array1<f64>) -> Array1<f64> {
        let mut g = self.cumint.dot(f);
        let g0 = g[0];
        g.mapv_inplace(|v| v - g0);
        g
    }

    /// Evaluates the interpolant of `f` at `x` by the barycentric formula.
    pub fn interpolate(&self, f: &Array1<f64>, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..=self.n {
            let dx = x - self.nodes[j];
            if dx.abs() < 1e-14 {
                return Ok(f[j]);
            }
            let c = self.bary[j] / dx;
            num += c * f[j];
            den += c;
        }
        Ok(num / den)
    }

    /// Sup norm of the interpolant over the oversampled mesh. The mesh
    /// contains every grid node, so this always dominates the node max.
    pub fn c0_norm(&self, f: &Array1<f64>) -> f64 {
        let (lo, hi) = self.minmax_oversampled(f);
        lo.abs().max(hi.abs())
    }

    /// (min, max) of the interpolant over the oversampled mesh.
    pub fn minmax_oversampled(&self, f: &Array1<f64>) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in self.fine_mesh.iter() {
            let v = self.interpolate(f, x).expect("mesh point inside domain");
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Exponential damping of the top third of the Chebyshev spectrum.
    /// `strength` scales the damping exponent; 1.0 pushes the last mode to
    /// machine precision. Returns a dense matrix acting on node values.
    pub fn filter_matrix(&self, strength: f64) -> Array2<f64> {
        let n = self.n;
        let cutoff = (2 * n) / 3;
        let alpha = 36.0 * strength;
        let synth = synthesis_matrix(n, n);
        let mut damped = self.analysis.clone();
        for k in (cutoff + 1)..=n {
            let s = (k - cutoff) as f64 / (n - cutoff) as f64;
            let sigma = (-alpha * s.powi(8)).exp();
            for j in 0..=n {
                damped[[k, j]] *= sigma;
            }
        }
        synth.dot(&damped)
    }
}

/// `T_k(x_j)` for ascending nodes: `cos(k (N-j) π / N)`.
fn synthesis_matrix(n: usize, max_degree: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n + 1, max_degree + 1), |(j, k)| {
        ((k * (n - j)) as f64 * std::f64::consts::PI / nf).cos()
    })
}

/// Discrete Chebyshev transform: coefficients of the interpolant.
fn analysis_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n + 1, n + 1), |(k, j)| {
        let gamma_k = if k == 0 || k == n { 2.0 } else { 1.0 };
        let gamma_j = if j == 0 || j == n { 2.0 } else { 1.0 };
        let t = ((k * (n - j)) as f64 * std::f64::consts::PI / nf).cos();
        2.0 / (nf * gamma_k * gamma_j) * t
    })
}

/// Clenshaw–Curtis weights via exact moments of the Chebyshev basis:
/// `∫ T_k = 2/(1-k²)` for even k, 0 for odd k. Symmetrized so that the
/// left/right symmetry is exact in floating point.
fn quadrature_weights(n: usize, analysis: &Array2<f64>) -> Array1<f64> {
    let mut w = Array1::zeros(n + 1);
    for k in (0..=n).step_by(2) {
        let moment = 2.0 / (1.0 - (k * k) as f64);
        for j in 0..=n {
            w[j] += moment * analysis[[k, j]];
        }
    }
    for j in 0..=(n / 2) {
        let s = 0.5 * (w[j] + w[n - j]);
        w[j] = s;
        w[n - j] = s;
    }
    w
}

/// Coefficient-space antiderivative lifted back to node values.
fn cumulative_integral_matrix(n: usize, analysis: &Array2<f64>) -> Array2<f64> {
    // b_1 = c_0 - c_2/2, b_m = (c_{m-1} - c_{m+1})/(2m); degree grows by one.
    let mut b = Array2::zeros((n + 2, n + 1));
    b[[1, 0]] = 1.0;
    if n >= 2 {
        b[[1, 2]] = -0.5;
    }
    for m in 2..=(n + 1) {
        b[[m, m - 1]] = 1.0 / (2.0 * m as f64);
        if m + 1 <= n {
            b[[m, m + 1]] = -1.0 / (2.0 * m as f64);
        }
    }
    synthesis_matrix(n, n + 1).dot(&b.dot(analysis))
}
