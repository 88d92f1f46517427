//! Triangle rules, Gauss-Legendre nodes and adaptive Gauss-Kronrod integration.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature exhausted {intervals} subintervals (estimate {estimate:e}, error {error:e})")]
    BudgetExceeded { intervals: usize, estimate: f64, error: f64 },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one, so a rule is applied as `area * sum(w_i f(p_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> TriangleRule<T> {
    fn from_orbits(orbits: &[(f64, f64, f64, f64)]) -> Self {
        // (weight, a, b, c): all distinct permutations of (a, b, c)
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, a, b, c) in orbits {
            let mut perms: Vec<[f64; 3]> = vec![[a, b, c], [b, c, a], [c, a, b], [a, c, b], [c, b, a], [b, a, c]];
            perms.dedup_by(|x, y| x == y);
            let mut uniq: Vec<[f64; 3]> = Vec::new();
            for p in perms {
                if !uniq.contains(&p) {
                    uniq.push(p);
                }
            }
            for p in uniq {
                points.push(p.map(T::of));
                weights.push(T::of(w));
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Symmetric rule exact for polynomials of the given degree.
    ///
    /// Degrees up to 5 use the classical Dunavant tables; higher degrees fall
    /// back to a collapsed Gauss product rule.
    pub fn of_degree(degree: usize) -> Self {
        let third = 1.0 / 3.0;
        match degree {
            0 | 1 => Self::from_orbits(&[(1.0, third, third, third)]),
            2 => Self::from_orbits(&[(third, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0)]),
            3 | 4 => Self::from_orbits(&[
                (0.223381589678011, 0.108103018168070, 0.445948490915965, 0.445948490915965),
                (0.109951743655322, 0.816847572980459, 0.091576213509771, 0.091576213509771),
            ]),
            5 => Self::from_orbits(&[
                (0.225, third, third, third),
                (0.132394152788506, 0.059715871789770, 0.470142064105115, 0.470142064105115),
                (0.125939180544827, 0.797426985353087, 0.101286507323456, 0.101286507323456),
            ]),
            d => Self::collapsed_gauss(d.div_ceil(2) + 1),
        }
    }

    /// Duffy-collapsed tensor Gauss rule with `n*n` points, exact to total degree `2n-2`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre_f64(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let xi = x[i];
                let eta = (1.0 - xi) * x[j];
                points.push([1.0 - xi - eta, xi, eta].map(T::of));
                weights.push(T::of(2.0 * w[i] * w[j] * (1.0 - xi)));
            }
        }
        Self { points, weights }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed in double precision.
pub fn gauss_legendre_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_f64(n);
    (x.into_iter().map(T::of).collect(), w.into_iter().map(T::of).collect())
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
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<(T, T), QuadratureError> {
    let c = (a + b) * T::of(0.5);
    let h = (b - a) * T::of(0.5);
    let eval = |x: T| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { at: x.as_f64() })
        }
    };
    let fc = eval(c)?;
    let mut kron = fc * T::of(WGK[7]);
    let mut gauss = fc * T::of(WG[3]);
    for j in 0..7 {
        let dx = h * T::of(XGK[j]);
        let s = eval(c - dx)? + eval(c + dx)?;
        kron += s * T::of(WGK[j]);
        if j % 2 == 1 {
            gauss += s * T::of(WG[j / 2]);
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the total
/// estimate falls below `max(abs_tol, rel_tol * |I|)`. Integrable endpoint
/// singularities are fine because endpoints are never evaluated.
pub fn integrate_adaptive<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
) -> Result<T, QuadratureError> {
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok(T::zero());
    }
    let (v, e) = gk15(&f, a, b)?;
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: T = parts.iter().map(|p| p.2).sum();
        let err: T = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.partial_cmp(&parts[j].3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = parts[worst];
        let mid = (lo + hi) * T::of(0.5);
        if mid <= lo || mid >= hi || parts.len() >= MAX_INTERVALS {
            return Err(QuadratureError::BudgetExceeded {
                intervals: parts.len(),
                estimate: total.as_f64(),
                error: err.as_f64(),
            });
        }
        let left = gk15(&f, lo, mid)?;
        let right = gk15(&f, mid, hi)?;
        parts[worst] = (lo, mid, left.0, left.1);
        parts.push((mid, hi, right.0, right.1));
    }
}
