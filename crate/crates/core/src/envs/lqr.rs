//! Linear-quadratic regulator toy with a closed-form optimal controller.
//!
//! ```text
//! x' = A x + B u,   A = rho * [[cos w, -sin w], [sin w, cos w]],   B = [0, b]^T
//! R(x, u) = -(x^T Q x + u^T Rc u),   Q = I,  Rc = r I
//! ```
//!
//! Exact discrete-time dynamics, 50-step episodes, `u` in `[-U_MAX, U_MAX]`.
//! The default initial state is uniform in `[-1, 1]^2`; [`LqrInit::Fixed`]
//! always starts from [`FIXED_START`].
//!
//! The optimal controller for the discounted infinite-horizon problem is
//! `u = -K x` with `K = gamma (Rc + gamma B^T P B)^-1 B^T P A`, where `P` is
//! the fixed point of
//! `P = Q + gamma A^T P A - gamma A^T P B K`.

use ndarray::{array, Array1, Array2};
use rand::Rng as _;

use super::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng;

pub const RHO: f64 = 1.0;
pub const OMEGA: f64 = 0.1;
pub const INPUT_GAIN: f64 = 0.1;
pub const CONTROL_COST: f64 = 5.0;
pub const U_MAX: f64 = 0.5;
pub const HORIZON: usize = 50;
pub const DISCOUNT: f64 = 0.99;
pub const FIXED_START: [f64; 2] = [1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LqrInit {
    Uniform,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct Lqr {
    spec: EnvSpec,
    a: Array2<f64>,
    b: Array2<f64>,
    q: Array2<f64>,
    r: Array2<f64>,
    init: LqrInit,
    gain: Array2<f64>,
}

/// Converged discounted Riccati solution.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: Array2<f64>,
    pub k: Array2<f64>,
    pub iterations: usize,
}

impl Lqr {
    pub fn new() -> Self {
        Self::with_init(LqrInit::Uniform)
    }

    pub fn with_init(init: LqrInit) -> Self {
        let (s, c) = OMEGA.sin_cos();
        let a = array![[c, -s], [s, c]] * RHO;
        let b = array![[0.0], [INPUT_GAIN]];
        let q = Array2::eye(2);
        let r = Array2::eye(1) * CONTROL_COST;
        let gain = riccati_gain(&a, &b, &q, &r, DISCOUNT, 1e-10, 1_000_000)
            .expect("default LQR system is stabilisable")
            .k;
        Self {
            spec: EnvSpec::new("lqr", 2, vec![-U_MAX], vec![U_MAX], HORIZON),
            a,
            b,
            q,
            r,
            init,
            gain,
        }
    }

    /// Discount the controller's gain was solved for.
    pub fn discount(&self) -> f64 {
        DISCOUNT
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    /// Optimal feedback gain `K` for [`DISCOUNT`].
    pub fn gain(&self) -> &Array2<f64> {
        &self.gain
    }

    /// `-K x`, unclipped.
    pub fn optimal_action(&self, state: &[f64]) -> Vec<f64> {
        let x = Array1::from(state.to_vec());
        (-self.gain.dot(&x)).to_vec()
    }
}

impl Default for Lqr {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Lqr {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        match self.init {
            LqrInit::Fixed => FIXED_START.to_vec(),
            LqrInit::Uniform => {
                let mut rng = rng::from_seed(seed);
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
            }
        }
    }

    fn transition(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        for (i, out) in next.iter_mut().enumerate() {
            let mut v = 0.0;
            for (j, s) in state.iter().enumerate() {
                v += self.a[[i, j]] * s;
            }
            for (j, u) in action.iter().enumerate() {
                v += self.b[[i, j]] * u;
            }
            *out = v;
        }
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        -(quad_form(&self.q, state) + quad_form(&self.r, action))
    }

    fn as_lqr(&self) -> Option<&Lqr> {
        Some(self)
    }
}

fn quad_form(m: &Array2<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            acc += vi * m[[i, j]] * vj;
        }
    }
    acc
}

/// Solves `m x = rhs` for small dense systems by Gaussian elimination with
/// partial pivoting.
fn solve(m: &Array2<f64>, rhs: &Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut x = rhs.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            for k in 0..x.ncols() {
                x.swap([col, k], [pivot, k]);
            }
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            for k in 0..x.ncols() {
                x[[row, k]] -= f * x[[col, k]];
            }
        }
    }
    for row in 0..n {
        let d = a[[row, row]];
        x.row_mut(row).mapv_inplace(|v| v / d);
    }
    Some(x)
}

/// One application of the discounted Riccati map; returns `(P', K(P))`.
pub(crate) fn riccati_step(
    a: &Array2<f64>,
    b: &Array2<f64>,
    q: &Array2<f64>,
    r: &Array2<f64>,
    gamma: f64,
    p: &Array2<f64>,
) -> Option<(Array2<f64>, Array2<f64>)> {
    let bt_p = b.t().dot(p);
    let lhs = r + &(bt_p.dot(b) * gamma);
    let k = solve(&lhs, &(bt_p.dot(a) * gamma))?;
    let at_p = a.t().dot(p);
    let next = q + &(at_p.dot(a) * gamma) - &(at_p.dot(b).dot(&k) * gamma);
    Some((next, k))
}

/// Iterates the discounted Riccati recursion from `P = Q` to a fixed point.
pub fn riccati_gain(
    a: &Array2<f64>,
    b: &Array2<f64>,
    q: &Array2<f64>,
    r: &Array2<f64>,
    gamma: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    let mut p = q.clone();
    for it in 1..=max_iter {
        let (next, _) = riccati_step(a, b, q, r, gamma, &p)
            .ok_or_else(|| Error::Numerical("singular Riccati system".into()))?;
        let delta = (&next - &p).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        p = next;
        if !delta.is_finite() {
            return Err(Error::Numerical("Riccati recursion diverged".into()));
        }
        if delta < tolerance {
            let (_, k) = riccati_step(a, b, q, r, gamma, &p)
                .ok_or_else(|| Error::Numerical("singular Riccati system".into()))?;
            return Ok(RiccatiSolution { p, k, iterations: it });
        }
    }
    Err(Error::Numerical(format!(
        "Riccati recursion did not converge in {max_iter} iterations"
    )))
}

/// `-K x` for the LQR environment; any other environment is unsupported.
pub fn lqr_optimal_action(env: &dyn Environment, state: &[f64]) -> Result<Vec<f64>> {
    let lqr = env.as_lqr().ok_or_else(|| {
        Error::Unsupported(format!(
            "lqr_optimal_action on non-LQR environment `{}`",
            env.spec().name
        ))
    })?;
    if state.len() != lqr.spec.state_dim {
        return Err(Error::shape("lqr state", lqr.spec.state_dim, state.len()));
    }
    Ok(lqr.optimal_action(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Pendulum;

    #[test]
    fn origin_is_fixed_point_with_zero_reward() {
        let env = Lqr::new();
        let (next, r) = env.step(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.0]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reward_is_negative_quadratic() {
        let env = Lqr::new();
        assert_eq!(env.reward_fn(&[1.0, 0.0], &[0.0]).unwrap(), -1.0);
        let r = env.reward_fn(&[1.0, -2.0], &[0.3]).unwrap();
        assert!((r + (1.0 + 4.0 + CONTROL_COST * 0.09)).abs() < 1e-12);
    }

    #[test]
    fn fixed_init_ignores_seed() {
        let env = Lqr::with_init(LqrInit::Fixed);
        assert_eq!(env.reset(1), FIXED_START.to_vec());
        assert_eq!(env.reset(u64::MAX), FIXED_START.to_vec());
    }

    #[test]
    fn optimal_action_at_origin_is_zero() {
        let env = Lqr::new();
        assert_eq!(lqr_optimal_action(&env, &[0.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn optimal_action_unsupported_elsewhere() {
        let env = Pendulum::new();
        assert!(matches!(
            lqr_optimal_action(&env, &[0.0, 0.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn riccati_fixed_point_residual() {
        let env = Lqr::new();
        let sol = riccati_gain(env.a(), env.b(), env.q(), env.r(), DISCOUNT, 1e-10, 1_000_000)
            .unwrap();
        let (next, k) = riccati_step(env.a(), env.b(), env.q(), env.r(), DISCOUNT, &sol.p).unwrap();
        let residual = (&next - &sol.p).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(residual < 1e-8, "residual {residual}");
        assert_eq!(&k, env.gain());
    }

    #[test]
    fn riccati_matches_scalar_closed_form() {
        // Scalar: p = q + g a^2 p - g^2 a^2 b^2 p^2 / (r + g b^2 p)
        // -> g b^2 p^2 + (r (1 - g a^2) - g b^2 q) p - q r = 0
        let (a, b, q, r, g) = (1.1f64, 0.5f64, 2.0f64, 0.3f64, 0.95f64);
        let qa = g * b * b;
        let qb = r * (1.0 - g * a * a) - g * b * b * q;
        let qc = -q * r;
        let p = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let sol = riccati_gain(
            &array![[a]],
            &array![[b]],
            &array![[q]],
            &array![[r]],
            g,
            1e-12,
            100_000,
        )
        .unwrap();
        assert!((sol.p[[0, 0]] - p).abs() < 1e-9);
        let k = g * b * p * a / (r + g * b * b * p);
        assert!((sol.k[[0, 0]] - k).abs() < 1e-9);
    }

    #[test]
    fn linear_solver() {
        let m = array![[0.0, 2.0], [3.0, 1.0]];
        let x = solve(&m, &array![[4.0], [5.0]]).unwrap();
        assert!((x[[0, 0]] - 1.0).abs() < 1e-14);
        assert!((x[[1, 0]] - 2.0).abs() < 1e-14);
    }
}
