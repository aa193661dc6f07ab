//! Gaussian quadrature against the standard normal density.
//!
//! Rules are built from three-term recurrence coefficients with the
//! Golub–Welsch eigenvalue method, then each node is polished by Newton steps
//! on the orthonormal recurrence and weighted by its Christoffel number
//! `1 / sum_j p_j(x)^2`.
//!
//! Two rules are provided:
//!
//! * probabilists' Gauss–Hermite, for integrands smooth on the whole line;
//! * a half-range rule for the half-normal density on `[0, inf)`. Splitting
//!   `E[f(z)]` at zero and applying it on each side integrates functions with
//!   a kink at the origin (ReLU, leaky/piecewise-linear maps) to rounding
//!   error, where full-line Gauss–Hermite only converges like `1/n`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::{Mat, Side};

/// Nodes and probability weights (summing to one) of a Gaussian rule.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| w * f(*x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Recurrence coefficients of monic orthogonal polynomials,
/// `p_{j+1} = (x - alpha_j) p_j - beta_j p_{j-1}`, with `beta_0` the total mass.
struct Recurrence {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

/// Evaluates the orthonormal polynomials at `x`, returning
/// `(p_n(x), p_n'(x), sum_{j<n} p_j(x)^2)`.
fn orthonormal_eval(rec: &Recurrence, n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / rec.beta[0].sqrt();
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut christoffel = 0.0;
    for j in 0..n {
        christoffel += p * p;
        let sb_next = rec.beta[j + 1].sqrt();
        let sb = if j == 0 { 0.0 } else { rec.beta[j].sqrt() };
        let p_next = ((x - rec.alpha[j]) * p - sb * p_prev) / sb_next;
        let d_next = ((x - rec.alpha[j]) * d + p - sb * d_prev) / sb_next;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, christoffel)
}

fn rule_from_recurrence(rec: &Recurrence, n: usize) -> GaussRule {
    debug_assert!(rec.alpha.len() > n && rec.beta.len() > n);
    let jacobi = Mat::from_fn(n, n, |i, j| {
        if i == j {
            rec.alpha[i]
        } else if i == j + 1 {
            rec.beta[i].sqrt()
        } else if j == i + 1 {
            rec.beta[j].sqrt()
        } else {
            0.0
        }
    });
    let mut nodes = jacobi
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Jacobi matrix eigenvalues");
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = orthonormal_eval(rec, n, *x);
            if !(p.is_finite() && d.is_finite()) || d == 0.0 {
                break;
            }
            let step = p / d;
            if !step.is_finite() || step.abs() > 1e-6 * (1.0 + x.abs()) {
                break;
            }
            *x -= step;
        }
        let (_, _, christoffel) = orthonormal_eval(rec, n, *x);
        weights.push(if christoffel.is_finite() { 1.0 / christoffel } else { 0.0 });
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    GaussRule { nodes, weights }
}

fn hermite_recurrence(n: usize) -> Recurrence {
    Recurrence {
        alpha: vec![0.0; n + 1],
        beta: (0..=n).map(|j| if j == 0 { 1.0 } else { j as f64 }).collect(),
    }
}

fn legendre_rule(n: usize) -> GaussRule {
    let rec = Recurrence {
        alpha: vec![0.0; n + 1],
        beta: (0..=n)
            .map(|j| {
                if j == 0 {
                    1.0
                } else {
                    let j = j as f64;
                    j * j / (4.0 * j * j - 1.0)
                }
            })
            .collect(),
    };
    rule_from_recurrence(&rec, n)
}

/// Recurrence of the half-normal density via the discretized Stieltjes
/// procedure on a Gauss–Legendre discretization of `[0, upper]`.
fn half_normal_recurrence(n: usize) -> Recurrence {
    let upper = 3.0 * ((2 * n) as f64).sqrt() + 12.0;
    let base = legendre_rule(4 * n + 100);
    let density = |u: f64| (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * u * u).exp();
    let (xs, ws): (Vec<f64>, Vec<f64>) = base
        .nodes
        .iter()
        .zip(&base.weights)
        .map(|(t, w)| {
            let u = 0.5 * upper * (t + 1.0);
            // Legendre weights sum to one; the interval has length `upper`.
            (u, upper * w * density(u))
        })
        .unzip();

    let mut alpha = Vec::with_capacity(n + 1);
    let mut beta = Vec::with_capacity(n + 1);
    let mass: f64 = ws.iter().sum();
    beta.push(mass);
    let mut q_prev = vec![0.0; xs.len()];
    let mut q: Vec<f64> = vec![1.0 / mass.sqrt(); xs.len()];
    for j in 0..=n {
        let a: f64 = xs.iter().zip(&ws).zip(&q).map(|((x, w), qi)| w * x * qi * qi).sum();
        alpha.push(a);
        if j == n {
            break;
        }
        let sb = if j == 0 { 0.0 } else { beta[j].sqrt() };
        let mut r: Vec<f64> = xs
            .iter()
            .zip(&q)
            .zip(&q_prev)
            .map(|((x, qi), qp)| (x - a) * qi - sb * qp)
            .collect();
        let b: f64 = r.iter().zip(&ws).map(|(ri, w)| w * ri * ri).sum();
        beta.push(b);
        let sb_next = b.sqrt();
        for ri in &mut r {
            *ri /= sb_next;
        }
        q_prev = std::mem::replace(&mut q, r);
    }
    Recurrence { alpha, beta }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum RuleKind {
    Hermite,
    HalfNormal,
}

fn cached(kind: RuleKind, n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<(RuleKind, usize), Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().unwrap().get(&(kind, n)) {
        return rule.clone();
    }
    let rule = Arc::new(match kind {
        RuleKind::Hermite => rule_from_recurrence(&hermite_recurrence(n), n),
        RuleKind::HalfNormal => rule_from_recurrence(&half_normal_recurrence(n), n),
    });
    cache.lock().unwrap().insert((kind, n), rule.clone());
    rule
}

/// Probabilists' Gauss–Hermite rule with `n` nodes: `E[f(z)] ~ sum w_i f(x_i)`.
pub fn hermite_rule(n: usize) -> Arc<GaussRule> {
    cached(RuleKind::Hermite, n)
}

/// Gauss rule for the half-normal density `2 phi(u)` on `[0, inf)`.
pub fn half_normal_rule(n: usize) -> Arc<GaussRule> {
    cached(RuleKind::HalfNormal, n)
}

/// `E[f(z)]` for `z ~ N(0, 1)` using `nodes` quadrature nodes in total.
///
/// With `split_at_zero` the two half-lines are integrated separately with
/// `nodes / 2` half-range nodes each.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, nodes: usize, split_at_zero: bool) -> f64 {
    if split_at_zero {
        let rule = half_normal_rule((nodes / 2).max(1));
        0.5 * rule.expect(|u| f(u) + f(-u))
    } else {
        hermite_rule(nodes).expect(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_moment(j: u32) -> f64 {
        // E[z^j] for z ~ N(0,1).
        if j % 2 == 1 {
            return 0.0;
        }
        (1..j).step_by(2).map(|v| v as f64).product()
    }

    fn half_normal_moment(j: u32) -> f64 {
        // E[|z|^j] from E[|z|^0] = 1, E[|z|] = sqrt(2/pi) and E|z|^{j+2} = (j+1) E|z|^j.
        let mut value = if j.is_multiple_of(2) { 1.0 } else { (2.0 / std::f64::consts::PI).sqrt() };
        let mut k = j % 2;
        while k < j {
            value *= (k + 1) as f64;
            k += 2;
        }
        value
    }

    #[test]
    fn hermite_integrates_polynomials() {
        let rule = hermite_rule(20);
        for j in 0..30u32 {
            let got = rule.expect(|x| x.powi(j as i32));
            let want = double_factorial_moment(j);
            assert!(
                (got - want).abs() <= 1e-11 * half_normal_moment(j).max(1.0),
                "degree {j}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn hermite_200_nodes_is_well_formed() {
        let rule = hermite_rule(200);
        assert_eq!(rule.len(), 200);
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((rule.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((rule.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        for pair in rule.nodes.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn half_normal_integrates_polynomials() {
        for n in [16usize, 50, 100] {
            let rule = half_normal_rule(n);
            assert!(rule.nodes.iter().all(|&x| x > 0.0));
            for j in 0..(2 * n.min(20)) as u32 {
                let got = rule.expect(|x| x.powi(j as i32));
                let want = half_normal_moment(j);
                assert!(
                    (got - want).abs() <= 1e-11 * want.max(1.0),
                    "n={n} degree {j}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn split_rule_is_exact_for_relu_mean() {
        let got = normal_expectation(|z| z.max(0.0), 200, true);
        assert!((got - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }
}
