//! Closed-form threshold quantities.
//!
//! Everything here is a pure function. Expectations over a law are exact
//! finite sums over its size atoms; the density enters only through
//! `E[(1 - Q)^e]`, which every [`DensityLaw`](crate::laws::DensityLaw) computes
//! in closed form.

use serde::Serialize;

use crate::laws::{pow_complement, PreparedLaw};
use crate::{Error, Result};

/// Probability that a fixed vertex of a size-`x`, density-`q` community has at
/// least one neighbour inside it: `1 - (1-q)^(x-1)+`.
pub fn h(x: u64, q: f64) -> f64 {
    1.0 - pow_complement(q, x.saturating_sub(1))
}

/// Probability that both vertices of a fixed pair inside a size-`x`,
/// density-`q` community have a neighbour inside it.
pub fn h1(x: u64, q: f64) -> f64 {
    let r = 1.0 - pow_complement(q, x.saturating_sub(2));
    q + (1.0 - q) * r * r
}

/// The `kappa`-type moments of a law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    /// `E[X h(X,Q)]`, averaged over the pattern for non-iid laws.
    pub kappa: f64,
    /// Same with `X` replaced by `min(X, n)`.
    pub kappa_truncated: f64,
    /// `E[Q 1{X >= 2}]`.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdQuantities {
    pub kappa: f64,
    pub kappa_truncated: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub p_pred: f64,
}

fn x_h_moment(law: &PreparedLaw, truncate_at: Option<u64>) -> f64 {
    law.expectation(truncate_at, |x, q| {
        x as f64 * (1.0 - q.mean_pow_complement(x.saturating_sub(1)))
    })
}

/// `kappa`, its truncation at `n` (when given) and `alpha`.
pub fn kappa(law: &PreparedLaw, n: Option<u64>) -> Moments {
    let kappa = x_h_moment(law, None);
    let kappa_truncated = match n {
        Some(n) => x_h_moment(law, Some(n)),
        None => kappa,
    };
    let alpha = law.expectation(None, |x, q| if x >= 2 { q.mean() } else { 0.0 });
    Moments {
        kappa,
        kappa_truncated,
        alpha,
    }
}

/// Predicted limit of the connectivity probability at threshold coordinate `lambda`.
pub fn p_connected(lambda: f64) -> f64 {
    (-lambda.exp()).exp()
}

/// `lambda = ln n - (m/n) kappa_truncated` and the predicted connectivity probability.
pub fn lambda_mn(n: u64, m: u64, law: &PreparedLaw) -> ThresholdQuantities {
    let mo = kappa(law, Some(n));
    let lambda = lambda_from(n, m, mo.kappa_truncated);
    ThresholdQuantities {
        kappa: mo.kappa,
        kappa_truncated: mo.kappa_truncated,
        alpha: mo.alpha,
        lambda,
        p_pred: p_connected(lambda),
    }
}

pub(crate) fn lambda_from(n: u64, m: u64, kappa_truncated: f64) -> f64 {
    (n as f64).ln() - m as f64 / n as f64 * kappa_truncated
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MForC {
    pub m: u64,
    /// Target coordinate.
    pub c: f64,
    /// Coordinate realized by the rounded `m`; `|lambda - c| <= kappa_truncated / n`.
    pub lambda: f64,
    pub kappa_truncated: f64,
}

/// Community count whose threshold coordinate is closest to `c`.
pub fn m_for_c(n: u64, c: f64, law: &PreparedLaw) -> Result<MForC> {
    let kt = kappa(law, Some(n)).kappa_truncated;
    if kt <= 0.0 {
        return Err(Error::KappaZero);
    }
    let exact = n as f64 * ((n as f64).ln() - c) / kt;
    if !exact.is_finite() || exact < -0.5 {
        return Err(Error::Domain(format!(
            "c = {c} exceeds ln n = {}; no community count reaches it",
            (n as f64).ln()
        )));
    }
    let m = exact.round() as u64;
    Ok(MForC {
        m,
        c,
        lambda: lambda_from(n, m, kt),
        kappa_truncated: kt,
    })
}

/// Probability that one community with `x` uniformly placed vertices and
/// density `q` has no edge between `[k]` and `[n] \ [k]`.
///
/// Sums the hypergeometric overlap law, built in log space by its ratio
/// recurrence and normalized, against `(1-q)^(j(x-j))`.
pub fn qk_exact(n: u64, k: u64, x: u64, q: f64) -> Result<f64> {
    if k > n || x > n {
        return Err(Error::Domain(format!(
            "qk requires k <= n and x <= n (n={n}, k={k}, x={x})"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q = {q} outside [0, 1]")));
    }
    if x <= 1 {
        return Ok(1.0);
    }
    let lo = x.saturating_sub(n - k);
    let hi = k.min(x);
    // log H(j) - log H(lo), via H(j+1)/H(j) = (k-j)(x-j) / ((j+1)(n-k-x+j+1)).
    let mut logs = Vec::with_capacity((hi - lo + 1) as usize);
    let mut acc = 0.0f64;
    logs.push(acc);
    for j in lo..hi {
        let num = ((k - j) as f64).ln() + ((x - j) as f64).ln();
        let den = ((j + 1) as f64).ln() + ((n - k + j + 1 - x) as f64).ln();
        acc += num - den;
        logs.push(acc);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut hit = 0.0;
    for (offset, &l) in logs.iter().enumerate() {
        let j = lo + offset as u64;
        let w = (l - top).exp();
        total += w;
        hit += w * pow_complement(q, j * (x - j));
    }
    Ok(hit / total)
}

fn check_bound_domain(n: u64, k: u64, x: u64, q: f64) -> Result<()> {
    if k < 1 || 2 * k > n || x < 2 || x > n || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!(
            "bounds require 1 <= k <= n/2, 2 <= x <= n, 0 <= q <= 1 (n={n}, k={k}, x={x}, q={q})"
        )));
    }
    Ok(())
}

/// `1 - 2 k(n-k) / (n(n-1)) q`.
pub fn qk_bound_a(n: u64, k: u64, x: u64, q: f64) -> Result<f64> {
    check_bound_domain(n, k, x, q)?;
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 * k * (n - k) / (n * (n - 1.0)) * q)
}

/// `1 - ((k/n) x - R1 - R2) h(x,q)` with `R1 = k^2/(n-k)^2` and
/// `R2 = exp(-(k/n) x) - 1 + (k/n) x`.
pub fn qk_bound_b(n: u64, k: u64, x: u64, q: f64) -> Result<f64> {
    check_bound_domain(n, k, x, q)?;
    let (nf, kf) = (n as f64, k as f64);
    let t = kf / nf * x as f64;
    let r1 = kf * kf / ((nf - kf) * (nf - kf));
    let r2 = (-t).exp_m1() + t;
    Ok(1.0 - (t - r1 - r2) * h(x, q))
}

/// `P{a fixed vertex gets an edge from one community} = kappa_truncated / n`.
pub fn p_degree_positive(n: u64, law: &PreparedLaw) -> f64 {
    kappa(law, Some(n)).kappa_truncated / n as f64
}

/// `P{both vertices of a fixed pair get an edge from one community}`
/// `= E[(X')_2 / (n)_2 h1(X', Q)]` with `X' = min(X, n)`.
pub fn p_pair_degree_positive(n: u64, law: &PreparedLaw) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nn = n as f64 * (n - 1) as f64;
    law.expectation(Some(n), |x, q| {
        if x < 2 {
            return 0.0;
        }
        // h1 = 1 - 2(1-q)^(1+s) + (1-q)^(1+2s), s = (x-2)+
        let s = x - 2;
        let e_h1 = 1.0 - 2.0 * q.mean_pow_complement(1 + s) + q.mean_pow_complement(1 + 2 * s);
        (x as f64 * (x - 1) as f64) / nn * e_h1
    })
}

pub fn poisson_pmf(mean: f64, j: u64) -> f64 {
    (-mean + j as f64 * mean.ln() - libm::lgamma(j as f64 + 1.0)).exp()
}

/// `E[(Y)_r] = mean^r` for `Y ~ Poisson(mean)`.
pub fn poisson_factorial_moment(mean: f64, r: u32) -> f64 {
    mean.powi(r as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{CommunityLaw, DensityLaw, SizeLaw};

    fn iid(x: u64, q: f64) -> PreparedLaw {
        CommunityLaw::iid(SizeLaw::Point { value: x }, DensityLaw::Point { value: q })
            .prepare()
            .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn h_values() {
        assert_eq!(h(1, 0.7), 0.0);
        assert_eq!(h(0, 0.7), 0.0);
        assert_eq!(h(1, 1.0), 0.0);
        assert_eq!(h(2, 1.0), 1.0);
        assert!(close(h(2, 0.5), 0.5, 1e-15));
        assert!(close(h(3, 0.5), 0.75, 1e-15));
    }

    #[test]
    fn h1_values() {
        assert!(close(h1(2, 0.5), 0.5, 1e-15));
        assert!(close(h1(3, 0.5), 0.625, 1e-15));
        assert!(h1(3, 0.5) <= h(3, 0.5));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&iid(2, 1.0), None).kappa, 2.0);
        assert_eq!(kappa(&iid(1, 0.9), None).kappa, 0.0);
        assert!(close(kappa(&iid(3, 0.5), None).kappa, 2.25, 1e-15));
        let pattern = CommunityLaw::noniid(vec![
            (
                SizeLaw::Point { value: 2 },
                DensityLaw::Point { value: 1.0 },
            ),
            (
                SizeLaw::Point { value: 1 },
                DensityLaw::Point { value: 1.0 },
            ),
        ])
        .prepare()
        .unwrap();
        assert_eq!(kappa(&pattern, None).kappa, 1.0);
    }

    #[test]
    fn kappa_truncation_and_alpha() {
        let law = iid(25, 1.0);
        let mo = kappa(&law, Some(10));
        assert_eq!(mo.kappa, 25.0);
        assert_eq!(mo.kappa_truncated, 10.0);
        assert_eq!(mo.alpha, 1.0);
        let mo = kappa(&iid(1, 0.5), Some(10));
        assert_eq!(mo.alpha, 0.0);
    }

    #[test]
    fn kappa_with_uniform_density() {
        // X = 3, Q ~ U(0,1): E[(1-Q)^2] = 1/3, kappa = 3 (1 - 1/3) = 2.
        let law = CommunityLaw::iid(
            SizeLaw::Point { value: 3 },
            DensityLaw::Uniform { a: 0.0, b: 1.0 },
        )
        .prepare()
        .unwrap();
        assert!(close(kappa(&law, None).kappa, 2.0, 1e-14));
        assert!(close(kappa(&law, None).alpha, 0.5, 1e-14));
    }

    #[test]
    fn lambda_examples() {
        let law = iid(2, 1.0);
        let t = lambda_mn(1000, 3454, &law);
        assert!(close(t.lambda, 1000f64.ln() - 6.908, 1e-12));
        assert!(close(t.lambda, -0.000245, 1e-6));
        assert!(close(t.p_pred, 0.3680, 1e-4));
        let t = lambda_mn(1000, 0, &law);
        assert!(close(t.lambda, 6.907755, 1e-6));
        assert!(t.p_pred < 1e-300);
        assert!(close(p_connected(0.0), 0.367879, 1e-6));
    }

    #[test]
    fn m_for_c_examples() {
        assert_eq!(m_for_c(1000, 0.0, &iid(2, 1.0)).unwrap().m, 3454);
        assert_eq!(m_for_c(1000, 1000f64.ln(), &iid(2, 1.0)).unwrap().m, 0);
        let r = m_for_c(10_000, 0.0, &iid(3, 0.5)).unwrap();
        assert_eq!(r.m, 40935);
        assert!((r.lambda - r.c).abs() <= r.kappa_truncated / 10_000.0);
        assert!(matches!(
            m_for_c(1000, 0.0, &iid(1, 1.0)),
            Err(Error::KappaZero)
        ));
        assert!(matches!(
            m_for_c(1000, 10.0, &iid(2, 1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn qk_examples() {
        for n in 1..8 {
            for k in 0..=n {
                assert_eq!(qk_exact(n, k, 1, 0.3).unwrap(), 1.0);
                assert_eq!(qk_exact(n, k, 0, 0.3).unwrap(), 1.0);
            }
        }
        assert!(close(qk_exact(4, 1, 2, 1.0).unwrap(), 0.5, 1e-15));
        for n in 2..12 {
            for k in 1..n {
                assert_eq!(qk_exact(n, k, n, 1.0).unwrap(), 0.0);
            }
        }
        assert!(qk_exact(4, 5, 2, 0.5).is_err());
        assert!(qk_exact(4, 1, 5, 0.5).is_err());
    }

    #[test]
    fn qk_is_stable_at_large_n() {
        // Symmetric in the bipartition and a proper probability at n = 10^7.
        let a = qk_exact(10_000_000, 3_000_000, 50, 0.2).unwrap();
        let b = qk_exact(10_000_000, 7_000_000, 50, 0.2).unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert!(close(a, b, 1e-12));
        assert_eq!(qk_exact(10_000_000, 5, 40, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn bound_examples() {
        assert!(close(qk_bound_a(4, 1, 2, 1.0).unwrap(), 0.5, 1e-15));
        let b = qk_bound_b(4, 1, 2, 1.0).unwrap();
        let expect = 1.0 - (0.5 - 1.0 / 9.0 - ((-0.5f64).exp() - 0.5));
        assert!(close(b, expect, 1e-15));
        assert!(close(b, 0.717_64, 1e-5));
        assert_eq!(qk_bound_a(10, 3, 4, 0.0).unwrap(), 1.0);
        assert_eq!(qk_exact(10, 3, 4, 0.0).unwrap(), 1.0);
        assert!(qk_bound_a(4, 3, 2, 0.5).is_err());
        assert!(qk_bound_b(4, 0, 2, 0.5).is_err());
        assert!(qk_bound_b(4, 1, 1, 0.5).is_err());
    }

    #[test]
    fn degree_probabilities() {
        assert_eq!(p_degree_positive(4, &iid(2, 1.0)), 0.5);
        assert_eq!(p_degree_positive(7, &iid(1, 0.4)), 0.0);
        assert!(close(
            p_pair_degree_positive(4, &iid(2, 1.0)),
            1.0 / 6.0,
            1e-15
        ));
        assert_eq!(p_pair_degree_positive(9, &iid(1, 0.3)), 0.0);
        assert!(close(
            p_pair_degree_positive(10, &iid(3, 0.5)),
            6.0 / 90.0 * 0.625,
            1e-15
        ));
    }

    #[test]
    fn pair_probability_expansion_matches_h1_for_tables() {
        let law = CommunityLaw::iid(
            SizeLaw::Pmf {
                entries: vec![(2, 0.2), (5, 0.3), (9, 0.5)],
            },
            DensityLaw::Pmf {
                entries: vec![(0.1, 0.5), (0.7, 0.5)],
            },
        )
        .prepare()
        .unwrap();
        let n = 20u64;
        let mut direct = 0.0;
        for (x, px) in [(2u64, 0.2), (5, 0.3), (9, 0.5)] {
            for (q, pq) in [(0.1, 0.5), (0.7, 0.5)] {
                direct += px * pq * (x * (x - 1)) as f64 / (n * (n - 1)) as f64 * h1(x, q);
            }
        }
        assert!(close(p_pair_degree_positive(n, &law), direct, 1e-15));
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_factorial_moment(1.0, 3), 1.0);
        assert!(close(poisson_pmf(1.0, 0), (-1.0f64).exp(), 1e-15));
        assert!(close(
            poisson_factorial_moment(1f64.exp(), 2),
            7.389056,
            1e-6
        ));
        let s: f64 = (0..60).map(|j| poisson_pmf(3.5, j)).sum();
        assert!(close(s, 1.0, 1e-12));
    }
}
