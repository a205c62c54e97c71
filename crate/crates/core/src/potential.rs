//! Pair potentials with closed-form derivatives up to third order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form callback returning `[φ, φ', φ'', φ''']` at `r`.
pub type DerivativeFn = dyn Fn(f64) -> [f64; 4] + Send + Sync;

/// A user-supplied potential. Only constructible from code.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub eval: Arc<DerivativeFn>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPotential({})", self.name)
    }
}

/// Smooth pair interaction φ on (0, ∞).
///
/// Both built-in families are normalized to a minimum of depth −1 at r = 1.
#[derive(Debug, Clone)]
pub enum PairPotential {
    /// φ(r) = r⁻¹² − 2r⁻⁶.
    LennardJones,
    /// φ(r) = e^{−2a(r−1)} − 2e^{−a(r−1)}.
    Morse { a: f64 },
    Custom(CustomPotential),
}

impl Default for PairPotential {
    fn default() -> Self {
        PairPotential::LennardJones
    }
}

impl PairPotential {
    pub fn morse(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Argument(format!("Morse stiffness must be positive, got {a}")));
        }
        Ok(PairPotential::Morse { a })
    }

    /// All four derivatives at once. No domain check.
    fn all(&self, r: f64) -> [f64; 4] {
        match self {
            PairPotential::LennardJones => {
                let i = 1.0 / r;
                let i2 = i * i;
                let i6 = i2 * i2 * i2;
                let i7 = i6 * i;
                let i8 = i7 * i;
                let i9 = i8 * i;
                let i12 = i6 * i6;
                [
                    i12 - 2.0 * i6,
                    -12.0 * i12 * i + 12.0 * i7,
                    156.0 * i12 * i2 - 84.0 * i8,
                    -2184.0 * i12 * i2 * i + 672.0 * i9,
                ]
            }
            PairPotential::Morse { a } => {
                let e1 = (-a * (r - 1.0)).exp();
                let e2 = e1 * e1;
                let a2 = a * a;
                [
                    e2 - 2.0 * e1,
                    -2.0 * a * e2 + 2.0 * a * e1,
                    4.0 * a2 * e2 - 2.0 * a2 * e1,
                    -8.0 * a2 * a * e2 + 2.0 * a2 * a * e1,
                ]
            }
            PairPotential::Custom(c) => (c.eval)(r),
        }
    }

    /// `d^order φ / dr^order` at `r`.
    pub fn eval(&self, r: f64, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::Argument(format!("derivative order {order} not in 0..=3")));
        }
        Ok(self.derivs(r)?[order])
    }

    /// `[φ, φ', φ'', φ''']` at `r`, checking the domain.
    pub fn derivs(&self, r: f64) -> Result<[f64; 4]> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("pair distance must be positive, got {r}")));
        }
        let d = self.all(r);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("potential not finite at r = {r}")));
        }
        Ok(d)
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.all(r)[0]
    }
    pub fn d1(&self, r: f64) -> f64 {
        self.all(r)[1]
    }
    pub fn d2(&self, r: f64) -> f64 {
        self.all(r)[2]
    }
    pub fn d3(&self, r: f64) -> f64 {
        self.all(r)[3]
    }

    /// Largest discrepancy between each analytic derivative (orders 1..3) and a
    /// central difference of the next-lower order. Relative, with a unit floor
    /// on the denominator so derivatives that vanish (φ'(1) = 0) don't blow up.
    pub fn fd_consistency(&self, r: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) || !(r - 3.0 * h > 0.0) {
            return Err(Error::Argument(format!(
                "stencil r = {r}, h = {h} leaves the domain (need r - 3h > 0)"
            )));
        }
        let lo = self.derivs(r - h)?;
        let hi = self.derivs(r + h)?;
        let mid = self.derivs(r)?;
        let mut worst = 0.0f64;
        for k in 1..4 {
            let fd = (hi[k - 1] - lo[k - 1]) / (2.0 * h);
            let rel = (fd - mid[k]).abs() / mid[k].abs().max(1.0);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PairPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairPotential::LennardJones => write!(f, "lj"),
            PairPotential::Morse { a } => write!(f, "morse:a={a}"),
            PairPotential::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for PairPotential {
    type Err = Error;

    /// Accepts `lj` and `morse:a=<float>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("lj") {
            return Ok(PairPotential::LennardJones);
        }
        if let Some(rest) = s.strip_prefix("morse:") {
            let val = rest
                .strip_prefix("a=")
                .ok_or_else(|| Error::Argument(format!("expected morse:a=<float>, got {s}")))?;
            let a: f64 = val
                .parse()
                .map_err(|_| Error::Argument(format!("bad Morse stiffness {val:?}")))?;
            return PairPotential::morse(a);
        }
        Err(Error::Argument(format!("unknown potential {s:?} (use lj or morse:a=<float>)")))
    }
}

impl Serialize for PairPotential {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PairPotential {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (0.5f64.ln() + (4.0f64.ln() - 0.5f64.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    #[test]
    fn lj_values_at_minimum() {
        let lj = PairPotential::LennardJones;
        assert_eq!(lj.eval(1.0, 0).unwrap(), -1.0);
        assert_eq!(lj.eval(1.0, 1).unwrap(), 0.0);
        assert_eq!(lj.eval(1.0, 2).unwrap(), 72.0);
        assert_eq!(lj.eval(1.0, 3).unwrap(), -2184.0 + 672.0);
    }

    #[test]
    fn lj_second_derivative_matches_difference_of_first() {
        let lj = PairPotential::LennardJones;
        let h = 1e-6;
        let fd = (lj.d1(1.0 + h) - lj.d1(1.0 - h)) / (2.0 * h);
        assert!((fd - 72.0).abs() < 1e-5, "{fd}");
    }

    #[test]
    fn morse_depth_and_minimum() {
        let m = PairPotential::morse(3.0).unwrap();
        assert_eq!(m.eval(1.0, 0).unwrap(), -1.0);
        assert_eq!(m.eval(1.0, 1).unwrap(), 0.0);
        for a in [0.5, 1.0, 6.0] {
            assert_eq!(PairPotential::morse(a).unwrap().d1(1.0), 0.0);
        }
    }

    #[test]
    fn eval_rejects_bad_input() {
        let lj = PairPotential::LennardJones;
        assert!(matches!(lj.eval(0.0, 0), Err(Error::Domain(_))));
        assert!(matches!(lj.eval(-1.0, 1), Err(Error::Domain(_))));
        assert!(matches!(lj.eval(1.0, 4), Err(Error::Argument(_))));
        assert!(PairPotential::morse(0.0).is_err());
    }

    #[test]
    fn fd_consistency_examples() {
        let lj = PairPotential::LennardJones;
        assert!(lj.fd_consistency(1.1, 1e-5).unwrap() < 1e-6);
        let m = PairPotential::morse(3.0).unwrap();
        assert!(m.fd_consistency(2.0, 1e-5).unwrap() < 1e-6);
        assert!(matches!(lj.fd_consistency(1.0, 0.5), Err(Error::Argument(_))));
    }

    #[test]
    fn fd_consistency_on_log_grid() {
        let pots = [PairPotential::LennardJones, PairPotential::morse(3.0).unwrap()];
        for p in &pots {
            for r in log_grid(60) {
                let d = p.fd_consistency(r, 1e-5).unwrap();
                assert!(d < 1e-6, "{p} at r = {r}: {d}");
            }
        }
    }

    #[test]
    fn lj_single_minimum() {
        let lj = PairPotential::LennardJones;
        for r in log_grid(80) {
            if r < 1.0 {
                assert!(lj.d1(r) < 0.0, "r = {r}");
            } else if r > 1.0 {
                assert!(lj.d1(r) > 0.0, "r = {r}");
            }
        }
    }

    #[test]
    fn custom_potential_is_used() {
        let harmonic = PairPotential::Custom(CustomPotential {
            name: "harmonic".into(),
            eval: Arc::new(|r| [0.5 * (r - 1.0).powi(2), r - 1.0, 1.0, 0.0]),
        });
        assert_eq!(harmonic.eval(3.0, 1).unwrap(), 2.0);
        assert!(harmonic.fd_consistency(1.5, 1e-4).unwrap() < 1e-8);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["lj", "morse:a=3", "morse:a=0.25"] {
            let p: PairPotential = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("morse:3".parse::<PairPotential>().is_err());
        assert!("morse:a=-1".parse::<PairPotential>().is_err());
        assert!("gauss".parse::<PairPotential>().is_err());
    }

    proptest! {
        #[test]
        fn morse_fd_consistent_for_any_stiffness(a in 0.5f64..6.0, r in 0.6f64..3.5) {
            let m = PairPotential::morse(a).unwrap();
            prop_assert!(m.fd_consistency(r, 1e-5).unwrap() < 1e-6);
        }
    }
}
