use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A counted cycle: depth of discharge and weight (1 for a full cycle,
/// 0.5 for a residual half-cycle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub dod: f64,
    pub weight: f64,
}

/// Turning points of a profile: first and last samples plus every point
/// where the direction of change flips. Flat runs and collinear interior
/// points are dropped.
pub fn reversals(profile: &[f64]) -> Vec<f64> {
    reversal_indices(profile).into_iter().map(|k| profile[k]).collect()
}

fn reversal_indices(profile: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(profile.len());
    for (k, &x) in profile.iter().enumerate() {
        match out.len() {
            0 => out.push(k),
            1 => {
                if x != profile[out[0]] {
                    out.push(k);
                }
            }
            n => {
                let (a, b) = (profile[out[n - 2]], profile[out[n - 1]]);
                if x == b {
                    continue;
                }
                if (b - a) * (x - b) > 0.0 {
                    out[n - 1] = k;
                } else {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// Rainflow count reporting, for each cycle, the profile indices of the two
/// turning points whose difference is its depth.
pub(crate) fn rainflow_indexed(profile: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut cycles = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    for k in reversal_indices(profile) {
        stack.push(k);
        while stack.len() >= 4 {
            let n = stack.len();
            let [a, b, c, d] = [stack[n - 4], stack[n - 3], stack[n - 2], stack[n - 1]].map(|i| profile[i]);
            let inner = (c - b).abs();
            if (b - a).abs() >= inner && (d - c).abs() >= inner {
                cycles.push((stack[n - 3], stack[n - 2], 1.0));
                stack.drain(n - 3..n - 1);
            } else {
                break;
            }
        }
    }
    cycles.extend(stack.windows(2).map(|w| (w[0], w[1], 0.5)));
    cycles
}

/// Four-point rainflow count over the reversal sequence of `profile`.
pub fn rainflow_cycles(profile: &[f64]) -> Vec<Cycle> {
    rainflow_indexed(profile)
        .into_iter()
        .map(|(i, j, weight)| Cycle {
            dod: (profile[j] - profile[i]).abs(),
            weight,
        })
        .collect()
}

/// Gradient of the rainflow fade with respect to every profile sample,
/// holding the cycle structure fixed.
pub(crate) fn cycle_fade_gradient(profile: &[f64], stress: &StressFunction) -> Vec<f64> {
    let mut grad = vec![0.0; profile.len()];
    for (i, j, w) in rainflow_indexed(profile) {
        let diff = profile[j] - profile[i];
        let g = w * stress.slope(diff.abs()) * diff.signum();
        grad[j] += g;
        grad[i] -= g;
    }
    grad
}

/// Per-cycle fade `Φ(d) = a·d^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressFunction {
    pub a: f64,
    pub b: f64,
}

impl Default for StressFunction {
    fn default() -> Self {
        Self { a: 5.24e-4, b: 2.03 }
    }
}

impl StressFunction {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let s = Self { a, b };
        s.validate()?;
        Ok(s)
    }

    /// `b ≥ 1` keeps Φ convex.
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Validation("stress coefficient a must be nonnegative".into()));
        }
        if !(self.b >= 1.0 && self.b.is_finite()) {
            return Err(Error::Validation("stress exponent b must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eval(&self, dod: f64) -> f64 {
        if dod <= 0.0 {
            0.0
        } else {
            self.a * dod.powf(self.b)
        }
    }

    pub fn slope(&self, dod: f64) -> f64 {
        if dod <= 0.0 {
            if self.b == 1.0 {
                self.a
            } else {
                0.0
            }
        } else {
            self.a * self.b * dod.powf(self.b - 1.0)
        }
    }
}

pub fn cycle_fade(cycles: &[Cycle], stress: &StressFunction) -> f64 {
    cycles.iter().map(|c| c.weight * stress.eval(c.dod)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Repeatedly removes the first qualifying inner pair from the whole
    /// reversal list until none is left.
    fn reference(profile: &[f64]) -> Vec<Cycle> {
        let mut pts: Vec<f64> = Vec::new();
        for &x in profile {
            if pts.last() != Some(&x) {
                pts.push(x);
            }
        }
        let mut k = 1;
        while k + 1 < pts.len() {
            let (a, b, c) = (pts[k - 1], pts[k], pts[k + 1]);
            if (b - a) * (c - b) > 0.0 {
                pts.remove(k);
            } else {
                k += 1;
            }
        }
        let mut out = Vec::new();
        'scan: loop {
            for i in 0..pts.len().saturating_sub(3) {
                let inner = (pts[i + 2] - pts[i + 1]).abs();
                if (pts[i + 1] - pts[i]).abs() >= inner && (pts[i + 3] - pts[i + 2]).abs() >= inner {
                    out.push(Cycle { dod: inner, weight: 1.0 });
                    pts.drain(i + 1..i + 3);
                    continue 'scan;
                }
            }
            break;
        }
        for w in pts.windows(2) {
            out.push(Cycle {
                dod: (w[1] - w[0]).abs(),
                weight: 0.5,
            });
        }
        out
    }

    fn sorted(mut c: Vec<Cycle>) -> Vec<(f64, f64)> {
        c.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.dod.total_cmp(&y.dod)));
        c.into_iter().map(|c| (c.dod, c.weight)).collect()
    }

    fn same(a: Vec<Cycle>, b: Vec<Cycle>, tol: f64) -> bool {
        let (a, b) = (sorted(a), sorted(b));
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| (x.0 - y.0).abs() <= tol && x.1 == y.1)
    }

    #[test]
    fn single_excursion() {
        let c = rainflow_cycles(&[0.0, 1.0, 0.0]);
        // A lone excursion closes as two half-cycles of the same depth.
        assert_eq!(c.len(), 2);
        assert!((cycle_fade(&c, &StressFunction::new(1.0, 1.0).unwrap()) - 1.0).abs() < 1e-15);
        assert!(c.iter().all(|c| c.dod == 1.0 && c.weight == 0.5));
    }

    #[test]
    fn nested_cycle_example() {
        let c = rainflow_cycles(&[0.0, 0.8, 0.4, 0.6, 0.0]);
        let full: Vec<_> = c.iter().filter(|c| c.weight == 1.0).collect();
        assert_eq!(full.len(), 1);
        assert!((full[0].dod - 0.2).abs() < 1e-12);
        let halves: Vec<f64> = c.iter().filter(|c| c.weight == 0.5).map(|c| c.dod).collect();
        assert_eq!(halves, vec![0.8, 0.8]);
    }

    #[test]
    fn ramp_is_one_half_cycle() {
        let c = rainflow_cycles(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c, vec![Cycle { dod: 1.0, weight: 0.5 }]);
    }

    #[test]
    fn constant_profile_has_no_cycles() {
        assert!(rainflow_cycles(&[0.3; 7]).is_empty());
    }

    #[test]
    fn reversal_extraction() {
        assert_eq!(reversals(&[0.0, 0.0, 0.5, 1.0, 1.0, 0.2, 0.2, 0.4]), vec![0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn fade_examples() {
        let s = StressFunction::default();
        assert_eq!(cycle_fade(&[], &s), 0.0);
        let one = cycle_fade(&[Cycle { dod: 0.7, weight: 1.0 }], &s);
        assert!((one - s.eval(0.7)).abs() < 1e-18);
        let two_half = cycle_fade(&[Cycle { dod: 0.5, weight: 1.0 }; 2], &s);
        let one_full = cycle_fade(&[Cycle { dod: 1.0, weight: 1.0 }], &s);
        assert!(two_half <= one_full);
        assert!(StressFunction::new(1.0, 0.5).is_err());
    }

    #[test]
    fn fade_gradient_matches_differences() {
        let s = StressFunction::default();
        let p = vec![0.1, 0.7, 0.35, 0.55, 0.2, 0.9, 0.4];
        let g = cycle_fade_gradient(&p, &s);
        let h = 1e-7;
        for k in 0..p.len() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (cycle_fade(&rainflow_cycles(&up), &s) - cycle_fade(&rainflow_cycles(&dn), &s)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "sample {k}: {fd} vs {}", g[k]);
        }
    }

    proptest! {
        #[test]
        fn matches_reference(profile in prop::collection::vec(0.0f64..1.0, 2..50)) {
            prop_assert!(same(rainflow_cycles(&profile), reference(&profile), 0.0));
        }

        #[test]
        fn scale_equivariant(profile in prop::collection::vec(0.0f64..1.0, 2..50), alpha in 0.01f64..1.0) {
            let scaled: Vec<f64> = profile.iter().map(|x| alpha * x).collect();
            let expect: Vec<Cycle> = rainflow_cycles(&profile)
                .into_iter()
                .map(|c| Cycle { dod: alpha * c.dod, weight: c.weight })
                .collect();
            prop_assert!(same(rainflow_cycles(&scaled), expect, 1e-12));
        }

        #[test]
        fn collinear_insertion_invariant(profile in prop::collection::vec(0.0f64..1.0, 2..50)) {
            let mut dense = Vec::new();
            for w in profile.windows(2) {
                dense.push(w[0]);
                dense.push(0.5 * (w[0] + w[1]));
            }
            dense.push(*profile.last().unwrap());
            prop_assert!(same(rainflow_cycles(&dense), rainflow_cycles(&profile), 1e-15));
        }
    }
}
