//! Monotone maps from a raw linear score to a probability, fitted on a
//! held-out split.

use serde::{Deserialize, Serialize};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `p = sigmoid(a * z + b)` with `a >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub const IDENTITY: Platt = Platt { a: 1.0, b: 0.0 };

    pub fn apply(&self, z: f64) -> f64 {
        let u = self.a * z + self.b;
        // a * z can be inf * 0 for extreme inputs with a == 0.
        if u.is_nan() {
            return sigmoid(self.b);
        }
        sigmoid(u)
    }

    /// Maximum-likelihood fit with Platt's smoothed targets
    /// `(N+ + 1) / (N+ + 2)` and `1 / (N- + 2)`, solved by damped Newton
    /// steps. A negative slope is projected back to zero (intercept refit),
    /// which keeps the map nondecreasing.
    pub fn fit(scores: &[f64], labels: &[bool]) -> Platt {
        assert_eq!(scores.len(), labels.len());
        let pos = labels.iter().filter(|&&y| y).count() as f64;
        let neg = labels.len() as f64 - pos;
        let hi = (pos + 1.0) / (pos + 2.0);
        let lo = 1.0 / (neg + 2.0);
        let targets: Vec<f64> = labels.iter().map(|&y| if y { hi } else { lo }).collect();

        let prior = ((pos + 1.0) / (neg + 1.0)).ln();
        let fitted = newton(scores, &targets, 0.0, prior, true);
        if fitted.a >= 0.0 {
            fitted
        } else {
            newton(scores, &targets, 0.0, prior, false)
        }
    }
}

fn nll(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            let u = a * z + b;
            // log(1 + e^u) - y*u, computed without overflow
            let softplus = if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
            softplus - y * u
        })
        .sum()
}

fn newton(scores: &[f64], targets: &[f64], a0: f64, b0: f64, fit_slope: bool) -> Platt {
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    let (mut a, mut b) = (a0, b0);
    let mut f = nll(scores, targets, a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&z, &y) in scores.iter().zip(targets) {
            let p = sigmoid(a * z + b);
            let d1 = p - y;
            let d2 = p * (1.0 - p);
            h11 += z * z * d2;
            h22 += d2;
            h21 += z * d2;
            g1 += z * d1;
            g2 += d1;
        }
        if !fit_slope {
            g1 = 0.0;
        }
        if g1.abs() < 1e-9 && g2.abs() < 1e-9 {
            break;
        }
        let (da, db) = if fit_slope {
            let det = h11 * h22 - h21 * h21;
            (-(h22 * g1 - h21 * g2) / det, -(-h21 * g1 + h11 * g2) / det)
        } else {
            (0.0, -g2 / h22)
        };
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(scores, targets, na, nb);
            if nf < f + 1e-4 * step * gd {
                a = na;
                b = nb;
                f = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Platt { a, b }
}

/// Piecewise-linear nondecreasing map through fitted breakpoints, clamped to
/// the end values outside the fitted range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isotonic {
    /// `(raw score, probability)`, strictly increasing in score and
    /// nondecreasing in probability.
    pub breakpoints: Vec<(f64, f64)>,
}

impl Isotonic {
    /// Pool-adjacent-violators on `(score, label)` pairs.
    pub fn fit(scores: &[f64], labels: &[bool]) -> Isotonic {
        assert_eq!(scores.len(), labels.len());
        if scores.is_empty() {
            return Isotonic { breakpoints: vec![(0.0, 0.5)] };
        }
        let mut pairs: Vec<(f64, f64)> =
            scores.iter().zip(labels).map(|(&z, &y)| (z, if y { 1.0 } else { 0.0 })).collect();
        pairs.sort_by(|l, r| l.0.total_cmp(&r.0));

        // Tied scores collapse to one weighted point first.
        let mut points: Vec<(f64, f64, f64)> = Vec::new(); // (score, mean, weight)
        for (z, y) in pairs {
            match points.last_mut() {
                Some(last) if last.0 == z => {
                    last.1 = (last.1 * last.2 + y) / (last.2 + 1.0);
                    last.2 += 1.0;
                }
                _ => points.push((z, y, 1.0)),
            }
        }

        // blocks: (first score, last score, mean, weight)
        let mut blocks: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(points.len());
        for (z, y, w) in points {
            blocks.push((z, z, y, w));
            while blocks.len() >= 2 {
                let n = blocks.len();
                if blocks[n - 2].2 <= blocks[n - 1].2 {
                    break;
                }
                let hi = blocks.pop().unwrap();
                let lo = blocks.last_mut().unwrap();
                let w = lo.3 + hi.3;
                lo.2 = (lo.2 * lo.3 + hi.2 * hi.3) / w;
                lo.3 = w;
                lo.1 = hi.1;
            }
        }

        let mut breakpoints = Vec::with_capacity(2 * blocks.len());
        for (first, last, mean, _) in blocks {
            breakpoints.push((first, mean));
            if last > first {
                breakpoints.push((last, mean));
            }
        }
        Isotonic { breakpoints }
    }

    pub fn apply(&self, z: f64) -> f64 {
        let bp = &self.breakpoints;
        let (first, last) = (bp[0], bp[bp.len() - 1]);
        if z.is_nan() {
            return first.1;
        }
        if z <= first.0 {
            return first.1;
        }
        if z >= last.0 {
            return last.1;
        }
        let hi = bp.partition_point(|p| p.0 <= z);
        let (x0, y0) = bp[hi - 1];
        let (x1, y1) = bp[hi];
        let frac = (z - x0) / (x1 - x0);
        (y0 + frac * (y1 - y0)).clamp(y0.min(y1), y0.max(y1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pav_textbook_case() {
        // labels along increasing score: 1 0 0 1 1 -> first three pool to 1/3
        let scores = [1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = [true, false, false, true, true];
        let iso = Isotonic::fit(&scores, &labels);
        assert_eq!(iso.breakpoints, vec![(1.0, 1.0 / 3.0), (3.0, 1.0 / 3.0), (4.0, 1.0), (5.0, 1.0)]);
        assert_eq!(iso.apply(-100.0), 1.0 / 3.0);
        assert_eq!(iso.apply(100.0), 1.0);
        assert!((iso.apply(3.5) - (1.0 / 3.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn tied_scores_merge() {
        let iso = Isotonic::fit(&[0.0, 0.0, 1.0], &[true, false, true]);
        assert_eq!(iso.breakpoints, vec![(0.0, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn platt_recovers_known_slope() {
        // Large balanced sample drawn exactly from sigmoid(2z - 1) frequencies.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..=40 {
            let z = -2.0 + i as f64 * 0.1;
            let p = sigmoid(2.0 * z - 1.0);
            let pos = (p * 1000.0).round() as usize;
            for k in 0..1000 {
                scores.push(z);
                labels.push(k < pos);
            }
        }
        let fit = Platt::fit(&scores, &labels);
        assert!((fit.a - 2.0).abs() < 0.02, "{fit:?}");
        assert!((fit.b + 1.0).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn platt_never_decreasing() {
        // Anti-correlated data would want a negative slope.
        let scores = [-1.0, 0.0, 1.0, 2.0];
        let labels = [true, true, false, false];
        let fit = Platt::fit(&scores, &labels);
        assert_eq!(fit.a, 0.0);
        assert!(fit.apply(-5.0) <= fit.apply(5.0));
    }

    #[test]
    fn identity_platt_is_sigmoid() {
        for z in [-3.0, -0.2, 0.0, 1.7] {
            assert_eq!(Platt::IDENTITY.apply(z), sigmoid(z));
        }
    }

    #[test]
    fn sigmoid_extremes_stay_in_range() {
        assert_eq!(sigmoid(1e6), 1.0);
        assert_eq!(sigmoid(-1e6), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
