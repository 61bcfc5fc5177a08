//! Rate-distortion curves by Blahut–Arimoto, and their inverse.
//!
//! For a slope parameter `β ≥ 0` the iteration minimises `I(Z;U) + β·E[d]`
//! over channels `P(u|z)`, producing one point of the curve `R(D)`. Sweeping
//! `β` traces the curve from the zero-rate end (`β = 0`) towards `D_min`.

use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Result};
use crate::infotheory::measures::check_stochastic_rows;
use crate::nn::Matrix;

pub const BA_TOL: f64 = 1e-10;
pub const BA_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub beta: f64,
    pub distortion: f64,
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_problem(p_z: &[f64], distortion: &Matrix) -> Result<()> {
    if distortion.rows() != p_z.len() || distortion.cols() == 0 {
        return Err(shape(format!(
            "distortion matrix is {:?} for an input alphabet of {}",
            distortion.shape(),
            p_z.len()
        )));
    }
    let pz = Matrix::from_vec(1, p_z.len(), p_z.to_vec())?;
    check_stochastic_rows(&pz, "P_Z")?;
    if !distortion.is_finite() {
        return Err(input("distortion has non-finite entries"));
    }
    Ok(())
}

/// One Blahut–Arimoto solve at slope `beta`.
pub fn blahut_arimoto(p_z: &[f64], distortion: &Matrix, beta: f64) -> Result<RdPoint> {
    check_problem(p_z, distortion)?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(input(format!("β must be finite and ≥ 0, got {beta}")));
    }
    Ok(solve(p_z, distortion, beta))
}

/// Output letter of the zero-rate solution, `argmin_u Σ_z P(z) d(z,u)`.
fn zero_rate_letter(p_z: &[f64], d: &Matrix) -> usize {
    let cost = |u: usize| p_z.iter().enumerate().map(|(z, pz)| pz * d.get(z, u)).sum::<f64>();
    (0..d.cols())
        .min_by(|&a, &b| cost(a).total_cmp(&cost(b)))
        .expect("non-empty")
}

/// The point mass on `u*` is optimal at slope `beta` iff every
/// `c_u = Σ_z P(z) exp(−β(d(z,u) − d(z,u*)))` is at most 1.
fn zero_rate_is_optimal(p_z: &[f64], d: &Matrix, beta: f64) -> bool {
    let star = zero_rate_letter(p_z, d);
    (0..d.cols()).all(|u| {
        let c: f64 = p_z
            .iter()
            .enumerate()
            .map(|(z, pz)| pz * (-beta * (d.get(z, u) - d.get(z, star))).exp())
            .sum();
        c <= 1.0 + 1e-15
    })
}

fn solve(p_z: &[f64], d: &Matrix, beta: f64) -> RdPoint {
    if zero_rate_is_optimal(p_z, d, beta) {
        return RdPoint {
            beta,
            distortion: zero_rate_distortion(p_z, d),
            rate: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let n_u = d.cols();
    let mut q = vec![1.0 / n_u as f64; n_u];
    let mut cond = Matrix::zeros(d.rows(), n_u);
    let mut prev: Option<(f64, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;

    let evaluate = |cond: &Matrix, q: &[f64]| -> (f64, f64) {
        let (mut rate, mut dist) = (0.0, 0.0);
        for (z, &pz) in p_z.iter().enumerate() {
            if pz == 0.0 {
                continue;
            }
            for u in 0..n_u {
                let c = cond.get(z, u);
                if c > 0.0 {
                    rate += pz * c * (c / q[u]).ln();
                    dist += pz * c * d.get(z, u);
                }
            }
        }
        (rate.max(0.0), dist)
    };

    let mut point = (0.0, 0.0);
    let mut log_norm = vec![0.0; d.rows()];
    while iterations < BA_MAX_ITERS {
        iterations += 1;
        for z in 0..d.rows() {
            // log-domain normalisation keeps large β stable
            let row = cond.row_mut(z);
            let mut top = f64::NEG_INFINITY;
            for u in 0..n_u {
                row[u] = if q[u] > 0.0 {
                    q[u].ln() - beta * d.get(z, u)
                } else {
                    f64::NEG_INFINITY
                };
                top = top.max(row[u]);
            }
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - top).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
            log_norm[z] = top + s.ln();
        }
        let mut q_new = vec![0.0; n_u];
        for (z, &pz) in p_z.iter().enumerate() {
            for (qn, &c) in q_new.iter_mut().zip(cond.row(z)) {
                *qn += pz * c;
            }
        }
        // Blahut's bound: the Lagrangian is within max_u log c_u − Σ_u q_u log c_u
        // of optimal, where c_u = q_new(u) / q(u)
        let mut gap_max = f64::NEG_INFINITY;
        let mut gap_mean = 0.0;
        for u in 0..n_u {
            let lc = if q[u] > 0.0 {
                (q_new[u] / q[u]).ln()
            } else {
                (0..d.rows())
                    .filter(|&z| p_z[z] > 0.0)
                    .map(|z| p_z[z] * (-beta * d.get(z, u) - log_norm[z]).exp())
                    .sum::<f64>()
                    .ln()
            };
            gap_max = gap_max.max(lc);
            if q[u] > 0.0 {
                gap_mean += q[u] * lc;
            }
        }
        q = q_new;
        point = evaluate(&cond, &q);
        if let Some((r0, d0)) = prev {
            if (point.0 - r0).abs() < BA_TOL && (point.1 - d0).abs() < BA_TOL && gap_max - gap_mean < BA_TOL {
                converged = true;
                break;
            }
        }
        prev = Some(point);
    }
    RdPoint {
        beta,
        rate: point.0,
        distortion: point.1,
        iterations,
        converged,
    }
}

/// Smallest achievable expected distortion, `Σ_z P(z) min_u d(z,u)`.
pub fn min_distortion(p_z: &[f64], d: &Matrix) -> f64 {
    p_z.iter()
        .zip(d.row_iter())
        .map(|(pz, r)| pz * r.iter().copied().fold(f64::INFINITY, f64::min))
        .sum()
}

/// Distortion reachable at zero rate, `min_u Σ_z P(z) d(z,u)`.
pub fn zero_rate_distortion(p_z: &[f64], d: &Matrix) -> f64 {
    (0..d.cols())
        .map(|u| p_z.iter().enumerate().map(|(z, pz)| pz * d.get(z, u)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self {
            count: 64,
            min: 1e-3,
            max: 1e3,
        }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.max];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

/// Tabulated `R(D)`, sorted by increasing distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDistortionCurve {
    pub points: Vec<RdPoint>,
    pub d_min: f64,
    pub d_max: f64,
}

impl RateDistortionCurve {
    /// Largest tabulated rate.
    pub fn r_max(&self) -> f64 {
        self.points.iter().map(|p| p.rate).fold(0.0, f64::max)
    }

    /// `R` non-increasing and convex in `D`, each within `slack`.
    pub fn check_shape(&self, slack: f64) -> std::result::Result<(), String> {
        for w in self.points.windows(2) {
            if w[1].rate > w[0].rate + slack {
                return Err(format!(
                    "rate increases from {} to {} between D={} and D={}",
                    w[0].rate, w[1].rate, w[0].distortion, w[1].distortion
                ));
            }
        }
        for w in self.points.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let span = c.distortion - a.distortion;
            if span <= 1e-12 {
                continue;
            }
            let chord = a.rate + (b.distortion - a.distortion) / span * (c.rate - a.rate);
            if b.rate > chord + slack {
                return Err(format!(
                    "not convex at D={}: {} above chord {}",
                    b.distortion, b.rate, chord
                ));
            }
        }
        Ok(())
    }
}

/// Traces the curve over `grid` plus the `β = 0` endpoint, keeping only
/// points not dominated by another solved point.
pub fn trace_curve(p_z: &[f64], d: &Matrix, grid: &BetaGrid) -> Result<RateDistortionCurve> {
    check_problem(p_z, d)?;
    let mut points = vec![RdPoint {
        beta: 0.0,
        distortion: zero_rate_distortion(p_z, d),
        rate: 0.0,
        iterations: 0,
        converged: true,
    }];
    for beta in grid.values() {
        points.push(solve(p_z, d, beta));
    }
    points.sort_by(|a, b| a.distortion.total_cmp(&b.distortion).then(a.rate.total_cmp(&b.rate)));
    // drop points dominated in both coordinates, left by slow convergence at small β
    let mut lowest = f64::INFINITY;
    points.retain(|p| {
        let keep = p.rate < lowest;
        lowest = lowest.min(p.rate);
        keep
    });
    Ok(RateDistortionCurve {
        points,
        d_min: min_distortion(p_z, d),
        d_max: zero_rate_distortion(p_z, d),
    })
}

/// `R⁻¹(I) = inf{D : R(D) ≤ I}` by linear interpolation between tabulated
/// points. Rates at or above the largest tabulated rate map to `D_min`.
pub fn distortion_rate_inverse(curve: &RateDistortionCurve, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(input(format!("rate must be ≥ 0, got {rate}")));
    }
    if curve.points.is_empty() {
        return Err(input("empty rate-distortion curve"));
    }
    if rate >= curve.r_max() {
        return Ok(curve.d_min);
    }
    let mut above: Option<&RdPoint> = None;
    for p in &curve.points {
        if p.rate <= rate {
            return Ok(match above {
                None => p.distortion,
                Some(a) => {
                    let t = (a.rate - rate) / (a.rate - p.rate);
                    a.distortion + t * (p.distortion - a.distortion)
                }
            });
        }
        above = Some(p);
    }
    Ok(curve.d_max)
}

/// `R⁻¹(I)` refined beyond the tabulation: bisection on `log β` between the
/// bracketing grid slopes until the solved rate meets `I`. The returned
/// distortion comes from the side with rate ≥ `I`, so it never exceeds the
/// true inverse by more than the solver tolerance.
pub fn distortion_rate_at(p_z: &[f64], d: &Matrix, curve: &RateDistortionCurve, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(input(format!("rate must be ≥ 0, got {rate}")));
    }
    check_problem(p_z, d)?;
    if rate >= curve.r_max() {
        return Ok(curve.d_min);
    }
    if rate == 0.0 {
        return Ok(curve.d_max);
    }
    let mut lo: Option<f64> = None;
    let mut hi: Option<RdPoint> = None;
    for p in &curve.points {
        if p.beta == 0.0 {
            continue;
        }
        if p.rate < rate {
            if lo.is_none_or(|b| p.beta > b) {
                lo = Some(p.beta);
            }
        } else if hi.is_none_or(|h| p.beta < h.beta) {
            hi = Some(*p);
        }
    }
    let Some(mut hi) = hi else {
        return Ok(curve.d_min);
    };
    let lo_beta = match lo {
        Some(b) if b < hi.beta => b,
        _ => hi.beta * 1e-6,
    };
    let (mut a, mut b) = (lo_beta.ln(), hi.beta.ln());
    for _ in 0..60 {
        if b - a < 1e-13 {
            break;
        }
        let mid = 0.5 * (a + b);
        let p = solve(p_z, d, mid.exp());
        if p.rate >= rate {
            b = mid;
            hi = p;
        } else {
            a = mid;
        }
    }
    Ok(hi.distortion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::fano::binary_entropy;

    fn hamming(n: usize) -> Matrix {
        let mut d = Matrix::filled(n, n, 1.0);
        for i in 0..n {
            d.set(i, i, 0.0);
        }
        d
    }

    #[test]
    fn binary_hamming_closed_form() {
        let p = [0.5, 0.5];
        let d = hamming(2);
        let curve = trace_curve(&p, &d, &BetaGrid::default()).unwrap();
        for pt in &curve.points {
            if pt.distortion > 0.0 && pt.distortion < 0.5 {
                let closed = 2f64.ln() - binary_entropy(pt.distortion);
                assert!((pt.rate - closed).abs() < 1e-8, "{pt:?} vs {closed}");
            }
        }
        // R(0.11) from the curve's inverse
        let target = 2f64.ln() - binary_entropy(0.11);
        let dist = distortion_rate_at(&p, &d, &curve, target).unwrap();
        assert!((dist - 0.11).abs() < 1e-6, "{dist}");
        assert!((binary_entropy(0.11) - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn curve_endpoints() {
        let p = [0.2, 0.3, 0.5];
        let d = Matrix::from_rows(&[[0.0, 0.7, 0.9], [0.6, 0.1, 0.8], [1.0, 0.4, 0.2]]).unwrap();
        let curve = trace_curve(&p, &d, &BetaGrid::default()).unwrap();
        assert_eq!(distortion_rate_inverse(&curve, 0.0).unwrap(), curve.d_max);
        assert_eq!(distortion_rate_inverse(&curve, 10.0).unwrap(), curve.d_min);
        assert!((curve.d_min - (0.0 + 0.3 * 0.1 + 0.5 * 0.2)).abs() < 1e-15);
        curve.check_shape(1e-8).unwrap();
        assert!(curve.points.iter().all(|p| p.converged));
    }

    #[test]
    fn inverse_is_monotone() {
        let p = [0.25; 4];
        let d = hamming(4);
        let curve = trace_curve(&p, &d, &BetaGrid::default()).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let r = curve.r_max() * i as f64 / 49.0;
            let v = distortion_rate_inverse(&curve, r).unwrap();
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = hamming(2);
        assert!(blahut_arimoto(&[0.5, 0.5], &d, -1.0).is_err());
        assert!(blahut_arimoto(&[0.6, 0.5], &d, 1.0).is_err());
        assert!(blahut_arimoto(&[1.0], &d, 1.0).is_err());
    }
}
