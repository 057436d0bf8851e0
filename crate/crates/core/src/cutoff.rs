//! The C² plateau profile `φ` and the space-time cutoff family
//! `φ_R(x,t) = φ((d(x0,x)^{θ1} + t^{θ2}) / R^{θ1})`, with grid scans that
//! measure the constants in the Laplacian and time-derivative estimates.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::hypotheses::SpaceTimeRegion;
use crate::metrics::{MetricError, PseudoMetric};

/// Values of `-Δφ_R` or `-∂_t φ_R` above this count as support violations.
pub const SUPPORT_TOL: f64 = 1e-12;
pub const INITIAL_GRID: usize = 512;
const GRID_RTOL: f64 = 0.02;
const MAX_DOUBLINGS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutoffError {
    #[error("cutoff profile evaluated at negative argument {0}")]
    NegativeArgument(f64),
    #[error("unknown node index {0}")]
    UnknownNode(usize),
    #[error("scan needs truncation radius {needed} but the graph reaches {available}")]
    TruncationTooSmall { needed: f64, available: f64 },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = CutoffError> = std::result::Result<T, E>;

fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// `1` on `[0,1]`, `1 - S(p-1)` on `[1,2]` with `S(t) = 6t⁵ − 15t⁴ + 10t³`,
/// `0` on `[2,∞)`.
pub fn phi(p: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(CutoffError::NegativeArgument(p));
    }
    Ok(if p <= 1.0 {
        1.0
    } else if p >= 2.0 {
        0.0
    } else {
        1.0 - smoothstep(p - 1.0)
    })
}

pub fn phi_prime(p: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(CutoffError::NegativeArgument(p));
    }
    if p <= 1.0 || p >= 2.0 {
        return Ok(0.0);
    }
    let t = p - 1.0;
    Ok(-30.0 * t * t * (1.0 - t) * (1.0 - t))
}

pub fn phi_second(p: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(CutoffError::NegativeArgument(p));
    }
    if p <= 1.0 || p >= 2.0 {
        return Ok(0.0);
    }
    let t = p - 1.0;
    Ok(-60.0 * t * (1.0 - t) * (1.0 - 2.0 * t))
}

// Callers only pass nonnegative shell coordinates.
fn phi_unchecked(p: f64) -> f64 {
    phi(p.max(0.0)).unwrap()
}

fn phi_prime_unchecked(p: f64) -> f64 {
    phi_prime(p.max(0.0)).unwrap()
}

/// Cutoff functions `φ_R` around `x0` for fixed exponents `θ1`, `θ2`.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    x0: usize,
    theta1: f64,
    theta2: f64,
    jump: f64,
    distances: Arc<Vec<f64>>,
}

impl CutoffFamily {
    pub fn new(metric: &PseudoMetric, x0: usize, theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1 >= 2.0) || !(theta2 >= 1.0) {
            return Err(CutoffError::ParameterOutOfRange(format!("need θ1 >= 2 and θ2 >= 1, got ({theta1}, {theta2})")));
        }
        if x0 >= metric.len() {
            return Err(CutoffError::UnknownNode(x0));
        }
        Ok(Self { x0, theta1, theta2, jump: metric.jump(), distances: metric.distances_from(x0)? })
    }

    pub fn x0(&self) -> usize {
        self.x0
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    fn dist(&self, x: usize) -> Result<f64> {
        self.distances.get(x).copied().ok_or(CutoffError::UnknownNode(x))
    }

    fn check_t(t: f64) -> Result<()> {
        if t >= 0.0 {
            Ok(())
        } else {
            Err(CutoffError::ParameterOutOfRange(format!("t = {t} must be >= 0")))
        }
    }

    /// `ψ_R` as a function of the distance to `x0`.
    pub fn psi_dt(&self, d: f64, t: f64, r: f64) -> f64 {
        (d.powf(self.theta1) + t.powf(self.theta2)) / r.powf(self.theta1)
    }

    pub fn psi_r(&self, x: usize, t: f64, r: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(self.psi_dt(self.dist(x)?, t, r))
    }

    pub fn phi_r(&self, x: usize, t: f64, r: f64) -> Result<f64> {
        phi(self.psi_r(x, t, r)?)
    }

    /// `φ′(ψ_R) θ2 t^{θ2-1} / R^{θ1}`.
    pub fn dphi_r_dt(&self, x: usize, t: f64, r: f64) -> Result<f64> {
        let psi = self.psi_r(x, t, r)?;
        Ok(self.dphi_dt_given_psi(psi, t, r))
    }

    fn dphi_dt_given_psi(&self, psi: f64, t: f64, r: f64) -> f64 {
        let dp = phi_prime_unchecked(psi);
        if dp == 0.0 {
            return 0.0;
        }
        dp * self.theta2 * t.powf(self.theta2 - 1.0) / r.powf(self.theta1)
    }

    /// `φ_R^s`.
    pub fn phi_r_pow(&self, x: usize, t: f64, r: f64, s: f64) -> Result<f64> {
        Ok(self.phi_r(x, t, r)?.powf(s))
    }

    /// `∂_t φ_R^s = s φ_R^{s-1} ∂_t φ_R`.
    pub fn dphi_r_pow_dt(&self, x: usize, t: f64, r: f64, s: f64) -> Result<f64> {
        let psi = self.psi_r(x, t, r)?;
        let d = self.dphi_dt_given_psi(psi, t, r);
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok(s * phi_unchecked(psi).powf(s - 1.0) * d)
    }

    /// Radius of the spatial support `B_{2^{1/θ1} R}(x0)`.
    pub fn support_radius(&self, r: f64) -> f64 {
        2f64.powf(1.0 / self.theta1) * r
    }

    /// End of the temporal support `2^{1/θ2} R^{θ1/θ2}`.
    pub fn support_time(&self, r: f64) -> f64 {
        2f64.powf(1.0 / self.theta2) * r.powf(self.theta1 / self.theta2)
    }
}

/// Result of one estimate scan at one `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "C_emp")]
    pub c_emp: f64,
    pub support_violations: usize,
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: String,
    pub entries: Vec<EstimateEntry>,
    /// `max C_emp / min C_emp` over the radius list.
    pub stability_ratio: f64,
}

impl EstimateReport {
    fn new(estimate: &str, entries: Vec<EstimateEntry>) -> Self {
        let max = entries.iter().map(|e| e.c_emp).fold(f64::NEG_INFINITY, f64::max);
        let min = entries.iter().map(|e| e.c_emp).fold(f64::INFINITY, f64::min);
        let stability_ratio = if min > 0.0 { max / min } else { f64::INFINITY };
        Self { estimate: estimate.to_string(), entries, stability_ratio }
    }

    pub fn total_violations(&self) -> usize {
        self.entries.iter().map(|e| e.support_violations).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_truncation(fam: &CutoffFamily, radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(CutoffError::ParameterOutOfRange("radius list must be nonempty and positive".into()));
    }
    let needed = 5.0 * radii.iter().copied().fold(0.0, f64::max);
    let available = fam.distances.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    if available < needed {
        return Err(CutoffError::TruncationTooSmall { needed, available });
    }
    Ok(())
}

/// Max of the scaled positive part and the violation count over a uniform
/// `n`-point grid on `[0, T]`, `scan(t)` returning both for one time.
fn scan_grid(n: usize, horizon: f64, scan: impl Fn(f64) -> (f64, usize) + Sync) -> (f64, usize) {
    (0..n).into_par_iter().map(|k| scan(horizon * k as f64 / (n - 1) as f64)).reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1))
}

/// Doubles the grid from [`INITIAL_GRID`] until `C_emp` changes by less than 2%.
fn refine(horizon: f64, scan: impl Fn(f64) -> (f64, usize) + Sync) -> (f64, usize, usize) {
    let mut n = INITIAL_GRID;
    let (mut c, mut viol) = scan_grid(n, horizon, &scan);
    for _ in 0..MAX_DOUBLINGS {
        let m = 2 * n;
        let (c2, v2) = scan_grid(m, horizon, &scan);
        let change = if c2 > 0.0 { (c2 - c).abs() / c2 } else { 0.0 };
        n = m;
        c = c2;
        viol = v2;
        if change < GRID_RTOL {
            break;
        }
    }
    (c, viol, n)
}

/// Scans `(-Δφ_R)_+ R^{1+α}` over nodes near the support and a time grid
/// covering `[0, 2^{1/θ2} R^{θ1/θ2}]`, counting points outside `F_R` where
/// `-Δφ_R` exceeds [`SUPPORT_TOL`].
pub fn verify_est1(g: &WeightedGraph, fam: &CutoffFamily, radii: &[f64], alpha: f64) -> Result<EstimateReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CutoffError::ParameterOutOfRange(format!("α = {alpha} outside [0, 1]")));
    }
    if fam.distances.len() != g.node_count() {
        return Err(CutoffError::ParameterOutOfRange("cutoff family and graph differ in size".into()));
    }
    check_truncation(fam, radii)?;
    let dpow: Vec<f64> = fam.distances.iter().map(|d| d.powf(fam.theta1)).collect();
    let mut entries = Vec::with_capacity(radii.len());
    for &r in radii {
        // Δφ_R vanishes at nodes whose closed neighbourhood lies outside the support.
        let reach = fam.support_radius(r) + fam.jump;
        let nodes: Vec<usize> = (0..g.node_count()).filter(|&x| fam.distances[x] <= reach).collect();
        let rt = r.powf(fam.theta1);
        let scale = r.powf(1.0 + alpha);
        let f_region =
            SpaceTimeRegion::f_annulus(fam.x0, fam.theta1, fam.theta2, r).map_err(|e| CutoffError::ParameterOutOfRange(e.to_string()))?;
        let scan = |t: f64| -> (f64, usize) {
            let tp = t.powf(fam.theta2);
            let phi_at = |y: usize| phi_unchecked((dpow[y] + tp) / rt);
            let mut worst = 0.0f64;
            let mut viol = 0;
            for &x in &nodes {
                let fx = phi_at(x);
                let lap: f64 = g.neighbors(x).map(|(y, w)| w * (phi_at(y) - fx)).sum::<f64>() / g.mu(x);
                let neg = -lap;
                if neg > 0.0 {
                    worst = worst.max(neg);
                }
                if neg > SUPPORT_TOL && !f_region.contains_dt(fam.distances[x], t) {
                    viol += 1;
                }
            }
            (worst * scale, viol)
        };
        let (c_emp, support_violations, grid_size) = refine(fam.support_time(r), scan);
        entries.push(EstimateEntry { r, c_emp, support_violations, grid_size });
    }
    Ok(EstimateReport::new("est1", entries))
}

/// Scans `(-∂_t φ_R)_+ R^{θ1/θ2}`, counting points outside `E_R` where
/// `-∂_t φ_R` exceeds [`SUPPORT_TOL`].
pub fn verify_est2(fam: &CutoffFamily, radii: &[f64]) -> Result<EstimateReport> {
    check_truncation(fam, radii)?;
    let mut entries = Vec::with_capacity(radii.len());
    for &r in radii {
        let reach = fam.support_radius(r) + fam.jump;
        let nodes: Vec<usize> = (0..fam.distances.len()).filter(|&x| fam.distances[x] <= reach).collect();
        let scale = r.powf(fam.theta1 / fam.theta2);
        let e_region =
            SpaceTimeRegion::e_annulus(fam.x0, fam.theta1, fam.theta2, r).map_err(|e| CutoffError::ParameterOutOfRange(e.to_string()))?;
        let scan = |t: f64| -> (f64, usize) {
            let mut worst = 0.0f64;
            let mut viol = 0;
            for &x in &nodes {
                let d = fam.distances[x];
                let neg = -fam.dphi_dt_given_psi(fam.psi_dt(d, t, r), t, r);
                worst = worst.max(neg);
                if neg > SUPPORT_TOL && !e_region.contains_dt(d, t) {
                    viol += 1;
                }
            }
            (worst * scale, viol)
        };
        let (c_emp, support_violations, grid_size) = refine(fam.support_time(r), scan);
        entries.push(EstimateEntry { r, c_emp, support_violations, grid_size });
    }
    Ok(EstimateReport::new("est2", entries))
}
