//! Wave evolution operator `Q` from the past to the future boundary,
//! restricted to a truncation window.
//!
//! On the metrics supported here (`-dt² + l(t)² dx²`) the eigenbasis of the
//! boundary operator does not depend on `t`, so `Q` is diagonal. Each mode
//! obeys
//!
//! ```text
//! u_k'(t) = (i λ_k(t) - l'(t) / (2 l(t))) u_k(t),   λ_k(t) = 2π (k + δ + θ) / l(t)
//! ```
//!
//! which preserves `l(t) |u_k(t)|²`; the evolution matrix is unitary for the
//! length-weighted norms.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unitarity_defect, CMatrix};
use crate::parallel::{map_collect, Execution};
use crate::spectrum::{SpectrumModel, TruncationWindow};

/// Circle length as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthProfile {
    Constant { value: f64 },
    /// Linear interpolation between `start` at `t0` and `end` at `t1`.
    Linear { start: f64, end: f64 },
    /// Natural cubic spline through the samples.
    Table { times: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedProduct {
    profile: LengthProfile,
    spline: Option<CubicSpline>,
    t0: f64,
    t1: f64,
}

impl WarpedProduct {
    pub fn new(profile: LengthProfile, t0: f64, t1: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Domain(format!("need t0 < t1, got [{t0}, {t1}]")));
        }
        let spline = match &profile {
            LengthProfile::Table { times, values } => {
                let s = CubicSpline::natural(times, values)?;
                if t0 < times[0] || t1 > times[times.len() - 1] {
                    return Err(Error::Domain("time interval exceeds the length table".into()));
                }
                Some(s)
            }
            _ => None,
        };
        let w = WarpedProduct {
            profile,
            spline,
            t0,
            t1,
        };
        // dense positivity scan, knots included
        let samples = 4096;
        let mut l_min = f64::INFINITY;
        for i in 0..=samples {
            let t = t0 + (t1 - t0) * i as f64 / samples as f64;
            l_min = l_min.min(w.length_at(t).0);
        }
        if let Some(s) = &w.spline {
            for &t in s.knots.iter().filter(|&&t| t >= t0 && t <= t1) {
                l_min = l_min.min(w.length_at(t).0);
            }
        }
        if !(l_min > 0.0 && l_min.is_finite()) {
            return Err(Error::Domain(format!(
                "circle length must stay positive, minimum {l_min}"
            )));
        }
        Ok(w)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn profile(&self) -> &LengthProfile {
        &self.profile
    }

    /// `(l(t), l'(t))`.
    pub fn length_at(&self, t: f64) -> (f64, f64) {
        match &self.profile {
            LengthProfile::Constant { value } => (*value, 0.0),
            LengthProfile::Linear { start, end } => {
                let slope = (end - start) / (self.t1 - self.t0);
                (start + slope * (t - self.t0), slope)
            }
            LengthProfile::Table { .. } => self.spline.as_ref().expect("table spline").eval(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    fn natural(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Domain("length table needs at least two matching samples".into()));
        }
        if x.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Domain("length table times must increase strictly".into()));
        }
        // tridiagonal solve for the second derivatives, zero at both ends
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { m[i + 2] } else { 0.0 };
                m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
            }
        }
        Ok(CubicSpline {
            knots: x.to_vec(),
            values: y.to_vec(),
            second: m,
        })
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let x = &self.knots;
        let i = match x.iter().rposition(|&xi| xi <= t) {
            Some(i) if i + 1 < x.len() => i,
            Some(_) => x.len() - 2,
            None => 0,
        };
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let deriv = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        (value, deriv)
    }
}

/// How the mode equation is stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical RK4 on the exponent `log u_k`, whose right-hand side does
    /// not depend on the state; step error is set by the smoothness of `l`
    /// rather than by the oscillation frequency of the mode.
    #[default]
    Exponent,
    /// Classical RK4 on `u_k` itself.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evolution {
    Ultrastatic {
        time: f64,
    },
    Warped {
        geometry: WarpedProduct,
        step: f64,
        integrator: Integrator,
    },
    SyntheticUnitary {
        seed: u64,
        /// Number of elementary rotations; defaults to four per dimension.
        rotations: Option<usize>,
    },
    ExplicitUnitary {
        window: TruncationWindow,
        matrix: CMatrix,
    },
}

impl Evolution {
    /// Whether the spacetime has product structure (ultrastatic). Only then
    /// do the spectral index formulas apply without geometric terms.
    pub fn is_product(&self) -> bool {
        matches!(self, Evolution::Ultrastatic { .. })
    }

    pub fn matrix(
        &self,
        model: &SpectrumModel,
        window: TruncationWindow,
        unitarity_tol: f64,
    ) -> Result<EvolutionMatrix> {
        match self {
            Evolution::Ultrastatic { time } => q_ultrastatic(model, *time, window),
            Evolution::Warped {
                geometry,
                step,
                integrator,
            } => q_warped(model, geometry, window, *step, *integrator, unitarity_tol, Execution::default()),
            Evolution::SyntheticUnitary { seed, rotations } => {
                q_synthetic(*seed, *rotations, model.ambient_dim(window))
            }
            Evolution::ExplicitUnitary { window: w, matrix } => {
                if *w != window {
                    return Err(Error::InvalidCondition(format!(
                        "explicit unitary is locked to window {}",
                        w.radius
                    )));
                }
                EvolutionMatrix::new(matrix.clone(), unitarity_tol)
            }
        }
    }
}

/// Dense unitary on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionMatrix {
    matrix: CMatrix,
}

impl EvolutionMatrix {
    /// Accepts `q` if `‖q^† q - 1‖ <= tol * dim`.
    pub fn new(q: CMatrix, tol: f64) -> Result<Self> {
        let dim = q.nrows().max(1) as f64;
        let deviation = unitarity_defect(&q);
        if deviation > tol * dim {
            return Err(Error::StepTooLarge {
                deviation,
                tolerance: tol * dim,
            });
        }
        Ok(EvolutionMatrix { matrix: q })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> CMatrix {
        self.matrix.adjoint()
    }
}

/// `exp(2πi x)`, exact at multiples of one quarter.
fn unit_phase(x: f64) -> Complex64 {
    let r = x.rem_euclid(1.0);
    let q = r * 4.0;
    if q.fract() == 0.0 {
        return match q as u8 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, 2.0 * PI * r)
}

/// Diagonal evolution `exp(i λ T)` on a product cylinder of time span `T`.
pub fn q_ultrastatic(
    model: &SpectrumModel,
    time: f64,
    window: TruncationWindow,
) -> Result<EvolutionMatrix> {
    let phases: Vec<Complex64> = match model {
        SpectrumModel::Circle(c) => model
            .modes(window)
            .into_iter()
            .map(|m| {
                let r = c.reduced_eigenvalue(m)?;
                // λ T = 2π r T / l
                Ok(unit_phase(r * time / c.length()))
            })
            .collect::<Result<_>>()?,
        SpectrumModel::Synthetic(_) => model
            .enumerate_modes(window)
            .into_iter()
            .map(|(_, l)| Complex64::from_polar(1.0, l * time))
            .collect(),
    };
    Ok(EvolutionMatrix {
        matrix: CMatrix::from_diagonal(&DVector::from_vec(phases)),
    })
}

/// `u_k(t1) / u_k(t0)` for every mode of the window, without the volume
/// weight.
pub fn warped_mode_ratios(
    model: &SpectrumModel,
    geometry: &WarpedProduct,
    window: TruncationWindow,
    step: f64,
    integrator: Integrator,
    exec: Execution,
) -> Result<Vec<Complex64>> {
    let circle = model.as_circle().ok_or_else(|| {
        Error::UnsupportedModel("warped evolution needs a circle model".into())
    })?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Domain(format!("integrator step must be positive, got {step}")));
    }
    let (t0, t1) = geometry.interval();
    let steps = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let reduced: Vec<f64> = model
        .modes(window)
        .into_iter()
        .map(|m| circle.reduced_eigenvalue(m))
        .collect::<Result<_>>()?;

    let rate = |r: f64, t: f64| -> Complex64 {
        let (l, dl) = geometry.length_at(t);
        Complex64::new(-dl / (2.0 * l), 2.0 * PI * r / l)
    };

    let ratios = map_collect(exec, &reduced, |&r| match integrator {
        Integrator::Exponent => {
            let mut phi = Complex64::new(0.0, 0.0);
            for i in 0..steps {
                let t = t0 + h * i as f64;
                let k1 = rate(r, t);
                let k23 = rate(r, t + 0.5 * h);
                let k4 = rate(r, t + h);
                phi += (k1 + k23 * 4.0 + k4) * (h / 6.0);
            }
            phi.exp()
        }
        Integrator::Direct => {
            let mut u = Complex64::new(1.0, 0.0);
            for i in 0..steps {
                let t = t0 + h * i as f64;
                let k1 = rate(r, t) * u;
                let k2 = rate(r, t + 0.5 * h) * (u + k1 * (0.5 * h));
                let k3 = rate(r, t + 0.5 * h) * (u + k2 * (0.5 * h));
                let k4 = rate(r, t + h) * (u + k3 * h);
                u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            u
        }
    });
    Ok(ratios)
}

/// Evolution across a warped product, unitary for the length-weighted norms:
/// `sqrt(l(t1)/l(t0)) · diag(u_k(t1)/u_k(t0))`.
pub fn q_warped(
    model: &SpectrumModel,
    geometry: &WarpedProduct,
    window: TruncationWindow,
    step: f64,
    integrator: Integrator,
    unitarity_tol: f64,
    exec: Execution,
) -> Result<EvolutionMatrix> {
    let ratios = warped_mode_ratios(model, geometry, window, step, integrator, exec)?;
    let (t0, t1) = geometry.interval();
    let weight = (geometry.length_at(t1).0 / geometry.length_at(t0).0).sqrt();
    let diag: Vec<Complex64> = ratios.into_iter().map(|z| z * weight).collect();
    let q = CMatrix::from_diagonal(&DVector::from_vec(diag));
    let deviation = unitarity_defect(&q);
    if deviation > unitarity_tol {
        return Err(Error::StepTooLarge {
            deviation,
            tolerance: unitarity_tol,
        });
    }
    Ok(EvolutionMatrix { matrix: q })
}

/// Seeded product of random complex Givens rotations on a `dim`-dimensional
/// space.
pub fn q_synthetic(seed: u64, rotations: Option<usize>, dim: usize) -> Result<EvolutionMatrix> {
    let mut q = CMatrix::identity(dim, dim);
    if dim < 2 {
        return Ok(EvolutionMatrix { matrix: q });
    }
    let count = rotations.unwrap_or(4 * dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (dim as u64).rotate_left(32));
    for _ in 0..count {
        let i = rng.random_range(0..dim);
        let mut j = rng.random_range(0..dim - 1);
        if j >= i {
            j += 1;
        }
        let angle: f64 = rng.random::<f64>() * PI;
        let phase: f64 = rng.random::<f64>() * 2.0 * PI;
        let (s, c) = angle.sin_cos();
        let e = Complex64::from_polar(1.0, phase);
        // rows i, j <- [[c, -conj(e) s], [e s, c]] · rows i, j
        for col in 0..dim {
            let a = q[(i, col)];
            let b = q[(j, col)];
            q[(i, col)] = a * c - e.conj() * b * s;
            q[(j, col)] = e * a * s + b * c;
        }
    }
    Ok(EvolutionMatrix { matrix: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{CircleDiracModel, SpinStructure};

    fn model(spin: SpinStructure) -> SpectrumModel {
        CircleDiracModel::standard(spin).into()
    }

    #[test]
    fn ultrastatic_examples() {
        let w = TruncationWindow::new(16).unwrap();
        let n = model(SpinStructure::Trivial).ambient_dim(w);
        let q = q_ultrastatic(&model(SpinStructure::Trivial), 1.0, w).unwrap();
        assert_eq!(q.matrix(), &CMatrix::identity(n, n));
        let q = q_ultrastatic(&model(SpinStructure::Nontrivial), 1.0, w).unwrap();
        assert_eq!(q.matrix(), &(-CMatrix::identity(n, n)));
        let q = q_ultrastatic(&model(SpinStructure::Nontrivial), 0.0, w).unwrap();
        assert_eq!(q.matrix(), &CMatrix::identity(n, n));
    }

    #[test]
    fn ultrastatic_group_property() {
        let m: SpectrumModel = CircleDiracModel::new(SpinStructure::Nontrivial, 0.3, 1.3, 2, true)
            .unwrap()
            .into();
        let w = TruncationWindow::new(8).unwrap();
        let (t1, t2) = (0.37, 1.21);
        let a = q_ultrastatic(&m, t1, w).unwrap();
        let b = q_ultrastatic(&m, t2, w).unwrap();
        let ab = q_ultrastatic(&m, t1 + t2, w).unwrap();
        assert!((b.matrix() * a.matrix() - ab.matrix()).norm() < 1e-12);
    }

    #[test]
    fn constant_warp_reduces_to_ultrastatic() {
        let m = model(SpinStructure::Nontrivial);
        let w = TruncationWindow::new(12).unwrap();
        let geo = WarpedProduct::new(LengthProfile::Constant { value: 1.0 }, 0.0, 0.7).unwrap();
        let q = q_warped(&m, &geo, w, 1e-3, Integrator::Exponent, 1e-9, Execution::Sequential).unwrap();
        let u = q_ultrastatic(&m, 0.7, w).unwrap();
        assert!((q.matrix() - u.matrix()).norm() < 1e-10);
    }

    #[test]
    fn direct_rk4_fails_unitarity_on_fast_modes() {
        let m = model(SpinStructure::Trivial);
        let w = TruncationWindow::new(64).unwrap();
        let geo = WarpedProduct::new(LengthProfile::Linear { start: 1.0, end: 1.5 }, 0.0, 1.0).unwrap();
        let err = q_warped(&m, &geo, w, 1e-3, Integrator::Direct, 1e-9, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn spline_reproduces_linear_data() {
        let s = CubicSpline::natural(&[0.0, 0.5, 1.0, 2.0], &[1.0, 1.25, 1.5, 2.0]).unwrap();
        for t in [0.0, 0.3, 0.77, 1.5, 2.0] {
            let (v, d) = s.eval(t);
            assert!((v - (1.0 + 0.5 * t)).abs() < 1e-14);
            assert!((d - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn nonpositive_length_is_rejected() {
        let err = WarpedProduct::new(LengthProfile::Linear { start: 1.0, end: -0.5 }, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn synthetic_unitaries() {
        let a = q_synthetic(7, None, 17).unwrap();
        assert!(unitarity_defect(a.matrix()) <= 1e-12);
        assert_eq!(a, q_synthetic(7, None, 17).unwrap());
        assert_ne!(a, q_synthetic(8, None, 17).unwrap());
        assert_eq!(q_synthetic(7, Some(0), 5).unwrap().matrix(), &CMatrix::identity(5, 5));
    }
}
