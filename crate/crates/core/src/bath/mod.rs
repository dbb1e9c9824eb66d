//! Reservoir spectral density and the two kernels built from it: the
//! memory kernel `f(t) = 2i int J(w) sin(w t) dw` and the stationary thermal
//! noise kernel `f_th(tau1 - tau2)`.

pub mod quad;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Result, SimError};
use crate::model::{Occupation, TimeGrid};

/// `J(w) = eta * w * (w / omega_l)^(s - 1) * exp(-w / omega_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub eta: f64,
    pub omega_l: f64,
    pub s_exponent: f64,
}

impl SpectralDensity {
    pub fn new(eta: f64, omega_l: f64, s_exponent: f64) -> Self {
        SpectralDensity { eta, omega_l, s_exponent }
    }

    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(SimError::Domain(format!("spectral density at omega = {omega} < 0")));
        }
        Ok(self.eval_unchecked(omega))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        self.eta * omega * (omega / self.omega_l).powf(self.s_exponent - 1.0) * (-omega / self.omega_l).exp()
    }

    /// `int_0^inf J(w) dw = eta * omega_l^2 * Gamma(s + 1)`.
    pub fn total_weight(&self) -> f64 {
        self.eta * self.omega_l * self.omega_l * gamma(self.s_exponent + 1.0)
    }

    /// Upper frequency limit where the cutoff factor `exp(-w/omega_l)` is below ~1e-17.
    pub fn frequency_cutoff(&self) -> f64 {
        self.omega_l * (40.0 + 10.0 * self.s_exponent)
    }

    /// One-sided Fourier transform `int_0^inf J(w) e^{i w t} dw`
    /// `= eta * omega_l^2 * Gamma(s+1) * (1 - i omega_l t)^{-(s+1)}`.
    pub fn fourier(&self, t: f64) -> Complex64 {
        let x = self.omega_l * t;
        let p = self.s_exponent + 1.0;
        let modulus = self.total_weight() * (1.0 + x * x).powf(-0.5 * p);
        Complex64::from_polar(modulus, p * x.atan())
    }

    /// Memory kernel `f(t)`, purely imaginary, from the Gamma-function integral.
    pub fn memory_kernel(&self, t: f64) -> Result<Complex64> {
        if !(t >= 0.0) {
            return Err(SimError::Domain(format!("memory kernel at t = {t} < 0")));
        }
        Ok(Complex64::new(0.0, self.memory_kernel_im(t)))
    }

    #[inline]
    pub(crate) fn memory_kernel_im(&self, t: f64) -> f64 {
        let x = self.omega_l * t;
        let p = self.s_exponent + 1.0;
        2.0 * self.total_weight() * (p * x.atan()).sin() * (1.0 + x * x).powf(-0.5 * p)
    }

    /// Memory kernel by direct adaptive quadrature of `2i int J(w) sin(w t) dw`.
    pub fn memory_kernel_quadrature(&self, t: f64) -> Result<Complex64> {
        if !(t >= 0.0) {
            return Err(SimError::Domain(format!("memory kernel at t = {t} < 0")));
        }
        let (_, sine) = self.fourier_quadrature(|w| (0.0, self.eval_unchecked(w)), t);
        Ok(Complex64::new(0.0, 2.0 * sine))
    }

    /// Thermal noise kernel
    /// `f_th(tau1, tau2) = int J(w) [e^{-i w (tau1 - tau2)} + 2 cos(w (tau1 - tau2)) n(w)] dw`
    /// by adaptive quadrature.
    pub fn thermal_kernel(&self, tau1: f64, tau2: f64, occupation: &Occupation) -> Result<Complex64> {
        if !(tau1 >= 0.0) || !(tau2 >= 0.0) {
            return Err(SimError::Domain(format!("thermal kernel at ({tau1}, {tau2})")));
        }
        let (cosine, sine) = self.fourier_quadrature(
            |w| {
                let j = self.eval_unchecked(w);
                let n = if w == 0.0 { 0.0 } else { occupation.mean(w) };
                (j * (1.0 + 2.0 * n), j)
            },
            tau1 - tau2,
        );
        Ok(Complex64::new(cosine, -sine))
    }

    /// `(int a_c(w) cos(w lag) dw, int a_s(w) sin(w lag) dw)` over `[0, w_max]`.
    ///
    /// The range is cut into half periods `[k pi, (k+1) pi] / |lag|`, and each
    /// panel is integrated in the local phase `y = w |lag| - k pi` so that the
    /// trigonometric factors are evaluated at small, exactly represented arguments.
    fn fourier_quadrature<F: Fn(f64) -> (f64, f64)>(&self, amp: F, lag: f64) -> (f64, f64) {
        let wmax = self.frequency_cutoff();
        let omega_l = self.omega_l;
        let panel = |lo: f64, hi: f64, g: &dyn Fn(f64) -> Complex64| {
            let n_breaks = ((hi - lo) / omega_l).ceil() as usize;
            let breaks: Vec<f64> = (1..n_breaks).map(|k| lo + k as f64 * omega_l).collect();
            quad::integrate(g, lo, hi, &breaks, 1e-300, 1e-14, 2_000).value
        };
        if lag == 0.0 {
            let v = panel(0.0, wmax, &|w| Complex64::new(amp(w).0, 0.0));
            return (v.re, 0.0);
        }
        let tau = lag.abs();
        let half_period = std::f64::consts::PI / tau;
        let mut cosine = 0.0;
        let mut sine = 0.0;
        let mut k = 0usize;
        while (k as f64) * half_period < wmax {
            let w0 = k as f64 * half_period;
            let width = (wmax - w0).min(half_period);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let v = panel(0.0, width, &|dw| {
                let (ac, as_) = amp(w0 + dw);
                let (sn, cs) = (dw * tau).sin_cos();
                Complex64::new(ac * cs, as_ * sn)
            });
            cosine += sign * v.re;
            sine += sign * v.im;
            k += 1;
        }
        (cosine, sine * lag.signum())
    }

    /// Thermal kernel at a lag from closed forms: the Gamma integral for a
    /// flat occupation and its geometric-series extension for Bose-Einstein.
    pub fn thermal_kernel_lag(&self, lag: f64, occupation: &Occupation) -> Complex64 {
        let vac = self.fourier(lag);
        let thermal_cos = match *occupation {
            Occupation::Flat(m) => m * vac.re,
            Occupation::BoseEinstein { temperature } if temperature > 0.0 => self.bose_series(lag, temperature).re,
            Occupation::BoseEinstein { .. } => 0.0,
        };
        Complex64::new(vac.re + 2.0 * thermal_cos, -vac.im)
    }

    /// `int J(w) n_BE(w) e^{i w lag} dw` with `n_BE = sum_k e^{-k w / T}`:
    /// each term is a Gamma integral; the tail is closed by Euler-Maclaurin.
    fn bose_series(&self, lag: f64, temperature: f64) -> Complex64 {
        const TERMS: usize = 64;
        let s = self.s_exponent;
        let c = self.eta * self.omega_l.powf(1.0 - s) * gamma(s + 1.0);
        let a = 1.0 / self.omega_l;
        let b = 1.0 / temperature;
        let z = |x: f64| Complex64::new(a + x * b, -lag);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..=TERMS {
            sum += z(k as f64).powf(-(s + 1.0));
        }
        let zx = z(TERMS as f64 + 0.5);
        let tail = zx.powf(-s) / (s * b) - zx.powf(-(s + 2.0)) * ((s + 1.0) * b / 24.0);
        (sum + tail) * c
    }
}

/// Kernel tables on the lag grid `t_j = j * dt`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: TimeGrid,
    /// `Im f(t_j)`; the memory kernel itself is `i * memory_im[j]`.
    pub memory_im: Vec<f64>,
    /// `f_th(t_j)`; negative lags are the complex conjugate.
    pub thermal: Vec<Complex64>,
}

impl KernelTable {
    pub fn build(density: &SpectralDensity, occupation: &Occupation, grid: &TimeGrid) -> Self {
        let memory_im = (0..grid.len()).map(|j| density.memory_kernel_im(grid.t(j))).collect();
        let thermal = (0..grid.len()).map(|j| density.thermal_kernel_lag(grid.t(j), occupation)).collect();
        KernelTable { grid: *grid, memory_im, thermal }
    }

    #[inline]
    pub fn memory(&self, j: usize) -> Complex64 {
        Complex64::new(0.0, self.memory_im[j])
    }

    /// `f_th(t_i - t_j)` for arbitrary index order.
    #[inline]
    pub fn thermal_between(&self, i: usize, j: usize) -> Complex64 {
        if i >= j {
            self.thermal[i - j]
        } else {
            self.thermal[j - i].conj()
        }
    }
}
