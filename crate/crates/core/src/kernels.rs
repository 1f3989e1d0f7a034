//! Compactly supported symmetric kernels on `[-1, 1]`.
//!
//! Bivariate and trivariate smoothing weights are products of these
//! univariate kernels.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::quadrature::simpson;
use crate::{Error, Result};

/// Half-width of every kernel's support.
pub const SUPPORT_RADIUS: f64 = 1.0;

const MOMENT_PANELS: usize = 10_000;
const CACHED_MOMENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Epanechnikov,
    Quartic,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const EPANECHNIKOV: KernelSpec = KernelSpec {
        family: KernelFamily::Epanechnikov,
    };

    pub fn new(family: KernelFamily) -> Self {
        KernelSpec { family }
    }

    /// Kernel value at `u`; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-SUPPORT_RADIUS..=SUPPORT_RADIUS).contains(&u) {
            return 0.0;
        }
        match self.family {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFamily::Quartic => {
                let a = 1.0 - u * u;
                0.9375 * a * a
            }
            KernelFamily::Uniform => 0.5,
        }
    }

    /// `h⁻¹ k(u / h)`.
    pub fn scaled(&self, u: f64, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive and finite, got {h}"
            )));
        }
        Ok(self.scaled_unchecked(u, h))
    }

    #[inline]
    pub(crate) fn scaled_unchecked(&self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }

    /// `∫ uᵏ k(u) du`. Orders 0..=4 are computed once per family and cached.
    pub fn moment(&self, order: u32) -> f64 {
        if (order as usize) < CACHED_MOMENTS {
            return self.cached_moments()[order as usize];
        }
        self.integrate_moment(order)
    }

    fn integrate_moment(&self, order: u32) -> f64 {
        simpson(
            |u| u.powi(order as i32) * self.eval(u),
            -SUPPORT_RADIUS,
            SUPPORT_RADIUS,
            MOMENT_PANELS,
        )
    }

    fn cached_moments(&self) -> &'static [f64; CACHED_MOMENTS] {
        static EPAN: OnceLock<[f64; CACHED_MOMENTS]> = OnceLock::new();
        static QUART: OnceLock<[f64; CACHED_MOMENTS]> = OnceLock::new();
        static UNIF: OnceLock<[f64; CACHED_MOMENTS]> = OnceLock::new();
        let cell = match self.family {
            KernelFamily::Epanechnikov => &EPAN,
            KernelFamily::Quartic => &QUART,
            KernelFamily::Uniform => &UNIF,
        };
        cell.get_or_init(|| std::array::from_fn(|k| self.integrate_moment(k as u32)))
    }
}

pub fn kernel_eval(spec: KernelSpec, u: f64) -> f64 {
    spec.eval(u)
}

pub fn kernel_moment(spec: KernelSpec, order: u32) -> f64 {
    spec.moment(order)
}

pub fn scaled_kernel(spec: KernelSpec, u: f64, h: f64) -> Result<f64> {
    spec.scaled(u, h)
}
