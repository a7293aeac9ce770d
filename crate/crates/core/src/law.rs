//! Continuous one-dimensional laws evaluated through their distribution,
//! density and quantile functions.

/// A continuous law on the real line.
///
/// `quantile` must be the inverse of `cdf` on the interior of the support.
pub trait Law {
    fn cdf(&self, x: f64) -> f64;
    fn pdf(&self, x: f64) -> f64;
    fn quantile(&self, y: f64) -> f64;
}

impl<L: Law + ?Sized> Law for &L {
    fn cdf(&self, x: f64) -> f64 {
        (**self).cdf(x)
    }
    fn pdf(&self, x: f64) -> f64 {
        (**self).pdf(x)
    }
    fn quantile(&self, y: f64) -> f64 {
        (**self).quantile(y)
    }
}

/// The uniform law on [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StandardUniform;

impl Law for StandardUniform {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
    fn pdf(&self, x: f64) -> f64 {
        if (0.0..=1.0).contains(&x) {
            1.0
        } else {
            0.0
        }
    }
    fn quantile(&self, y: f64) -> f64 {
        y.clamp(0.0, 1.0)
    }
}

/// The law of `scale * Z` where `Z` follows `inner`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<L> {
    pub inner: L,
    pub scale: f64,
}

impl<L: Law> Law for Scaled<L> {
    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x / self.scale)
    }
    fn pdf(&self, x: f64) -> f64 {
        self.inner.pdf(x / self.scale) / self.scale
    }
    fn quantile(&self, y: f64) -> f64 {
        self.scale * self.inner.quantile(y)
    }
}
