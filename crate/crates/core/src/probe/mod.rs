//! Probes that read filter behaviour back out of a trained network.
//!
//! - [`enumerate_regions`] finds the activation patterns a piecewise-linear
//!   network visits over a box and the exact FIR taps each pattern realizes.
//! - [`empirical_frequency_response`] drives the network with sinusoids and
//!   measures its gain, the black-box counterpart of a magnitude response.
//! - [`equivalence_audit`] compares two networks by what they compute and by
//!   what their weights look like.

mod audit;
mod regions;
mod sweep;

pub use audit::{equivalence_audit, equivalence_audit_with, AuditResult};
pub use regions::{
    enumerate_regions, enumerate_regions_with, pattern_at, region_fidelity, region_report, ActivationPattern, Fidelity,
    LinearRegion, RegionRecord,
};
pub use sweep::{empirical_frequency_response, empirical_frequency_response_with, EmpiricalResponse, Probe};

use crate::error::{Error, Result};

/// Default grid density per axis for region scans.
pub const DEFAULT_REGION_DENSITY: usize = 401;

/// Default grid density per axis for equivalence audits.
pub const DEFAULT_AUDIT_DENSITY: usize = 101;

/// Largest number of grid points a scan will visit.
const MAX_GRID_POINTS: usize = 50_000_000;

/// Axis-aligned box in input space.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    /// `[lo, hi]^dims`.
    pub fn cube(lo: f64, hi: f64, dims: usize) -> Self {
        Domain {
            lo: vec![lo; dims],
            hi: vec![hi; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.len() != dims {
            return Err(Error::Shape(format!(
                "domain has {}/{} bounds, model takes {dims} inputs",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::InvalidParameter(format!("domain bound [{a}, {b}] is invalid")));
            }
        }
        Ok(())
    }
}

/// Regular grid with `density` points per axis, endpoints included,
/// enumerated with the last axis varying fastest.
#[derive(Debug, Clone)]
pub(crate) struct Grid<'d> {
    domain: &'d Domain,
    density: usize,
    len: usize,
}

impl<'d> Grid<'d> {
    pub(crate) fn new(domain: &'d Domain, density: usize, dims: usize) -> Result<Self> {
        domain.validate(dims)?;
        if density < 2 {
            return Err(Error::InvalidParameter("grid density must be >= 2 per axis".into()));
        }
        let len = (0..dims)
            .try_fold(1usize, |acc, _| acc.checked_mul(density))
            .filter(|&n| n <= MAX_GRID_POINTS)
            .ok_or_else(|| Error::InvalidParameter(format!("{density}^{dims} grid points is too many")))?;
        Ok(Grid { domain, density, len })
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn point(&self, mut index: usize) -> Vec<f64> {
        let dims = self.domain.dims();
        let mut x = vec![0.0; dims];
        let last = (self.density - 1) as f64;
        for d in (0..dims).rev() {
            let i = index % self.density;
            index /= self.density;
            let (lo, hi) = (self.domain.lo[d], self.domain.hi[d]);
            x[d] = if i == self.density - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last
            };
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_endpoints_in_order() {
        let d = Domain::cube(0.0, 1.0, 2);
        let g = Grid::new(&d, 3, 2).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(0), vec![0.0, 0.0]);
        assert_eq!(g.point(1), vec![0.0, 0.5]);
        assert_eq!(g.point(8), vec![1.0, 1.0]);
        assert!(Grid::new(&d, 1, 2).is_err());
        assert!(Grid::new(&d, 3, 3).is_err());
    }
}
