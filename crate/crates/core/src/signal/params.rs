use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs of the randomized guiding-signal generator. Stage probabilities
/// default to 0.75 / 0.75 / 0.5 / 0.5 for approximation, smoothing,
/// partitioning and distance thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub p_approx: f64,
    pub p_smooth: f64,
    pub p_partition: f64,
    pub p_distthresh: f64,
    /// Douglas–Peucker tolerance, pixels.
    pub approx_eps_range: [f64; 2],
    /// Odd smoothing window sizes, pixels.
    pub smooth_kernel_range: [usize; 2],
    pub smooth_sigma_range: [f64; 2],
    pub partition_cell: usize,
    pub distthresh_fraction_range: [f64; 2],
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            p_approx: 0.75,
            p_smooth: 0.75,
            p_partition: 0.5,
            p_distthresh: 0.5,
            approx_eps_range: [2.0, 10.0],
            smooth_kernel_range: [9, 25],
            smooth_sigma_range: [3.0, 15.0],
            partition_cell: 96,
            distthresh_fraction_range: [0.1, 0.7],
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        GenParams {
            seed,
            ..GenParams::default()
        }
    }

    /// All stages disabled: the generator reduces to a plain skeleton.
    pub fn skeleton_only(seed: u64) -> Self {
        GenParams {
            p_approx: 0.0,
            p_smooth: 0.0,
            p_partition: 0.0,
            p_distthresh: 0.0,
            seed,
            ..GenParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_approx", self.p_approx),
            ("p_smooth", self.p_smooth),
            ("p_partition", self.p_partition),
            ("p_distthresh", self.p_distthresh),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let check_range = |name: &str, [lo, hi]: [f64; 2], min: f64| {
            if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name} must satisfy {min} <= low <= high, got [{lo}, {hi}]"
                )));
            }
            Ok(())
        };
        check_range("approx_eps_range", self.approx_eps_range, 0.0)?;
        check_range(
            "smooth_sigma_range",
            self.smooth_sigma_range,
            f64::MIN_POSITIVE,
        )?;
        check_range(
            "distthresh_fraction_range",
            self.distthresh_fraction_range,
            0.0,
        )?;
        if self.distthresh_fraction_range[1] >= 1.0 {
            return Err(Error::invalid(
                "distthresh_fraction_range must lie in [0, 1)",
            ));
        }
        let [klo, khi] = self.smooth_kernel_range;
        if klo > khi || klo < 3 || klo % 2 == 0 || khi % 2 == 0 {
            return Err(Error::invalid(format!(
                "smooth_kernel_range bounds must be odd, >= 3 and ordered, got [{klo}, {khi}]"
            )));
        }
        if self.partition_cell == 0 {
            return Err(Error::invalid("partition_cell must be >= 1"));
        }
        Ok(())
    }
}
