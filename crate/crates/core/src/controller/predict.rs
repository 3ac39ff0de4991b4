//! Closed-form lock-time predictors. Times in seconds, frequencies in Hz,
//! phases in radians.

use crate::scalar::{from_u32, lit, Scalar};

/// Linear search: one LSB of phase per control cycle.
pub fn predict_lock_time_linear<T: Scalar>(dphi_init: T, f_clkin: T, dt_lsb: T, f_clkctrl: T) -> T {
    let dphi_lsb = lit::<T>(2.0) * T::PI() * f_clkin * dt_lsb;
    dphi_init / dphi_lsb / f_clkctrl
}

/// Coarse steps of `k` LSBs followed by at most `k` unit steps.
pub fn predict_lock_time_coarse_fine<T: Scalar>(
    dphi_init: T,
    dphi_lsb: T,
    k: u32,
    f_clkctrl: T,
) -> T {
    let k = from_u32::<T>(k);
    (dphi_init / (k * dphi_lsb) + k) / f_clkctrl
}

/// Coarse step minimizing the coarse-fine worst case.
pub fn coarse_fine_k_opt<T: Scalar>(dphi_init: T, dphi_lsb: T) -> T {
    (dphi_init / dphi_lsb).sqrt()
}

/// Binary search: `bits` halving updates plus the lock cycle.
pub fn predict_lock_time_bs<T: Scalar>(bits: u32, f_clkctrl: T) -> T {
    from_u32::<T>(bits + 1) / f_clkctrl
}
