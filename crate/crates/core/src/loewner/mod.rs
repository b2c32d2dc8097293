//! Chordal Loewner evolution: driving functions, forward solves, slit
//! zippers for extraction, the geodesic zipper for domain maps, and the
//! spherical metric on paths.

pub mod conformal;
pub mod driving;
pub mod forward;
pub mod metric;
pub mod slit;

pub use conformal::{map_domain_to_h, ConformalMap, MapOptions, Normalization};
pub use driving::{sample_driving, sample_sle4_driving, DrivingFunction};
pub use forward::{solve_forward, solve_forward_with_derivative};
pub use metric::{d_star, d_strong};
pub use slit::{
    extract_driving, halfplane_capacity, trace_from_driving, HalfPlanePath, SlitZipper,
};

use num_complex::Complex64 as C64;

/// Square root in the closed upper half-plane. For arguments on the positive
/// real axis the sign follows `hint` (negative hint gives the negative root).
#[inline]
pub fn sqrt_h(u: C64, hint: f64) -> C64 {
    let s = u.sqrt();
    if s.im < 0.0 {
        -s
    } else if s.im == 0.0 && hint < 0.0 {
        C64::new(-s.re.abs(), 0.0)
    } else {
        s
    }
}
