//! Exact sampling primitives.

mod exit_time;
mod inverse_gaussian;
mod meander;
mod paths;
mod pseries;
mod skeleton;
mod stream;

pub use exit_time::{sample_exit_time, ExitSample};
pub use inverse_gaussian::sample_inverse_gaussian;
pub use meander::{end_piece_truncations, sample_meander_max, END_PIECE_TOLERANCE};
pub use paths::{sample_bridge_point, Point};
pub use pseries::{bernoulli_p_series, eval_p_series, p_series_fallbacks, PSeries, SeriesBounds, MAX_TERM_PAIRS};
pub use skeleton::sample_skeleton_given_exit;
pub use stream::RandomStream;

pub(crate) use meander::{resolve_down_exit, sample_corridor_max};
pub(crate) use paths::{bridge_point_unchecked, positive_bridge_point};
pub(crate) use pseries::positive_bridge_stays_below;
pub(crate) use skeleton::check_ascending;
