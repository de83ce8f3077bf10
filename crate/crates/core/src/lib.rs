//! Time-frequency tiles, wave packet transforms, outer Lebesgue norms on tile
//! spaces and sparse bounds for Carleson-type and rank-1 model forms, all on
//! finite periodic discrete signals.

pub mod dyadic;
pub mod multifreq;
pub mod rank1;
pub mod selection;
pub mod signal;
pub mod sparsedom;
pub mod treespace;
pub mod wavepackets;
