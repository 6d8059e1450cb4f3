//! Brushes, sides, s-transversality witnesses and the even-spacing drift.

pub mod brush;
pub mod drift;
pub mod hexloop;

pub use brush::{
    brush_offset, build_brush, integrability_defect, integrability_defect_reversed, pair_at,
    phi_profile, side_of, Brush, LeafArc, PhiSample, Side,
};
pub use drift::{
    build_even_chain, cu_disk_witness, drift_step, ratio_error, remeasure, ChainOpts,
    CuDiskWitness, EvenSpacedChain, Remeasure, StepLog,
};
pub use hexloop::{
    find_hex_loop, forward_image_loop, revalidate, HexLoop, HexLoopSummary, HexOpts,
};
