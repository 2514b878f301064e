//! Sector-coupled energy-system LPs and ex-post merit-order reconstruction from their duals.

pub mod model;
pub mod lp;
pub mod pricing;
pub mod clearing;
pub mod analysis;
pub mod pathway;
pub mod export;
pub mod fuzz;
