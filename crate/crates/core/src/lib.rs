//! LR-FHSS frequency-hopping sequence families, Hamming-correlation analysis
//! and a slotted gateway simulator for comparing them under load.

pub mod campaign;
pub mod catalog;
pub mod channel;
pub mod correlation;
pub mod families;
pub mod gateway;
pub mod lfsr;
