//! Exactly conservative physics-informed neural networks and DeepONets for
//! ordinary differential equations with first integrals.
//!
//! Candidate solutions produced by a network are mapped onto the invariant
//! manifold of the system by a simplified Newton projection that sits as the
//! last layer of the model and is differentiated through during training.

pub mod autodiff;
pub mod cli;
pub mod networks;
pub mod problems;
pub mod projection;
pub mod reference;
pub mod training;
