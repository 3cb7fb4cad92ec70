//! Finite-sample machinery for mean dimension and dynamical embeddings of
//! Z^k actions.

pub mod covers;
pub mod embedders;
pub mod error;
pub mod genlin;
pub mod meandim;
pub mod rng;
pub mod rokhlin;
pub mod systems;

pub use covers::{widim, CandidateFamily, Cover, PartitionOfUnity, RadiusGrid, WidimMode, WidimOptions, WidimResult};
pub use embedders::{CollisionTest, DelayVector, EmbeddingReport, Family, Observable, PairSet};
pub use error::{Error, Result};
pub use meandim::{mdim_curve, mdim_estimate, MdimCurve, MdimEstimate, MdimRow};
pub use rokhlin::{FactorMap, TowerSystem, TowerVerdict};
pub use systems::{DistMatrix, GroupElement, SampledAction, SampledSpace, SystemSpec};
