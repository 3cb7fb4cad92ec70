//! Observables, delay maps, separation tests and the local embedding constructions.

mod delay;
mod embed;
mod observable;
mod simplicial;
mod takens;

pub use delay::{
    delay_from_table, delay_map_z, delay_map_zk, genericity_experiment, repeat_block, separation_report,
    takens_hypothesis, CollisionTest, DelayVector, EmbeddingReport, GenericityReport, HypothesisCheck, PairSet, TAU_EQ,
};
pub use embed::{eps_embed, scan_eps_embedding, tietze_extend, EpsEmbedReport, EpsEmbedding, GP_RETRIES};
pub use observable::{sup_dist, Family, Observable};
pub use simplicial::{hull_distance, pl_collision, resolution_complex, Collision};
pub use takens::{
    extend_and_check, takens_local_construct, DkReport, LocalPiece, Regions, TakensConstruction, TakensVerification,
};
