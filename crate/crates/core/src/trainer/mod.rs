//! Two-phase training.

mod loss_log;
mod losses;
mod phase_one;
mod phase_two;
mod pseudo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use loss_log::{read_loss_log, LossLog, LossRecord};
pub use losses::{
    phase_one_discriminator_grads, phase_one_generator_grads, phase_two_grads,
    phase_two_loss_from_scores, stream_loss, PhaseOneLosses, PhaseTwoStreams, LOG_EPS,
};
pub use phase_one::{
    build_g_old, epoch_dir, phase_one_step, run_phase_one, GOldStrategy, PhaseOneOptions,
    PhaseOneResult,
};
pub use phase_two::{
    build_streams, checkpoint_iterations, iteration_dir, phase_two_step, run_phase_two,
    AblationPreset, AblationVariant, PhaseTwoOptions, PhaseTwoResult,
};
pub use pseudo::{make_pseudo_anomaly, mix_pairs, reconstruct_pseudo, sample_pairs};

/// Independent deterministic RNG stream `stream` for `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
