//! Fixtures shared by the benchmarks.

use relief_core::{prepare_session, synth, Session, SessionConfig, Vector3};

/// Bumpy terrain on an `n * n` grid prepared with `controls` controls.
pub fn terrain_session(n: usize, controls: usize, reference_mode: bool) -> Session {
    let config = SessionConfig {
        controls,
        reference_mode,
        ..Default::default()
    };
    prepare_session(&synth::bumpy(n, 1.0), Vector3::z(), &config).expect("fixture prepares")
}
