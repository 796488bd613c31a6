/// Seconds of audio streamed: chunk `t` contributes `N_t` times the
/// duration it covers. The last chunk of a scene may be partial, so
/// `signal_len` caps the total at `len / fs` per microphone.
pub fn comm_cost_seconds(requested: &[usize], chunk_hop: usize, fs: u32, signal_len: usize) -> f64 {
    let samples: usize = requested
        .iter()
        .enumerate()
        .map(|(t, &n)| n * chunk_hop.min(signal_len.saturating_sub(t * chunk_hop)))
        .sum();
    samples as f64 / fs as f64
}
