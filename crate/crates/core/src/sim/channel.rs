use super::config::ChannelConfig;

/// Path loss in dB at distance `d` metres; flat inside the reference distance.
pub fn path_loss_db(channel: &ChannelConfig, d: f64) -> f64 {
    let d0 = channel.reference_distance_m;
    channel.reference_loss_db + 10.0 * channel.path_loss_exponent * (d.max(d0) / d0).log10()
}

/// Bits one RBG carries to a UE at `ue_pos` during one TTI.
///
/// Shannon rate of the log-distance SNR, capped at the configured spectral
/// efficiency. Non-increasing in distance.
pub fn link_rate(channel: &ChannelConfig, ue_pos: [f64; 2], base_pos: [f64; 2], tti_ms: f64) -> f64 {
    let d = ((ue_pos[0] - base_pos[0]).powi(2) + (ue_pos[1] - base_pos[1]).powi(2)).sqrt();
    let snr_db = channel.tx_power_dbm - path_loss_db(channel, d) - channel.noise_floor_dbm;
    let snr = 10f64.powf(snr_db / 10.0);
    let efficiency = (1.0 + snr).log2().min(channel.max_spectral_efficiency);
    channel.rbg_bandwidth_hz * efficiency * tti_ms / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(channel: &ChannelConfig, d: f64) -> f64 {
        link_rate(channel, [d, 0.0], [0.0, 0.0], 1.0)
    }

    #[test]
    fn reference_distance_saturates_the_cap() {
        let c = ChannelConfig::default();
        let cap = c.rbg_bandwidth_hz * c.max_spectral_efficiency / 1000.0;
        assert!((at(&c, 1.0) - cap).abs() < 1e-9);
        assert!((at(&c, 0.0) - cap).abs() < 1e-9);
    }

    #[test]
    fn rate_is_non_increasing_in_distance() {
        let c = ChannelConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let r = at(&c, i as f64 * 0.25);
            assert!(r <= prev + 1e-12);
            prev = r;
        }
        assert!(at(&c, 60.0) < at(&c, 10.0));
    }

    #[test]
    fn hand_evaluated_rate_at_fifty_metres() {
        // PL = 38 + 30 log10(50) = 88.9691 dB; SNR = 30 - 88.9691 + 90 = 31.0309 dB
        // = 1267.91 linear; log2(1268.91) = 10.30938 bit/s/Hz.
        let uncapped = ChannelConfig {
            tx_power_dbm: 30.0,
            noise_floor_dbm: -90.0,
            max_spectral_efficiency: 100.0,
            rbg_bandwidth_hz: 180e3,
            ..Default::default()
        };
        let expected = 180e3 * 10.309_38 / 1000.0;
        assert!((at(&uncapped, 50.0) - expected).abs() < 0.01, "{}", at(&uncapped, 50.0));
        // with the LTE ceiling the same link sits on the cap
        let capped = ChannelConfig { max_spectral_efficiency: 5.5547, ..uncapped };
        assert!((at(&capped, 50.0) - 180e3 * 5.5547 / 1000.0).abs() < 1e-9);
    }
}
