//! Large-scale propagation: log-distance pathloss, antenna gain, shadowing.

/// Shortest distance used in the pathloss formula.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub antenna_gain_db: f64,
    pub shadowing_sigma_db: f64,
    pub noise_dbm_per_hz: f64,
}

impl ChannelParams {
    /// `intercept + slope * log10(d / 1 km)`; distances below 1 m are clamped.
    pub fn pathloss_db(&self, distance_m: f64) -> f64 {
        let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
        self.pathloss_intercept_db + self.pathloss_slope_db * d_km.log10()
    }

    pub fn gain_db(&self, distance_m: f64, shadowing_db: f64) -> f64 {
        self.antenna_gain_db - self.pathloss_db(distance_m) - shadowing_db
    }

    /// Linear power gain of a link.
    pub fn gain(&self, distance_m: f64, shadowing_db: f64) -> f64 {
        db_to_linear(self.gain_db(distance_m, shadowing_db))
    }

    /// Noise power over `bandwidth_hz`, in watts.
    pub fn noise_w(&self, bandwidth_hz: f64) -> f64 {
        dbm_to_w(self.noise_dbm_per_hz) * bandwidth_hz
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Shannon capacity of one resource block, in bits/s.
pub fn rb_capacity(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}
