use serde::{Deserialize, Serialize};

/// Radio parameters: airtime from frame sizes and data rate, power per action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub data_rate_bps: f64,
    pub packet_bits: f64,
    pub beacon_bits: f64,
    /// Route request and route reply frames.
    pub control_bits: f64,
    pub tx_power_high_w: f64,
    pub tx_power_low_w: f64,
    pub rx_power_w: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            data_rate_bps: 15_000.0,
            packet_bits: 1024.0,
            beacon_bits: 64.0,
            control_bits: 160.0,
            tx_power_high_w: 0.8,
            tx_power_low_w: 0.1,
            rx_power_w: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerLevel {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadioAction {
    Tx(PowerLevel),
    Rx,
    Idle,
}

impl EnergyModel {
    pub fn airtime(&self, bits: f64) -> f64 {
        bits / self.data_rate_bps
    }

    pub fn packet_airtime(&self) -> f64 {
        self.airtime(self.packet_bits)
    }

    /// High power when the range exceeds half the initial range.
    pub fn power_level(&self, range: f64, initial_range: f64) -> PowerLevel {
        if range > 0.5 * initial_range {
            PowerLevel::High
        } else {
            PowerLevel::Low
        }
    }

    pub fn power(&self, action: RadioAction) -> f64 {
        match action {
            RadioAction::Tx(PowerLevel::High) => self.tx_power_high_w,
            RadioAction::Tx(PowerLevel::Low) => self.tx_power_low_w,
            RadioAction::Rx => self.rx_power_w,
            RadioAction::Idle => 0.0,
        }
    }
}

/// Joules consumed by `action` over `duration` seconds.
pub fn energy_account(model: &EnergyModel, action: RadioAction, duration: f64) -> f64 {
    debug_assert!(duration >= 0.0);
    model.power(action) * duration.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_costs() {
        let m = EnergyModel::default();
        let t = m.packet_airtime();
        assert!((t - 0.068_266_67).abs() < 1e-6);
        let high = energy_account(&m, RadioAction::Tx(PowerLevel::High), t);
        assert!((high - 0.0546).abs() < 1e-4);
        assert_eq!(energy_account(&m, RadioAction::Idle, 10.0), 0.0);
        // 5 J pays for 91 full-power packets
        assert_eq!((5.0 / high).floor(), 91.0);
        assert_eq!(m.power_level(300.0, 500.0), PowerLevel::High);
        assert_eq!(m.power_level(250.0, 500.0), PowerLevel::Low);
    }
}
