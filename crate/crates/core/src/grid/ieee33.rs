use super::network::Network;

/// Baran–Wu 33-bus feeder (12.66 kV, 10 MVA base, impedances in ohms).
pub const IEEE33_JSON: &str = include_str!("../../data/ieee33.json");

/// Winter capacitor bank, (bus, MVAR). Bus ids are 0-based, the same
/// numbering pandapower uses for `case33bw`.
pub const WINTER_SHUNTS: &[(usize, f64)] = &[(14, 1.2)];

/// Summer adds 0.6 / 0.6 / 1.2 MVAR at buses 14, 24 and 30.
pub const SUMMER_SHUNTS: &[(usize, f64)] = &[(14, 1.8), (24, 0.6), (30, 1.2)];

pub fn load_ieee33() -> Network {
    Network::from_json_str(IEEE33_JSON).expect("embedded IEEE-33 data is valid")
}

/// Resets every shunt, then applies the seasonal capacitor set.
pub fn set_seasonal_capacitors(net: &mut Network, summer: bool) {
    apply_shunts(net, if summer { SUMMER_SHUNTS } else { WINTER_SHUNTS });
}

pub(crate) fn apply_shunts(net: &mut Network, shunts: &[(usize, f64)]) {
    for bus in &mut net.buses {
        bus.shunt_q = 0.0;
    }
    for &(bus, q) in shunts {
        if let Some(b) = net.buses.get_mut(bus) {
            b.shunt_q += q;
        }
    }
}
