use serde::{Deserialize, Serialize};

pub const BEACON_MAGIC: &[u8; 8] = b"GRIDLET1";
pub const MAX_BEACON_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BeaconError {
    #[error("bad beacon magic")]
    BadMagic,
    #[error("truncated beacon")]
    Truncated,
    #[error("beacon exceeds {MAX_BEACON_LEN} bytes")]
    TooLong,
    #[error("beacon host is not UTF-8")]
    BadHost,
}

/// Supervisor announcement. Layout: magic (8) | port u16 | host_len u16 | host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Beacon {
    pub supervisor_host: String,
    pub supervisor_port: u16,
}

pub fn encode_beacon(b: &Beacon) -> Result<Vec<u8>, BeaconError> {
    let host = b.supervisor_host.as_bytes();
    let len = BEACON_MAGIC.len() + 4 + host.len();
    if len > MAX_BEACON_LEN {
        return Err(BeaconError::TooLong);
    }
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(BEACON_MAGIC);
    out.extend_from_slice(&b.supervisor_port.to_be_bytes());
    out.extend_from_slice(&(host.len() as u16).to_be_bytes());
    out.extend_from_slice(host);
    Ok(out)
}

pub fn decode_beacon(bytes: &[u8]) -> Result<Beacon, BeaconError> {
    if bytes.len() < BEACON_MAGIC.len() {
        return Err(BeaconError::Truncated);
    }
    if &bytes[..8] != BEACON_MAGIC {
        return Err(BeaconError::BadMagic);
    }
    if bytes.len() > MAX_BEACON_LEN {
        return Err(BeaconError::TooLong);
    }
    let rest = &bytes[8..];
    if rest.len() < 4 {
        return Err(BeaconError::Truncated);
    }
    let port = u16::from_be_bytes([rest[0], rest[1]]);
    let host_len = u16::from_be_bytes([rest[2], rest[3]]) as usize;
    let host = rest.get(4..4 + host_len).ok_or(BeaconError::Truncated)?;
    let host = std::str::from_utf8(host).map_err(|_| BeaconError::BadHost)?;
    Ok(Beacon { supervisor_host: host.to_string(), supervisor_port: port })
}

/// Worker liveness report with piggybacked metrics, JSON over UDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub worker_id: String,
    pub seq: u64,
    /// Mflop/s.
    pub perf: f64,
    /// RTT of the previous heartbeat's acknowledgement, seconds; 0 if none yet.
    pub net_rtt_sample: f64,
    pub load: f64,
    pub slots: u32,
    pub slots_free: u32,
    /// TCP port accepting ASSIGN and CANCEL frames.
    pub worker_port: u16,
}

impl Heartbeat {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("heartbeat serializes")
    }

    pub fn decode(bytes: &[u8]) -> Option<Heartbeat> {
        serde_json::from_slice::<Heartbeat>(bytes).ok().filter(|h| !h.worker_id.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatAck {
    pub seq: u64,
}

impl HeartbeatAck {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("ack serializes")
    }

    pub fn decode(bytes: &[u8]) -> Option<HeartbeatAck> {
        serde_json::from_slice(bytes).ok()
    }
}
