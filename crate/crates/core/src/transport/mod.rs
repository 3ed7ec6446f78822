//! Wire layer shared by the supervisor and workers: UDP discovery beacons
//! and heartbeats, checksummed TCP frames, and gzip tar archives.

mod archive;
mod beacon;
mod frame;

pub use archive::{
    pack_dir_archive, pack_result_archive, pack_task_archive, unpack_dir_archive, unpack_result_archive,
    unpack_task_archive, ArchiveError, TaskManifest,
};
pub use beacon::{
    decode_beacon, encode_beacon, Beacon, BeaconError, Heartbeat, HeartbeatAck, BEACON_MAGIC, MAX_BEACON_LEN,
};
pub use frame::{decode_frame, encode_frame, recv_frame, send_frame, Envelope, FrameError, FrameType, MAX_BODY_LEN};

use std::time::Duration;

pub const BEACON_PORT: u16 = 47001;
pub const SUPERVISOR_PORT: u16 = 47100;
pub const WORKER_PORT: u16 = 47200;
pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(2);
/// Missed heartbeat intervals before a peer is considered lost.
pub const MISSED_INTERVALS: u32 = 3;
