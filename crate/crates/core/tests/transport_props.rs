use std::collections::BTreeMap;
use std::path::Path;

use gridlet::pss::TaskSpec;
use gridlet::transport::{
    decode_beacon, decode_frame, encode_beacon, encode_frame, pack_dir_archive, pack_result_archive, pack_task_archive,
    unpack_dir_archive, unpack_result_archive, unpack_task_archive, Beacon, BeaconError, Envelope, FrameError,
    FrameType, Heartbeat, HeartbeatAck, MAX_BEACON_LEN,
};
use gridlet::worker::{ExecStatus, TaskExecutionResult};
use proptest::prelude::*;

fn frame_type() -> impl Strategy<Value = FrameType> {
    prop_oneof![
        Just(FrameType::Assign),
        Just(FrameType::Result),
        Just(FrameType::Cancel),
        Just(FrameType::Redo),
        Just(FrameType::Ack),
        Just(FrameType::Error),
    ]
}

fn envelope() -> impl Strategy<Value = Envelope> {
    (frame_type(), proptest::option::of("\\PC{0,24}"), proptest::collection::vec(any::<u8>(), 0..2048))
        .prop_map(|(kind, task_id, body)| Envelope { kind, task_id, body })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

fn rel_files() -> impl Strategy<Value = BTreeMap<String, Vec<u8>>> {
    proptest::collection::btree_map(
        "[a-z]{1,5}(/[a-z]{1,5}){0,2}",
        proptest::collection::vec(any::<u8>(), 0..300),
        0..6,
    )
    .prop_filter("a file path cannot also be a directory", |m| {
        !m.keys().any(|a| m.keys().any(|b| b.starts_with(&format!("{a}/"))))
    })
}

fn write_tree(root: &Path, files: &BTreeMap<String, Vec<u8>>) {
    for (rel, data) in files {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, data).unwrap();
    }
}

fn read_tree(root: &Path, rel: &str, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(root.join(rel)).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().into_string().unwrap();
        let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        if e.file_type().unwrap().is_dir() {
            read_tree(root, &child, out);
        } else {
            out.insert(child, std::fs::read(e.path()).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frame_round_trip(env in envelope(), trailing in proptest::collection::vec(any::<u8>(), 0..16)) {
        let mut bytes = encode_frame(&env).unwrap();
        let len = bytes.len();
        bytes.extend_from_slice(&trailing);
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(back, env);
        prop_assert_eq!(used, len);
    }

    #[test]
    fn every_strict_prefix_is_truncated(env in envelope(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_frame(&env).unwrap();
        let n = cut.index(bytes.len());
        let is_truncated = matches!(decode_frame(&bytes[..n]), Err(FrameError::Truncated));
        prop_assert!(is_truncated);
    }

    #[test]
    fn body_corruption_is_detected(env in envelope(), at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        prop_assume!(!env.body.is_empty());
        let mut bytes = encode_frame(&env).unwrap();
        let header_len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let pos = 4 + header_len + at.index(env.body.len());
        bytes[pos] ^= flip;
        let is_mismatch = matches!(decode_frame(&bytes), Err(FrameError::ChecksumMismatch));
        prop_assert!(is_mismatch);
    }

    #[test]
    fn frame_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = decode_frame(&bytes);
    }

    #[test]
    fn beacon_round_trip(host in "\\PC{0,120}", port in any::<u16>()) {
        let b = Beacon { supervisor_host: host, supervisor_port: port };
        let bytes = encode_beacon(&b).unwrap();
        prop_assert!(bytes.len() <= MAX_BEACON_LEN);
        prop_assert_eq!(decode_beacon(&bytes).unwrap(), b);
    }

    #[test]
    fn beacon_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..700), magic in any::<bool>()) {
        let mut bytes = bytes;
        if magic {
            let mut m = b"GRIDLET1".to_vec();
            m.extend_from_slice(&bytes);
            bytes = m;
        }
        let _ = decode_beacon(&bytes);
    }

    #[test]
    fn beacon_with_wrong_magic_is_rejected(mut bytes in proptest::collection::vec(any::<u8>(), 8..64)) {
        prop_assume!(&bytes[..8] != b"GRIDLET1");
        let is_bad_magic = matches!(decode_beacon(&bytes), Err(BeaconError::BadMagic));
        prop_assert!(is_bad_magic);
        bytes.truncate(7);
        let is_truncated = matches!(decode_beacon(&bytes), Err(BeaconError::Truncated));
        prop_assert!(is_truncated);
    }

    #[test]
    fn heartbeat_round_trip(
        id in "[a-z0-9-]{1,20}",
        seq in any::<u64>(),
        perf in 0.0f64..1e6,
        rtt in 0.0f64..10.0,
        load in 0.0f64..64.0,
        slots in 1u32..64,
        free in 0u32..64,
        port in any::<u16>(),
    ) {
        let hb = Heartbeat {
            worker_id: id,
            seq,
            perf,
            net_rtt_sample: rtt,
            load,
            slots,
            slots_free: free.min(slots),
            worker_port: port,
        };
        let back = Heartbeat::decode(&hb.encode()).unwrap();
        prop_assert_eq!(&back.worker_id, &hb.worker_id);
        prop_assert_eq!((back.seq, back.slots, back.slots_free, back.worker_port), (hb.seq, hb.slots, hb.slots_free, hb.worker_port));
        prop_assert!(close(back.perf, hb.perf) && close(back.net_rtt_sample, hb.net_rtt_sample) && close(back.load, hb.load));
        prop_assert_eq!(HeartbeatAck::decode(&HeartbeatAck { seq }.encode()), Some(HeartbeatAck { seq }));
    }

    #[test]
    fn heartbeat_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Heartbeat::decode(&bytes);
        let _ = HeartbeatAck::decode(&bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dir_archive_round_trip_is_deterministic(files in rel_files()) {
        let src = tempfile::tempdir().unwrap();
        write_tree(src.path(), &files);
        let a = pack_dir_archive(src.path()).unwrap();
        let b = pack_dir_archive(src.path()).unwrap();
        prop_assert_eq!(&a, &b);

        // The same content written in another order to another place packs identically.
        let other = tempfile::tempdir().unwrap();
        for (rel, data) in files.iter().rev() {
            let p = other.path().join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, data).unwrap();
        }
        prop_assert_eq!(&pack_dir_archive(other.path()).unwrap(), &a);

        let dest = tempfile::tempdir().unwrap();
        unpack_dir_archive(&a, dest.path()).unwrap();
        let mut back = BTreeMap::new();
        read_tree(dest.path(), "", &mut back);
        prop_assert_eq!(back, files);
    }

    #[test]
    fn task_archive_round_trip(
        files in rel_files().prop_filter("need a task file", |m| !m.is_empty()),
        attempt in 1u32..10,
        priority in 0u8..=19,
        timeout_s in 1u64..1000,
    ) {
        let src = tempfile::tempdir().unwrap();
        write_tree(src.path(), &files);
        let mut names = files.keys().cloned();
        let task = TaskSpec {
            id: "task-1".into(),
            task_file: names.next().unwrap(),
            input_files: names.collect(),
            compile_cmd: "cc -o x x.c".into(),
            exec_cmd: "./x".into(),
            priority,
            timeout_s,
            work_hint: 1.0,
            payload_bytes: 0,
            is_checkpoint: false,
        };
        let bytes = pack_task_archive(&task, attempt, src.path()).unwrap();
        prop_assert_eq!(&bytes, &pack_task_archive(&task, attempt, src.path()).unwrap());
        let dest = tempfile::tempdir().unwrap();
        let m = unpack_task_archive(&bytes, dest.path()).unwrap();
        prop_assert_eq!(&m.task_id, &task.id);
        prop_assert_eq!(m.attempt, attempt);
        prop_assert_eq!((&m.compile_cmd, &m.exec_cmd), (&task.compile_cmd, &task.exec_cmd));
        prop_assert_eq!((m.priority, m.timeout_s), (priority, timeout_s));
        prop_assert_eq!(&m.task_file, &task.task_file);
        prop_assert_eq!(&m.input_files, &task.input_files);
        let mut back = BTreeMap::new();
        read_tree(dest.path(), "", &mut back);
        prop_assert_eq!(back, files);
    }

    #[test]
    fn result_archive_round_trip(
        out_files in rel_files(),
        stdout in proptest::collection::vec(any::<u8>(), 0..500),
        stderr in proptest::collection::vec(any::<u8>(), 0..500),
        status in prop_oneof![
            Just(ExecStatus::Ok),
            Just(ExecStatus::CompileError),
            Just(ExecStatus::RuntimeError),
            Just(ExecStatus::Timeout),
        ],
        exit_code in proptest::option::of(-255i32..256),
        attempt in 1u32..10,
        wall_ms in 0u32..1_000_000,
        cpu_ms in 0u32..1_000_000,
    ) {
        let r = TaskExecutionResult {
            task_id: "t7".into(),
            attempt,
            status,
            exit_code,
            wall_s: wall_ms as f64 / 1000.0,
            cpu_s: cpu_ms as f64 / 1000.0,
            stdout,
            stderr,
            out_files,
        };
        let bytes = pack_result_archive(&r).unwrap();
        prop_assert_eq!(&bytes, &pack_result_archive(&r).unwrap());
        let back = unpack_result_archive(&bytes).unwrap();
        prop_assert!(close(back.wall_s, r.wall_s) && close(back.cpu_s, r.cpu_s));
        prop_assert_eq!(
            TaskExecutionResult { wall_s: r.wall_s, cpu_s: r.cpu_s, ..back },
            r
        );
    }

    #[test]
    fn archive_readers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..1024)) {
        let dest = tempfile::tempdir().unwrap();
        let _ = unpack_result_archive(&bytes);
        let _ = unpack_task_archive(&bytes, &dest.path().join("t"));
        let _ = unpack_dir_archive(&bytes, &dest.path().join("d"));
    }
}
