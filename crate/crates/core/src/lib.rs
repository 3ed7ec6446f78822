pub mod bench;
pub mod cli;
pub mod metrics;
pub mod pss;
pub mod sched;
pub mod supervisor;
pub mod transport;
pub mod worker;
