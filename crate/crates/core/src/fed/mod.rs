//! Federated training: partitioning, encrypted averaging and the
//! master/worker protocol.

mod avg;
mod master;
mod partition;
mod protocol;
mod transport;
mod worker;

pub use avg::fedavg;
pub use master::{master_run, MasterHooks};
pub use partition::{partition, Partition};
pub use protocol::{
    decode_frame, decode_payload, encode_frame, encode_payload, read_frame, write_frame,
    Assignment, Message, MAX_FRAME, PROTOCOL_VERSION,
};
pub use transport::{loopback_pair, LoopbackTransport, TcpTransport, Transport};
pub use worker::{worker_listen, worker_session, WorkerReport};
