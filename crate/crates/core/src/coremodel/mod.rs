//! Fixed-point emulation of the packet-driven detector core and its cost
//! model.

mod core;
pub mod cost;
pub mod fixed;
pub mod packet;
pub mod trace;

pub use self::core::{ff_packet, input_packets, parameter_packets, CoreState, PredictScratch, TrainScratch};
pub use cost::{cost_report, CostReport};
pub use fixed::Fixed32;
pub use packet::{decode_packet, encode_packet, Mode, OutPacket, Packet, INDEX_LIMIT};
