//! Framed request/response protocol between experiment clients and the server.

pub mod frame;
pub mod message;
pub mod session;

pub use frame::{decode_frame, encode_frame, read_message, write_message, FrameError, MAX_FRAME_LEN};
pub use message::{ErrorCode, Message, PROTOCOL_VERSION};
pub use session::{session_step, IssuedSeeds, Rejection, SessionBackend, SessionState};
