//! Simulator sessions over a WebSocket JSON protocol. See `protocol.md` for
//! the message reference.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, Envelope, ErrorCode, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve, ConfigError, ServiceConfig};
pub use session::{EpisodeStore, Session, SessionError};
