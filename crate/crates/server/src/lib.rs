//! WebSocket control channel for live sessions.
//!
//! Text messages are JSON control messages (see [`protocol`]); binary
//! messages are `PWK1` pressure frames for clients that subscribed. Any
//! number of clients may observe; the first to send a control command holds
//! the controller role until it disconnects.

pub mod engine;
pub mod protocol;

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;
use tungstenite::{Error as WsError, Message};

pub use engine::{ClientLink, Engine, Outgoing, ServerOptions, Source};

use gaitway_core::session::RecordingError;

/// How long a connection blocks on reads before draining its queue.
const POLL_INTERVAL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("replay source: {0}")]
    Replay(#[from] RecordingError),
}

pub struct Server {
    listener: TcpListener,
    engine: Arc<Engine>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display, source: Source, options: ServerOptions) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self {
            listener,
            engine: Engine::new(source, options),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    /// Accepts connections until the listener fails.
    pub fn run(self) {
        for stream in self.listener.incoming() {
            let Ok(stream) = stream else { continue };
            let engine = Arc::clone(&self.engine);
            thread::spawn(move || serve_connection(&engine, stream));
        }
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> (SocketAddr, JoinHandle<()>) {
        let addr = self.local_addr();
        (addr, thread::spawn(move || self.run()))
    }
}

fn would_block(e: &WsError) -> bool {
    matches!(e, WsError::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn serve_connection(engine: &Arc<Engine>, stream: TcpStream) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    if ws.get_mut().set_read_timeout(Some(POLL_INTERVAL)).is_err() {
        return;
    }
    let link = engine.register();
    'conn: loop {
        match ws.read() {
            Ok(Message::Text(text)) => engine.handle_text(link.id, text.as_str()),
            Ok(Message::Binary(_)) => engine.reject(link.id, "clients send text control messages only"),
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(_) => break,
        }
        while let Ok(out) = link.rx.try_recv() {
            let msg = match out {
                Outgoing::Text(t) => Message::text(t),
                Outgoing::Binary(b) => {
                    link.queued_frames.fetch_sub(1, Ordering::Relaxed);
                    Message::binary(b)
                }
            };
            match ws.send(msg) {
                Ok(()) => {}
                Err(e) if would_block(&e) => {}
                Err(_) => break 'conn,
            }
        }
    }
    engine.unregister(link.id);
}
