//! Byte-stream transport boundary.
//!
//! The server core only needs an acceptor that can be polled and streams with
//! a bounded blocking read. OS sockets are the shipped implementation; a
//! user-space stack can be plugged in behind the same two traits.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

pub trait TransportStream: Read + Write + Send + 'static {
    /// Upper bound on how long one `read` may block before returning
    /// `WouldBlock`/`TimedOut`, so the handler can observe shutdown.
    fn set_poll_interval(&self, interval: Duration) -> io::Result<()>;
}

pub trait Transport: Send + Sync + 'static {
    type Stream: TransportStream;

    /// Accepts a pending connection; `Ok(None)` when none is waiting.
    fn accept(&self) -> io::Result<Option<(Self::Stream, String)>>;

    fn local_addr(&self) -> io::Result<SocketAddr>;
}

#[derive(Debug)]
pub struct TcpTransport {
    listener: TcpListener,
}

impl TcpTransport {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener })
    }
}

impl Transport for TcpTransport {
    type Stream = TcpStream;

    fn accept(&self) -> io::Result<Option<(TcpStream, String)>> {
        match self.listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                Ok(Some((stream, peer.to_string())))
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }
}

impl TransportStream for TcpStream {
    fn set_poll_interval(&self, interval: Duration) -> io::Result<()> {
        self.set_read_timeout(Some(interval))
    }
}
