//! Real UDP transport driving the same [`Handler`]s as the simulator.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{Handler, Micros, Outbox};

/// 1500-byte Ethernet MTU minus 20-byte IPv4 and 8-byte UDP headers.
pub const MAX_DATAGRAM: usize = 1472;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("datagram of {0} bytes exceeds the {MAX_DATAGRAM}-byte limit")]
    Oversized(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub struct UdpTransport {
    socket: UdpSocket,
}

impl UdpTransport {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        Ok(UdpTransport { socket })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn send(&self, to: SocketAddr, bytes: &[u8]) -> Result<(), TransportError> {
        if bytes.len() > MAX_DATAGRAM {
            return Err(TransportError::Oversized(bytes.len()));
        }
        self.socket.send_to(bytes, to)?;
        Ok(())
    }

    /// Waits up to `timeout` for one datagram.
    pub fn recv(&self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<(usize, SocketAddr)>> {
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_micros(100))))?;
        match self.socket.recv_from(buf) {
            Ok(r) => Ok(Some(r)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Runs `handler` on `transport` until `stop` is set, `deadline` elapses or
/// the handler reports it is done. Send errors are counted, not fatal.
pub fn run_handler<H: Handler<SocketAddr>>(
    transport: &UdpTransport,
    handler: &mut H,
    stop: &AtomicBool,
    deadline: Option<Duration>,
) -> io::Result<u64> {
    let epoch = Instant::now();
    let now = || epoch.elapsed().as_micros() as Micros;
    let mut timers: BinaryHeap<Reverse<(Micros, u64)>> = BinaryHeap::new();
    let mut out = Outbox::default();
    let mut send_errors = 0u64;
    let mut buf = vec![0u8; 65536];

    let mut flush = |out: &mut Outbox<SocketAddr>, timers: &mut BinaryHeap<Reverse<(Micros, u64)>>, at: Micros| {
        for (to, bytes) in out.take_sends() {
            if transport.send(to, &bytes).is_err() {
                send_errors += 1;
            }
        }
        for (delay, token) in out.take_timers() {
            timers.push(Reverse((at + delay, token)));
        }
    };

    handler.on_start(now(), &mut out);
    flush(&mut out, &mut timers, now());
    while !stop.load(Ordering::Relaxed) && handler.is_active() {
        let t = now();
        if deadline.is_some_and(|d| t >= d.as_micros() as Micros) {
            break;
        }
        while let Some(&Reverse((due, token))) = timers.peek() {
            if due > t {
                break;
            }
            timers.pop();
            handler.on_timer(t, token, &mut out);
            flush(&mut out, &mut timers, t);
        }
        let wait = timers
            .peek()
            .map(|Reverse((due, _))| Duration::from_micros(due.saturating_sub(t)))
            .unwrap_or(POLL)
            .min(POLL);
        if let Some((n, from)) = transport.recv(&mut buf, wait)? {
            let t = now();
            handler.on_datagram(t, from, &buf[..n], &mut out);
            flush(&mut out, &mut timers, t);
        }
    }
    Ok(send_errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_echo_preserves_bytes() {
        let a = UdpTransport::bind("127.0.0.1:0").unwrap();
        let b = UdpTransport::bind("127.0.0.1:0").unwrap();
        let payload: Vec<u8> = (0..=255).collect();
        a.send(b.local_addr().unwrap(), &payload).unwrap();
        let mut buf = [0u8; 2048];
        let (n, from) = b.recv(&mut buf, Duration::from_secs(2)).unwrap().unwrap();
        assert_eq!(from, a.local_addr().unwrap());
        b.send(from, &buf[..n]).unwrap();
        let (n, _) = a.recv(&mut buf, Duration::from_secs(2)).unwrap().unwrap();
        assert_eq!(&buf[..n], &payload[..]);
    }

    #[test]
    fn oversized_datagram_is_refused() {
        let a = UdpTransport::bind("127.0.0.1:0").unwrap();
        let to = a.local_addr().unwrap();
        assert!(a.send(to, &[0u8; MAX_DATAGRAM]).is_ok());
        assert!(matches!(a.send(to, &[0u8; MAX_DATAGRAM + 1]), Err(TransportError::Oversized(1473))));
    }
}
