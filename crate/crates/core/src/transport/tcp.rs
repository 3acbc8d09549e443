//! Full TCP mesh. Each rank listens on its own address, connects to every
//! lower rank and accepts every higher one. Messages are framed with a
//! little-endian `u64` length.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use super::{Endpoint, Inbox, Outbox, TransportStats};
use crate::error::{Error, Result};

/// Refuse frames above this size; a corrupt length would otherwise try to
/// allocate the whole address space.
const MAX_FRAME: u64 = 1 << 36;

fn transport(msg: impl Into<String>) -> Error {
    Error::Transport(msg.into())
}

pub fn bind_listener(addr: SocketAddr) -> Result<TcpListener> {
    TcpListener::bind(addr).map_err(|e| transport(format!("cannot listen on {addr}: {e}")))
}

fn connect_retry(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect_timeout(&addr, Duration::from_secs(1)) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => {
                return Err(transport(format!("cannot connect to {addr}: {e}")))
            }
            Err(_) => std::thread::sleep(Duration::from_millis(20)),
        }
    }
}

fn accept_until(listener: &TcpListener, deadline: Instant) -> Result<TcpStream> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(transport("timed out waiting for peers to connect"));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn spawn_reader(mut stream: TcpStream, peer: usize) -> Result<Inbox> {
    let (tx, rx) = mpsc::channel();
    std::thread::Builder::new()
        .name(format!("recv-{peer}"))
        .spawn(move || loop {
            let mut len = [0u8; 8];
            let frame = stream.read_exact(&mut len).and_then(|_| {
                let n = u64::from_le_bytes(len);
                if n > MAX_FRAME {
                    return Err(std::io::Error::new(
                        ErrorKind::InvalidData,
                        "frame too large",
                    ));
                }
                let mut buf = vec![0u8; n as usize];
                stream.read_exact(&mut buf)?;
                Ok(buf)
            });
            match frame {
                Ok(buf) => {
                    if tx.send(Ok(buf)).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(transport(format!(
                        "connection to rank {peer} failed: {e}"
                    ))));
                    return;
                }
            }
        })
        .map_err(Error::Spawn)?;
    Ok(rx)
}

/// Join the mesh as `rank`. `listener` must already be bound to
/// `addrs[rank]`.
pub fn connect_mesh(
    rank: usize,
    listener: TcpListener,
    addrs: &[SocketAddr],
    timeout: Duration,
) -> Result<Endpoint> {
    let size = addrs.len();
    if rank >= size {
        return Err(Error::Config(format!(
            "rank {rank} outside a mesh of {size}"
        )));
    }
    let deadline = Instant::now() + timeout;
    let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
    for (peer, addr) in addrs.iter().enumerate().take(rank) {
        let mut s = connect_retry(*addr, deadline)?;
        s.write_all(&(rank as u32).to_le_bytes())?;
        streams[peer] = Some(s);
    }
    for _ in rank + 1..size {
        let mut s = accept_until(&listener, deadline)?;
        s.set_read_timeout(Some(timeout))?;
        let mut hello = [0u8; 4];
        s.read_exact(&mut hello)?;
        s.set_read_timeout(None)?;
        let peer = u32::from_le_bytes(hello) as usize;
        if peer <= rank || peer >= size || streams[peer].is_some() {
            return Err(Error::Protocol(format!(
                "unexpected handshake from rank {peer}"
            )));
        }
        streams[peer] = Some(s);
    }
    let mut outboxes = Vec::with_capacity(size);
    let mut inboxes = Vec::with_capacity(size);
    for (peer, s) in streams.into_iter().enumerate() {
        match s {
            Some(s) => {
                s.set_nodelay(true)?;
                inboxes.push(Some(spawn_reader(s.try_clone()?, peer)?));
                outboxes.push(Some(Outbox::Tcp(s)));
            }
            None => {
                inboxes.push(None);
                outboxes.push(None);
            }
        }
    }
    Ok(Endpoint {
        rank,
        size,
        outboxes,
        inboxes,
        timeout,
        stats: TransportStats::default(),
    })
}

/// A loopback mesh of `n` ranks inside this process.
pub fn tcp_local(n: usize, timeout: Duration) -> Result<Vec<Endpoint>> {
    let listeners = (0..n)
        .map(|_| bind_listener(SocketAddr::from(([127, 0, 0, 1], 0))))
        .collect::<Result<Vec<_>>>()?;
    let addrs = listeners
        .iter()
        .map(|l| l.local_addr())
        .collect::<std::io::Result<Vec<_>>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(rank, l)| {
                let addrs = &addrs;
                s.spawn(move || connect_mesh(rank, l, addrs, timeout))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}

/// Parse a rank file: one `rank host port` line per rank, `#` comments.
pub fn parse_rankfile(text: &str) -> Result<Vec<SocketAddr>> {
    let mut entries: Vec<Option<SocketAddr>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || {
            Error::Config(format!(
                "rankfile line {}: expected 'rank host port'",
                lineno + 1
            ))
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [rank, host, port] = fields[..] else {
            return Err(bad());
        };
        let rank: usize = rank.parse().map_err(|_| bad())?;
        let port: u16 = port.parse().map_err(|_| bad())?;
        let addr = (host, port)
            .to_socket_addrs()
            .map_err(|e| Error::Config(format!("cannot resolve {host}: {e}")))?
            .next()
            .ok_or_else(|| Error::Config(format!("no address for {host}")))?;
        if entries.len() <= rank {
            entries.resize(rank + 1, None);
        }
        if entries[rank].replace(addr).is_some() {
            return Err(Error::Config(format!("rank {rank} listed twice")));
        }
    }
    if entries.is_empty() {
        return Err(Error::Config("rankfile lists no ranks".into()));
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(r, a)| a.ok_or_else(|| Error::Config(format!("rank {r} missing from rankfile"))))
        .collect()
}

pub fn read_rankfile(path: &Path) -> Result<Vec<SocketAddr>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_rankfile(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rankfile_parsing() {
        let addrs =
            parse_rankfile("# mesh\n1 127.0.0.1 5001\n0 127.0.0.1 5000 # first\n\n").unwrap();
        assert_eq!(addrs[0].port(), 5000);
        assert_eq!(addrs[1].port(), 5001);
        assert!(parse_rankfile("0 127.0.0.1 5000\n2 127.0.0.1 5002\n").is_err());
        assert!(parse_rankfile("0 127.0.0.1\n").is_err());
        assert!(parse_rankfile("0 127.0.0.1 5000\n0 127.0.0.1 5001\n").is_err());
        assert!(parse_rankfile("").is_err());
    }
}
