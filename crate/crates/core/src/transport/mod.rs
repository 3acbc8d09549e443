//! Point-to-point message passing between ranks.
//!
//! Every rank owns an [`Endpoint`] holding one ordered channel to every
//! other rank. Two backends exist: in-process channels for ranks that are
//! threads of one process, and a full TCP mesh for ranks in separate
//! processes. Received messages are queued by a per-peer reader, so a send
//! never waits for the peer to post a receive.

mod tcp;

use std::io::Write;
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::error::{Error, Result};

pub use tcp::{bind_listener, connect_mesh, parse_rankfile, read_rankfile, tcp_local};

const BARRIER_TOKEN: &[u8] = &[0xBA];

/// Default time to wait for a message before reporting a transport error.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Which transport connects the ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    InProcess,
    Tcp,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::InProcess => "inprocess",
            Backend::Tcp => "tcp",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inprocess" | "in-process" | "local" => Ok(Backend::InProcess),
            "tcp" => Ok(Backend::Tcp),
            other => Err(Error::Config(format!("unknown transport '{other}'"))),
        }
    }
}

pub(crate) type Inbox = Receiver<Result<Vec<u8>>>;

enum Outbox {
    Channel(Sender<Result<Vec<u8>>>),
    Tcp(TcpStream),
}

impl Outbox {
    fn send(&mut self, bytes: &[u8]) -> Result<()> {
        match self {
            Outbox::Channel(tx) => tx
                .send(Ok(bytes.to_vec()))
                .map_err(|_| Error::Transport("peer endpoint was dropped".into())),
            Outbox::Tcp(s) => {
                s.write_all(&(bytes.len() as u64).to_le_bytes())?;
                s.write_all(bytes)?;
                Ok(())
            }
        }
    }
}

/// Message counters of one endpoint, excluding barrier traffic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
}

/// One rank's view of the communicator.
pub struct Endpoint {
    rank: usize,
    size: usize,
    outboxes: Vec<Option<Outbox>>,
    inboxes: Vec<Option<Inbox>>,
    timeout: Duration,
    stats: TransportStats,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .field("stats", &self.stats)
            .finish()
    }
}

impl Endpoint {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stats(&self) -> TransportStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = TransportStats::default();
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer >= self.size || peer == self.rank {
            return Err(Error::Transport(format!(
                "rank {} cannot talk to rank {peer} (size {})",
                self.rank, self.size
            )));
        }
        Ok(())
    }

    fn raw_send(&mut self, peer: usize, bytes: &[u8]) -> Result<()> {
        self.check_peer(peer)?;
        self.outboxes[peer]
            .as_mut()
            .expect("missing outbox")
            .send(bytes)
    }

    fn raw_recv(&mut self, peer: usize) -> Result<Vec<u8>> {
        self.check_peer(peer)?;
        let inbox = self.inboxes[peer].as_ref().expect("missing inbox");
        match inbox.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(Error::Transport(format!(
                "rank {} timed out after {:?} waiting for rank {peer}",
                self.rank, self.timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport(format!(
                "connection to rank {peer} closed"
            ))),
        }
    }

    /// Send `bytes` to `peer`.
    pub fn send(&mut self, peer: usize, bytes: &[u8]) -> Result<()> {
        self.raw_send(peer, bytes)?;
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += bytes.len() as u64;
        Ok(())
    }

    /// Receive the next message from `peer`, which must be exactly
    /// `expected_len` bytes long.
    pub fn recv(&mut self, peer: usize, expected_len: usize) -> Result<Vec<u8>> {
        let msg = self.raw_recv(peer)?;
        if msg.len() != expected_len {
            return Err(Error::Protocol(format!(
                "rank {} expected {expected_len} bytes from rank {peer}, got {}",
                self.rank,
                msg.len()
            )));
        }
        Ok(msg)
    }

    /// Send `bytes` to `peer` and receive its message in return.
    pub fn sendrecv(&mut self, peer: usize, bytes: &[u8], expected_len: usize) -> Result<Vec<u8>> {
        self.send(peer, bytes)?;
        self.recv(peer, expected_len)
    }

    /// Block until every rank has entered the barrier.
    pub fn barrier(&mut self) -> Result<()> {
        if self.size == 1 {
            return Ok(());
        }
        let check = |m: Vec<u8>| {
            if m != BARRIER_TOKEN {
                return Err(Error::Protocol("expected a barrier token".into()));
            }
            Ok(())
        };
        if self.rank == 0 {
            for p in 1..self.size {
                check(self.raw_recv(p)?)?;
            }
            for p in 1..self.size {
                self.raw_send(p, BARRIER_TOKEN)?;
            }
        } else {
            self.raw_send(0, BARRIER_TOKEN)?;
            check(self.raw_recv(0)?)?;
        }
        Ok(())
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        for o in self.outboxes.iter().flatten() {
            if let Outbox::Tcp(s) = o {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}

/// `n` endpoints connected through in-process channels.
pub fn in_process(n: usize) -> Vec<Endpoint> {
    let mut outboxes: Vec<Vec<Option<Outbox>>> =
        (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    let mut inboxes: Vec<Vec<Option<Inbox>>> =
        (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for from in 0..n {
        for to in 0..n {
            if from != to {
                let (tx, rx) = mpsc::channel();
                outboxes[from][to] = Some(Outbox::Channel(tx));
                inboxes[to][from] = Some(rx);
            }
        }
    }
    outboxes
        .into_iter()
        .zip(inboxes)
        .enumerate()
        .map(|(rank, (outboxes, inboxes))| Endpoint {
            rank,
            size: n,
            outboxes,
            inboxes,
            timeout: DEFAULT_TIMEOUT,
            stats: TransportStats::default(),
        })
        .collect()
}

/// `n` connected endpoints of the requested backend, all in this process.
/// TCP endpoints talk over loopback.
pub fn create_topology(n: usize, backend: Backend) -> Result<Vec<Endpoint>> {
    if n == 0 {
        return Err(Error::Config("need at least one rank".into()));
    }
    match backend {
        Backend::InProcess => Ok(in_process(n)),
        Backend::Tcp => tcp_local(n, DEFAULT_TIMEOUT),
    }
}
