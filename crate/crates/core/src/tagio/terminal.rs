//! The collecting terminal and the site client.

use std::collections::HashSet;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::tagio::file::TagFileHeader;
use crate::tagio::wire::{
    receive_after_header, site_send, STATUS_BAD_STREAM, STATUS_DUPLICATE_SITE,
};
use crate::tags::TagStream;

const POLL: Duration = Duration::from_millis(5);

/// Streams gathered from both sites. `a` is the site with the lower id.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteStreams {
    pub a: Vec<TagStream>,
    pub b: Vec<TagStream>,
}

pub struct Terminal {
    listener: TcpListener,
    io_timeout: Duration,
}

impl Terminal {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let listener =
            TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind: {e}")))?;
        Ok(Terminal {
            listener,
            io_timeout: Duration::from_secs(60),
        })
    }

    pub fn with_io_timeout(mut self, t: Duration) -> Self {
        self.io_timeout = t;
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener
            .local_addr()
            .map_err(|e| Error::Transport(format!("local address: {e}")))
    }

    /// Accepts connections until two distinct sites have each delivered
    /// `runs` streams. A second connection claiming an already connected
    /// site id is rejected.
    pub fn collect(&self, runs: usize, deadline: Option<Duration>) -> Result<SiteStreams> {
        if runs == 0 {
            return Err(Error::InvalidParameter(
                "terminal needs at least one run per site".into(),
            ));
        }
        self.listener
            .set_nonblocking(true)
            .map_err(|e| Error::Transport(format!("listener: {e}")))?;
        let started = Instant::now();
        let claimed: Arc<Mutex<HashSet<u32>>> = Arc::default();
        let (tx, rx) = mpsc::channel::<Result<(u32, Vec<TagStream>)>>();
        let mut done: Vec<(u32, Vec<TagStream>)> = Vec::new();

        while done.len() < 2 {
            if let Some(limit) = deadline {
                if started.elapsed() > limit {
                    return Err(Error::Transport(format!(
                        "timed out after {limit:?} waiting for sites"
                    )));
                }
            }
            match self.listener.accept() {
                Ok((conn, peer)) => {
                    log::info!("connection from {peer}");
                    let claimed = Arc::clone(&claimed);
                    let tx = tx.clone();
                    let timeout = self.io_timeout;
                    thread::spawn(move || {
                        if let Some(result) = serve_site(conn, &claimed, runs, timeout) {
                            let _ = tx.send(result);
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
                Err(e) => return Err(Error::Transport(format!("accept: {e}"))),
            }
            match rx.recv_timeout(POLL) {
                Ok(result) => done.push(result?),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => unreachable!("sender held locally"),
            }
        }
        done.sort_by_key(|(site, _)| *site);
        let b = done.pop().expect("two sites").1;
        let a = done.pop().expect("two sites").1;
        Ok(SiteStreams { a, b })
    }
}

/// Returns None when the connection never claimed a site (rejected or
/// unreadable before the first header).
fn serve_site(
    mut conn: TcpStream,
    claimed: &Mutex<HashSet<u32>>,
    runs: usize,
    timeout: Duration,
) -> Option<Result<(u32, Vec<TagStream>)>> {
    let _ = conn.set_nonblocking(false);
    let _ = conn.set_read_timeout(Some(timeout));
    let _ = conn.set_write_timeout(Some(timeout));
    let header = match TagFileHeader::read_from(&mut conn) {
        Ok(h) => h,
        Err(e) => {
            log::warn!("dropping connection: {e}");
            return None;
        }
    };
    let site = header.site_id;
    if !claimed.lock().expect("claim set").insert(site) {
        log::warn!("rejecting second connection for site {site}");
        use std::io::Write;
        let _ = conn.write_all(&[STATUS_DUPLICATE_SITE]);
        return None;
    }
    let mut streams = Vec::with_capacity(runs);
    let mut header = header;
    for run in 0..runs {
        if run > 0 {
            header = match TagFileHeader::read_from(&mut conn) {
                Ok(h) => h,
                Err(e) => return Some(Err(e)),
            };
            if header.site_id != site {
                use std::io::Write;
                let _ = conn.write_all(&[STATUS_BAD_STREAM]);
                return Some(Err(Error::Transport(format!(
                    "site {site} sent a stream labelled site {}",
                    header.site_id
                ))));
            }
        }
        match receive_after_header(&header, &mut conn) {
            Ok(s) => streams.push(s),
            Err(e) => return Some(Err(e)),
        }
    }
    Some(Ok((site, streams)))
}

/// Connects to a terminal and sends each stream in order.
pub fn site_run<A: ToSocketAddrs>(addr: A, streams: &[TagStream], batch: usize) -> Result<()> {
    let mut conn =
        TcpStream::connect(addr).map_err(|e| Error::Transport(format!("connect: {e}")))?;
    for s in streams {
        site_send(s, &mut conn, batch)?;
    }
    Ok(())
}
