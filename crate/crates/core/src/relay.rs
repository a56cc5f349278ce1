//! The sanitizer as a network service.
//!
//! Frames are `type u8 | length u32 (big-endian) | payload`. Clients open a
//! connection and either send SUBMIT frames (each carrying an unsanitized
//! ciphertext) or a single SUBSCRIBE frame, after which the relay streams
//! BROADCAST frames to them. Errors come back as ERROR frames on the
//! offending connection only: `code u8 | utf-8 message`.
//!
//! Sanitization happens on the connection threads; every sanitized payload
//! then passes through one sequencer thread, so all subscribers see the same
//! total order. Each subscriber has a bounded queue and is dropped when it
//! overflows. Broadcasts carry nothing but the sanitized ciphertext.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::keyio::{deserialize_ciphertext, serialize_ciphertext};
use crate::policy::{policy_sanitize, PolicyCiphertext, SanitizerKey};

pub const FRAME_SUBMIT: u8 = 0x01;
pub const FRAME_BROADCAST: u8 = 0x02;
pub const FRAME_SUBSCRIBE: u8 = 0x03;
pub const FRAME_ERROR: u8 = 0x04;

pub const ERR_MALFORMED: u8 = 0x01;
pub const ERR_OVERSIZED: u8 = 0x02;
pub const ERR_UNEXPECTED: u8 = 0x03;
pub const ERR_INTERNAL: u8 = 0x04;

pub const DEFAULT_MAX_FRAME: usize = 16 << 20;
pub const DEFAULT_QUEUE_BOUND: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("relay rejected the frame (code {code:#04x}): {message}")]
    Rejected { code: u8, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: u8, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn error(code: u8, message: &str) -> Self {
        let mut payload = vec![code];
        payload.extend_from_slice(message.as_bytes());
        Frame::new(FRAME_ERROR, payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.push(self.kind);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Why a frame could not be read.
#[derive(Debug)]
pub enum FrameReadError {
    Io(io::Error),
    /// Declared length above the limit; the payload was not consumed.
    Oversized(u32),
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the header.
pub fn read_frame<R: Read>(r: &mut R, max_frame: usize) -> Result<Option<Frame>, FrameReadError> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(FrameReadError::Io(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "truncated frame header",
                )))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameReadError::Io(e)),
        }
    }
    let len = u32::from_be_bytes(header[1..5].try_into().unwrap());
    if len as usize > max_frame {
        return Err(FrameReadError::Oversized(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(FrameReadError::Io)?;
    Ok(Some(Frame::new(header[0], payload)))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelayConfig {
    pub max_frame: usize,
    pub queue_bound: usize,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            max_frame: DEFAULT_MAX_FRAME,
            queue_bound: DEFAULT_QUEUE_BOUND,
        }
    }
}

type Subscribers = Arc<Mutex<Vec<SyncSender<Arc<Vec<u8>>>>>>;

struct Shared {
    key: SanitizerKey,
    config: RelayConfig,
    subscribers: Subscribers,
    stopping: AtomicBool,
    broadcasts: AtomicU64,
}

/// A running relay. Dropping the handle leaves it running; call
/// [`RelayHandle::shutdown`] to stop it.
pub struct RelayHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Subscribers currently registered with the sequencer.
    pub fn subscriber_count(&self) -> usize {
        self.shared.subscribers.lock().unwrap().len()
    }

    /// Broadcasts emitted so far.
    pub fn broadcast_count(&self) -> u64 {
        self.shared.broadcasts.load(Ordering::SeqCst)
    }

    /// Blocks until the accept loop exits (it only does on shutdown).
    pub fn wait(mut self) {
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
        // ends every subscriber stream; the sequencer exits once the
        // remaining connection threads finish
        self.shared.subscribers.lock().unwrap().clear();
    }
}

/// Starts a relay on `addr` (use port 0 for an ephemeral port).
pub fn relay_serve<A: ToSocketAddrs>(
    addr: A,
    key: SanitizerKey,
    config: RelayConfig,
) -> io::Result<RelayHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared {
        key,
        config,
        subscribers: Arc::new(Mutex::new(Vec::new())),
        stopping: AtomicBool::new(false),
        broadcasts: AtomicU64::new(0),
    });
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("relay-sequencer".into())
            .spawn(move || sequence(rx, &shared))?;
    }
    let accept = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("relay-accept".into())
            .spawn(move || accept_loop(listener, shared, tx))?
    };
    Ok(RelayHandle {
        addr: local,
        shared,
        accept: Some(accept),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, tx: Sender<Vec<u8>>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let shared = Arc::clone(&shared);
        let tx = tx.clone();
        let _ = thread::Builder::new()
            .name("relay-conn".into())
            .spawn(move || {
                let _ = serve_connection(stream, &shared, &tx);
            });
    }
}

fn sequence(rx: Receiver<Vec<u8>>, shared: &Shared) {
    for payload in rx {
        let frame = Arc::new(Frame::new(FRAME_BROADCAST, payload).encode());
        let mut subs = shared.subscribers.lock().unwrap();
        subs.retain(|s| match s.try_send(Arc::clone(&frame)) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => false,
        });
        shared.broadcasts.fetch_add(1, Ordering::SeqCst);
    }
}

fn sanitize_payload(shared: &Shared, payload: &[u8]) -> Result<Vec<u8>, String> {
    let ct = deserialize_ciphertext(payload, false).map_err(|e| e.to_string())?;
    let out = policy_sanitize(&shared.key, &ct).map_err(|e| e.to_string())?;
    Ok(serialize_ciphertext(&out))
}

fn serve_connection(stream: TcpStream, shared: &Shared, tx: &Sender<Vec<u8>>) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream.try_clone()?);
    loop {
        let frame = match read_frame(&mut reader, shared.config.max_frame) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(FrameReadError::Oversized(len)) => {
                let msg = format!("frame of {len} bytes exceeds {}", shared.config.max_frame);
                write_frame(&mut writer, &Frame::error(ERR_OVERSIZED, &msg))?;
                return stream.shutdown(Shutdown::Both);
            }
            Err(FrameReadError::Io(e)) => return Err(e),
        };
        match frame.kind {
            FRAME_SUBMIT => match sanitize_payload(shared, &frame.payload) {
                Ok(out) => {
                    if tx.send(out).is_err() {
                        write_frame(
                            &mut writer,
                            &Frame::error(ERR_INTERNAL, "relay is stopping"),
                        )?;
                        return Ok(());
                    }
                }
                Err(msg) => write_frame(&mut writer, &Frame::error(ERR_MALFORMED, &msg))?,
            },
            FRAME_SUBSCRIBE => {
                drop(reader);
                return stream_broadcasts(stream, writer, shared);
            }
            other => {
                let msg = format!("unexpected frame type {other:#04x}");
                write_frame(&mut writer, &Frame::error(ERR_UNEXPECTED, &msg))?;
            }
        }
    }
}

fn stream_broadcasts(
    stream: TcpStream,
    mut writer: BufWriter<TcpStream>,
    shared: &Shared,
) -> io::Result<()> {
    let (tx, rx) = mpsc::sync_channel::<Arc<Vec<u8>>>(shared.config.queue_bound);
    shared.subscribers.lock().unwrap().push(tx);
    for frame in rx {
        writer.write_all(&frame)?;
        writer.flush()?;
    }
    // dropped by the sequencer (overflow) or by shutdown
    stream.shutdown(Shutdown::Both)
}

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

fn check_error_frame(frame: Frame) -> RelayError {
    if frame.kind != FRAME_ERROR {
        return RelayError::Protocol(format!("unexpected frame type {:#04x}", frame.kind));
    }
    match frame.payload.split_first() {
        Some((&code, msg)) => RelayError::Rejected {
            code,
            message: String::from_utf8_lossy(msg).into_owned(),
        },
        None => RelayError::Protocol("empty error frame".into()),
    }
}

fn frame_error(e: FrameReadError) -> RelayError {
    match e {
        FrameReadError::Io(e) => RelayError::Io(e),
        FrameReadError::Oversized(len) => {
            RelayError::Protocol(format!("frame of {len} bytes too large"))
        }
    }
}

/// Submits raw ciphertext bytes. Returns once the relay has processed the
/// frame and closed the exchange; an ERROR reply becomes [`RelayError::Rejected`].
pub fn client_send_bytes<A: ToSocketAddrs>(addr: A, payload: &[u8]) -> Result<(), RelayError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    write_frame(&mut stream, &Frame::new(FRAME_SUBMIT, payload.to_vec()))?;
    stream.shutdown(Shutdown::Write)?;
    match read_frame(&mut stream, DEFAULT_MAX_FRAME).map_err(frame_error)? {
        None => Ok(()),
        Some(frame) => Err(check_error_frame(frame)),
    }
}

pub fn client_send<A: ToSocketAddrs>(addr: A, ct: &PolicyCiphertext) -> Result<(), RelayError> {
    client_send_bytes(addr, &serialize_ciphertext(ct))
}

/// An open subscription.
pub struct Subscription {
    reader: BufReader<TcpStream>,
}

impl Subscription {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, RelayError> {
        let mut stream = TcpStream::connect(addr)?;
        write_frame(&mut stream, &Frame::new(FRAME_SUBSCRIBE, Vec::new()))?;
        Ok(Subscription {
            reader: BufReader::new(stream),
        })
    }

    /// Next broadcast payload, or `None` when the relay closes the stream.
    pub fn next_payload(&mut self) -> Result<Option<Vec<u8>>, RelayError> {
        match read_frame(&mut self.reader, DEFAULT_MAX_FRAME).map_err(frame_error)? {
            None => Ok(None),
            Some(f) if f.kind == FRAME_BROADCAST => Ok(Some(f.payload)),
            Some(f) => Err(check_error_frame(f)),
        }
    }

    pub fn next_ciphertext(&mut self) -> Result<Option<PolicyCiphertext>, RelayError> {
        match self.next_payload()? {
            None => Ok(None),
            Some(p) => deserialize_ciphertext(&p, true)
                .map(Some)
                .map_err(|e| RelayError::Protocol(format!("bad broadcast: {e}"))),
        }
    }
}

/// Subscribes and feeds each sanitized ciphertext to `handler` until it
/// returns `false` or the relay closes the stream.
pub fn client_listen<A, F>(addr: A, mut handler: F) -> Result<(), RelayError>
where
    A: ToSocketAddrs,
    F: FnMut(PolicyCiphertext) -> bool,
{
    let mut sub = Subscription::connect(addr)?;
    while let Some(ct) = sub.next_ciphertext()? {
        if !handler(ct) {
            break;
        }
    }
    Ok(())
}
