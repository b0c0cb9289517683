use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::{Frame, MsgType, ProtocolError, HEADER_LEN, MAX_FRAME_LEN};

/// An ordered, reliable carrier of frames.
pub trait Transport {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Frame, ProtocolError>;
}

/// Frames over any byte stream.
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        StreamTransport { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

/// Reads one frame; a clean end of stream before the first byte is a transport error.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            return Err(ProtocolError::Transport("connection closed".into()))
        }
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if !(HEADER_LEN..=MAX_FRAME_LEN).contains(&len) {
        return Err(ProtocolError::MalformedFrame(format!("frame length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::MalformedFrame("truncated frame".into()),
        _ => e.into(),
    })?;
    let msg = MsgType::from_id(body[0])
        .ok_or_else(|| ProtocolError::MalformedFrame(format!("unknown message type {}", body[0])))?;
    Ok(Frame {
        msg,
        version: u16::from_le_bytes([body[1], body[2]]),
        payload: body[HEADER_LEN..].to_vec(),
    })
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.stream.write_all(&frame.to_bytes())?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        read_frame(&mut self.stream)
    }
}

/// One end of an in-process byte pipe.
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pending.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.pending.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer hung up"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Two connected in-process transports.
pub fn loopback_pair() -> (StreamTransport<PipeEnd>, StreamTransport<PipeEnd>) {
    let (atx, brx) = channel();
    let (btx, arx) = channel();
    let a = PipeEnd {
        tx: atx,
        rx: arx,
        pending: VecDeque::new(),
    };
    let b = PipeEnd {
        tx: btx,
        rx: brx,
        pending: VecDeque::new(),
    };
    (StreamTransport::new(a), StreamTransport::new(b))
}

pub type TcpTransport = StreamTransport<TcpStream>;

impl TcpTransport {
    pub fn connect(addr: &str) -> Result<Self, ProtocolError> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(StreamTransport::new(s))
    }

    /// Accepts a single connection on `addr`.
    pub fn listen(addr: &str) -> Result<Self, ProtocolError> {
        Self::accept(&TcpListener::bind(addr)?)
    }

    pub fn accept(listener: &TcpListener) -> Result<Self, ProtocolError> {
        let (s, _) = listener.accept()?;
        s.set_nodelay(true)?;
        Ok(StreamTransport::new(s))
    }
}
