//! Minimal HTTP/1.1 server that answers `/chat/completions` and `/api/chat`
//! requests from a closure. One request per connection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub path: String,
    /// Header names lowercased.
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers.iter().find(|(k, _)| *k == name).map(|(_, v)| v.as_str())
    }

    pub fn model(&self) -> &str {
        self.body["model"].as_str().unwrap_or("")
    }

    pub fn prompt(&self) -> &str {
        self.body["messages"][0]["content"].as_str().unwrap_or("")
    }

    /// Top-level for chat completions, under `options` for the daemon flavor.
    pub fn temperature(&self) -> Option<f64> {
        self.body["temperature"].as_f64().or_else(|| self.body["options"]["temperature"].as_f64())
    }
}

#[derive(Debug, Clone)]
pub enum Reply {
    /// Completion text with usage counts, shaped for the request's path.
    Text { text: String, prompt_tokens: u64, completion_tokens: u64 },
    Status(u16, String),
    /// Sent with status 200 as-is.
    Raw(String),
    /// Sleep, then answer.
    Delayed(Duration, Box<Reply>),
    /// Close the connection without answering.
    Hangup,
}

impl Reply {
    pub fn text(text: &str) -> Self {
        Reply::Text {
            text: text.to_string(),
            prompt_tokens: 100,
            completion_tokens: text.split_whitespace().count() as u64,
        }
    }
}

type Responder = dyn Fn(&Request) -> Reply + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<Request>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(responder: impl Fn(&Request) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let handle = {
            let (log, stop) = (log.clone(), stop.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let (log, responder) = (log.clone(), responder.clone());
                    thread::spawn(move || {
                        let _ = serve(stream, &log, responder.as_ref());
                    });
                }
            })
        };
        Self {
            addr,
            log,
            stop,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn read_request(stream: &TcpStream) -> std::io::Result<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    Ok(Request {
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    })
}

fn serve(mut stream: TcpStream, log: &Mutex<Vec<Request>>, responder: &Responder) -> std::io::Result<()> {
    let req = read_request(&stream)?;
    log.lock().unwrap().push(req.clone());
    let mut reply = responder(&req);
    while let Reply::Delayed(d, inner) = reply {
        thread::sleep(d);
        reply = *inner;
    }
    let (status, body) = match reply {
        Reply::Text {
            text,
            prompt_tokens,
            completion_tokens,
        } => {
            let body = if req.path.ends_with("/api/chat") {
                json!({
                    "model": req.model(),
                    "message": {"role": "assistant", "content": text},
                    "done": true,
                    "prompt_eval_count": prompt_tokens,
                    "eval_count": completion_tokens,
                })
            } else {
                json!({
                    "id": "mock",
                    "object": "chat.completion",
                    "model": req.model(),
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                    "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens,
                              "total_tokens": prompt_tokens + completion_tokens},
                })
            };
            (200, body.to_string())
        }
        Reply::Status(code, body) => (code, body),
        Reply::Raw(body) => (200, body),
        Reply::Hangup => return Ok(()),
        Reply::Delayed(..) => unreachable!(),
    };
    write!(
        stream,
        "HTTP/1.1 {status} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
