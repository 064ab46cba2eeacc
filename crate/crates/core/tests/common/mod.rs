//! Minimal HTTP/1.1 stub of the scoring server, built on `std::net`.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

pub type Handler = dyn Fn(&Value, usize) -> (u16, Value) + Send + Sync;

pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Value>>>,
}

impl Stub {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Serves `handler(request_json, hit_index)` on a free local port.
pub fn serve(handler: impl Fn(&Value, usize) -> (u16, Value) + Send + Sync + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let handler: Arc<Handler> = Arc::new(handler);
    let (h, r) = (hits.clone(), requests.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (handler, h, r) = (handler.clone(), h.clone(), r.clone());
            std::thread::spawn(move || {
                let _ = respond(stream, &*handler, &h, &r);
            });
        }
    });
    Stub { url, hits, requests }
}

fn respond(
    stream: TcpStream,
    handler: &Handler,
    hits: &AtomicUsize,
    requests: &Mutex<Vec<Value>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let n = hits.fetch_add(1, Ordering::SeqCst);
    requests.lock().unwrap().push(request.clone());
    let (status, reply) = handler(&request, n);
    let payload = reply.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

/// Scores text the way a model with perfect recall of earlier words would:
/// words seen before in the text cost `seen` nats, new words `fresh`.
pub fn recall_response(request: &Value, fresh: f64, seen: f64) -> Value {
    let text = request["text"].as_str().unwrap_or_default();
    let pieces = reprobe::toylm::vocab::split(text).expect("splittable text");
    let mut earlier = std::collections::HashSet::new();
    let tokens: Vec<Value> = pieces
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let word = p.word.to_lowercase();
            let logprob = if i == 0 {
                Value::Null
            } else if earlier.contains(&word) {
                json!(seen)
            } else {
                json!(fresh)
            };
            earlier.insert(word);
            json!({"id": i, "text": &text[p.start..p.end], "start": p.start, "end": p.end, "logprob": logprob})
        })
        .collect();
    json!({"model": request["model"], "revision": request["revision"], "tokens": tokens})
}
