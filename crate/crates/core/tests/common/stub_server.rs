//! Minimal scripted HTTP server for exercising the model client offline.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Default)]
pub struct StubState {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    /// Status codes to return before answering normally.
    pub script: Mutex<VecDeque<u16>>,
    pub bodies: Mutex<Vec<Value>>,
    pub auth_headers: Mutex<Vec<Option<String>>>,
    /// Replaces the echo reply with a function of the prompt.
    pub reply: Mutex<Option<fn(&str) -> String>>,
}

pub struct Stub {
    pub base_url: String,
    pub state: Arc<StubState>,
}

/// Starts a server that answers every request after `delay`. The reply is a
/// deterministic function of the request: `"echo:<prompt length>:<temperature>"`.
pub fn start(delay: Duration) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let state = Arc::new(StubState::default());
    let st = state.clone();
    std::thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(conn) = conn else { continue };
            let st = st.clone();
            std::thread::spawn(move || handle(conn, &st, delay));
        }
    });
    Stub { base_url: format!("http://{addr}/v1"), state }
}

fn handle(mut conn: TcpStream, st: &StubState, delay: Duration) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => len = value.trim().parse().unwrap(),
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap();

    st.requests.fetch_add(1, Ordering::SeqCst);
    let now = st.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    st.max_in_flight.fetch_max(now, Ordering::SeqCst);
    std::thread::sleep(delay);
    st.in_flight.fetch_sub(1, Ordering::SeqCst);

    st.bodies.lock().unwrap().push(body.clone());
    st.auth_headers.lock().unwrap().push(auth);
    let scripted = st.script.lock().unwrap().pop_front();
    let (status, payload) = match scripted {
        Some(code) => (code, json!({"error": "scripted"})),
        None => {
            let prompt = body
                .pointer("/messages/0/content")
                .or_else(|| body.get("prompt"))
                .and_then(Value::as_str)
                .unwrap_or("");
            let temp = body.get("temperature").map(|t| t.to_string()).unwrap_or("none".into());
            let text = match *st.reply.lock().unwrap() {
                Some(f) => f(prompt),
                None => format!("echo:{}:{}", prompt.len(), temp),
            };
            let reply = if body.get("messages").is_some() {
                json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]})
            } else {
                json!({"choices": [{"index": 0, "text": text}]})
            };
            (200, reply)
        }
    };
    let payload = payload.to_string();
    let resp = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = conn.write_all(resp.as_bytes());
}
