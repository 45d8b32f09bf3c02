//! External classifiers speaking line-delimited JSON over stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::error::{Error, Result};
use crate::image::{f32_le_bytes, read_f32_le, Image};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct Request {
    id: u64,
    pixels_f32_b64: String,
    w: usize,
    h: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Response {
    id: u64,
    confidence: f64,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

/// A child process answering one confidence request per line. Requests are
/// serialized; concurrent callers wait their turn.
pub struct ProcessClassifier {
    pipe: Mutex<Pipe>,
}

impl ProcessClassifier {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::BlackBox(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| Error::BlackBox("child stdin unavailable".into()))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| Error::BlackBox("child stdout unavailable".into()))?);
        Ok(Self { pipe: Mutex::new(Pipe { child, stdin, stdout, next_id: 0 }) })
    }
}

impl<S: Scalar> Classifier<S> for ProcessClassifier {
    fn confidence(&self, image: &Image<S>) -> Result<f64> {
        let mut pipe = self.pipe.lock().map_err(|_| Error::BlackBox("adapter poisoned by an earlier failure".into()))?;
        let id = pipe.next_id;
        pipe.next_id += 1;
        let req = Request {
            id,
            pixels_f32_b64: B64.encode(f32_le_bytes(image.pixels().iter().map(|p| p.as_f32()))),
            w: image.width(),
            h: image.height(),
        };
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        pipe.stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| Error::BlackBox(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = pipe.stdout.read_line(&mut reply).map_err(|e| Error::BlackBox(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::BlackBox("classifier closed its output".into()));
        }
        let resp: Response = serde_json::from_str(reply.trim()).map_err(|e| Error::BlackBox(format!("bad response `{}`: {e}", reply.trim())))?;
        if resp.id != id {
            return Err(Error::BlackBox(format!("response id {} does not match request {id}", resp.id)));
        }
        Ok(resp.confidence)
    }
}

impl Drop for ProcessClassifier {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

/// Answers requests from `input` until EOF; the counterpart of [`ProcessClassifier`].
pub fn serve_classifier<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, input: impl BufRead, mut output: impl Write) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("reading request", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line).map_err(|e| Error::BlackBox(format!("bad request: {e}")))?;
        let bytes = B64.decode(&req.pixels_f32_b64).map_err(|e| Error::BlackBox(format!("bad pixel payload: {e}")))?;
        if bytes.len() != req.w * req.h * 4 {
            return Err(Error::dims(req.w * req.h * 4, bytes.len()));
        }
        let image = Image::new(req.w, req.h, read_f32_le(&bytes).map(|v| S::of(v as f64)).collect())?;
        let confidence = model.confidence(&image)?;
        let mut out = serde_json::to_string(&Response { id: req.id, confidence })?;
        out.push('\n');
        output.write_all(out.as_bytes()).and_then(|_| output.flush()).map_err(|e| Error::io("writing response", e))?;
    }
    Ok(())
}
