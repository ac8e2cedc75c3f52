use std::io::{BufRead, BufReader, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};
use log::{debug, warn};

use super::{ExecStatus, ReplayError, ReplayRequest, ReplayResponse, Replayer};

struct Worker {
    child: Child,
    reaped: bool,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, ReplayError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .process_group(0)
            .spawn()
            .map_err(|e| ReplayError::SandboxUnavailable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = bounded(1);
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker { child, reaped: false, stdin, lines: rx })
    }

    /// Kills the shell and everything it started.
    fn kill(&mut self) {
        if self.reaped {
            return;
        }
        let pgid = self.child.id() as libc::pid_t;
        if pgid > 1 {
            // SAFETY: plain syscall; the group was created for this child alone
            unsafe { libc::killpg(pgid, libc::SIGKILL) };
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.reaped = true;
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Long-lived sandbox processes speaking one JSON object per line. Each
/// request goes to exactly one idle worker; a worker that misses its
/// deadline is killed and replaced.
pub struct SandboxPool {
    command: String,
    idle: Receiver<Worker>,
    give_back: Sender<Worker>,
    grace: Duration,
}

impl SandboxPool {
    pub fn new(command: &str, workers: usize) -> Result<Self, ReplayError> {
        let workers = workers.max(1);
        let (tx, rx) = bounded(workers);
        for _ in 0..workers {
            tx.send(Worker::spawn(command)?).expect("capacity");
        }
        Ok(SandboxPool { command: command.to_owned(), idle: rx, give_back: tx, grace: Duration::from_secs(5) })
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    /// Whole-request deadline: the per-cell limit for every cell plus the
    /// target and candidate, plus a fixed allowance for start-up.
    fn deadline(&self, req: &ReplayRequest) -> Duration {
        Duration::from_secs(req.timeout_s.saturating_mul(req.cells.len() as u64 + 2)) + self.grace
    }

    fn exchange(&self, worker: &mut Worker, req: &ReplayRequest) -> Result<Result<ReplayResponse, ReplayError>, ()> {
        let mut line = serde_json::to_string(req).expect("serializable");
        line.push('\n');
        if worker.stdin.write_all(line.as_bytes()).and_then(|_| worker.stdin.flush()).is_err() {
            return Err(());
        }
        match worker.lines.recv_timeout(self.deadline(req)) {
            Ok(Ok(text)) => Ok(serde_json::from_str(&text).map_err(|e| ReplayError::Protocol(format!("{e}: {text}")))),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(()),
            Err(RecvTimeoutError::Timeout) => {
                warn!("sandbox worker missed its deadline; restarting it");
                worker.kill();
                Ok(Ok(ReplayResponse::status_only(ExecStatus::Timeout, "request deadline exceeded")))
            }
        }
    }
}

impl Replayer for SandboxPool {
    fn run(&self, req: &ReplayRequest) -> Result<ReplayResponse, ReplayError> {
        let mut worker = self.idle.recv().map_err(|_| ReplayError::SandboxUnavailable("pool closed".into()))?;
        let outcome = self.exchange(&mut worker, req);
        let healthy = matches!(worker.child.try_wait(), Ok(None));
        let result = match outcome {
            Ok(r) => r,
            Err(()) => {
                debug!("sandbox worker died mid-request");
                Ok(ReplayResponse::status_only(ExecStatus::Exception, "sandbox worker exited"))
            }
        };
        let replacement = if healthy {
            Ok(worker)
        } else {
            drop(worker);
            Worker::spawn(&self.command)
        };
        match replacement {
            Ok(w) => {
                let _ = self.give_back.send(w);
            }
            Err(e) => warn!("could not restart sandbox worker: {e}"),
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Op;
    use std::path::PathBuf;
    use std::time::Instant;

    const FAKE: &str = r#"
import json, sys, time
for line in sys.stdin:
    req = json.loads(line)
    if req["target"] == "sleep":
        time.sleep(30)
    if req["target"] == "die":
        sys.exit(3)
    frame = {"columns": [{"name": "a", "dtype": "int64"}], "rows": [[len(req["cells"])]], "total_rows": 1, "truncated": False}
    print(json.dumps({"status": "ok", "input_frame": frame, "output_frame": frame, "detail": req["target"]}), flush=True)
"#;

    fn python() -> Option<String> {
        Command::new("python3").arg("-c").arg("pass").status().ok().filter(|s| s.success()).map(|_| "python3".into())
    }

    fn pool(workers: usize) -> Option<(tempfile::TempDir, SandboxPool)> {
        let py = python()?;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake.py");
        std::fs::write(&script, FAKE).unwrap();
        let p = SandboxPool::new(&format!("{py} {}", script.display()), workers).unwrap();
        Some((dir, p.with_grace(Duration::from_millis(500))))
    }

    fn req(target: &str, timeout_s: u64) -> ReplayRequest {
        ReplayRequest {
            op: Op::Replay,
            cells: vec!["a".into(), "b".into()],
            target: target.into(),
            candidate: None,
            target_var: "df".into(),
            data_dir: PathBuf::from("/tmp"),
            timeout_s,
            max_rows: None,
        }
    }

    #[test]
    fn round_trip() {
        let Some((_d, p)) = pool(2) else { return };
        let r = p.run(&req("x", 5)).unwrap();
        assert_eq!(r.status, ExecStatus::Ok);
        assert_eq!(r.input_frame.unwrap().rows[0][0], 2);
        assert_eq!(r.detail.as_deref(), Some("x"));
    }

    #[test]
    fn deadline_kills_and_pool_recovers() {
        let Some((_d, p)) = pool(1) else { return };
        let started = Instant::now();
        let r = p.run(&req("sleep", 0)).unwrap();
        assert_eq!(r.status, ExecStatus::Timeout);
        assert!(started.elapsed() < Duration::from_secs(10));
        assert_eq!(p.run(&req("after", 5)).unwrap().status, ExecStatus::Ok);
    }

    #[test]
    fn crashed_worker_is_replaced() {
        let Some((_d, p)) = pool(1) else { return };
        assert_eq!(p.run(&req("die", 5)).unwrap().status, ExecStatus::Exception);
        assert_eq!(p.run(&req("again", 5)).unwrap().status, ExecStatus::Ok);
    }

    #[test]
    fn concurrent_requests_are_isolated() {
        let Some((_d, p)) = pool(2) else { return };
        std::thread::scope(|s| {
            let slow = s.spawn(|| p.run(&req("sleep", 0)).unwrap().status);
            let fast = s.spawn(|| p.run(&req("quick", 5)).unwrap().status);
            assert_eq!(fast.join().unwrap(), ExecStatus::Ok);
            assert_eq!(slow.join().unwrap(), ExecStatus::Timeout);
        });
    }

    #[test]
    fn missing_command_is_unavailable() {
        let err = SandboxPool::new("/nonexistent/sandbox-binary", 1);
        // `sh -c` starts fine; the failure surfaces on first use
        if let Ok(p) = err {
            assert_ne!(p.run(&req("x", 1)).unwrap().status, ExecStatus::Ok);
        }
    }
}
