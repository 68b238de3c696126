//! Session service: newline-delimited JSON over TCP. Each connection owns
//! at most one session; frames are paced at the session frame rate.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::{FrameEvent, GoalSource, MotionPolicy, Session, SessionOptions, SessionStatus};
use crate::state::Action;
use crate::voxel::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Hello,
    Start {
        #[serde(rename = "objectId")]
        object_id: String,
        action: String,
        #[serde(default)]
        seed: u64,
    },
    Resample {
        seed: u64,
        /// Also draw a new goal and replan.
        #[serde(default)]
        goal: bool,
    },
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Scene {
        scene: Scene,
        fps: u32,
    },
    Frame(FrameEvent),
    Status {
        status: SessionStatus,
        frame: usize,
        paused: bool,
        /// Planned waypoints in world (x, z), sent when a path is (re)planned.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        path: Option<Vec<[f64; 2]>>,
    },
    Error {
        message: String,
    },
}

/// Everything a connection needs to start sessions.
#[derive(Clone)]
pub struct ServiceConfig {
    pub scene: Scene,
    pub policy: Arc<dyn MotionPolicy>,
    pub goals: GoalSource,
    pub options: SessionOptions,
}

pub struct Server {
    listener: TcpListener,
    config: ServiceConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServiceConfig) -> Result<Server> {
        config.scene.validate()?;
        let listener = TcpListener::bind(addr).map_err(|e| Error::io("<bind>", e))?;
        Ok(Server { listener, config })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| Error::io("<listener>", e))
    }

    /// Accepts connections forever, one thread each.
    pub fn serve(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream.map_err(|e| Error::io("<accept>", e))?;
            let config = self.config.clone();
            thread::spawn(move || {
                // a dropped client is not a server error
                let _ = handle_connection(stream, config);
            });
        }
        Ok(())
    }

    /// Runs [`Server::serve`] on a background thread.
    pub fn spawn(self) -> Result<SocketAddr> {
        let addr = self.local_addr()?;
        thread::spawn(move || self.serve());
        Ok(addr)
    }
}

fn send(out: &mut TcpStream, msg: &ServerMessage) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(msg).map_err(std::io::Error::other)?;
    line.push(b'\n');
    out.write_all(&line)
}

fn status_message(session: &Session, paused: bool, with_path: bool) -> ServerMessage {
    ServerMessage::Status {
        status: session.status,
        frame: session.frame,
        paused,
        path: with_path.then(|| session.path().waypoints.iter().map(|w| [w.x, w.y]).collect()),
    }
}

enum Inbound {
    Line(String),
    Closed,
}

fn handle_connection(stream: TcpStream, config: ServiceConfig) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut out = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stream).lines() {
            match line {
                Ok(l) => {
                    if tx.send(Inbound::Line(l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = tx.send(Inbound::Closed);
    });

    let fps = config.policy.state_config().fps.max(1);
    let period = Duration::from_secs_f64(1.0 / f64::from(fps));
    let mut session: Option<Session> = None;
    let mut paused = false;
    let mut next_tick = Instant::now();
    loop {
        let streaming = session.as_ref().is_some_and(|s| s.status.is_active()) && !paused;
        let inbound = if streaming {
            rx.recv_timeout(next_tick.saturating_duration_since(Instant::now()))
        } else {
            rx.recv().map_err(|_| RecvTimeoutError::Disconnected)
        };
        match inbound {
            Ok(Inbound::Line(line)) => {
                if line.trim().is_empty() {
                    continue;
                }
                let reply = handle_line(&line, &config, &mut session, &mut paused);
                for msg in reply {
                    send(&mut out, &msg)?;
                }
                if !streaming {
                    next_tick = Instant::now();
                }
            }
            Ok(Inbound::Closed) | Err(RecvTimeoutError::Disconnected) => return Ok(()),
            Err(RecvTimeoutError::Timeout) => {
                let Some(s) = session.as_mut() else { continue };
                next_tick += period;
                match s.step() {
                    Ok(ev) => {
                        send(&mut out, &ServerMessage::Frame(ev))?;
                        if !s.status.is_active() {
                            send(&mut out, &status_message(s, paused, false))?;
                        }
                    }
                    Err(e) => {
                        send(&mut out, &ServerMessage::Error { message: e.to_string() })?;
                        send(&mut out, &status_message(s, paused, false))?;
                    }
                }
            }
        }
    }
}

fn error(message: impl Into<String>) -> Vec<ServerMessage> {
    vec![ServerMessage::Error { message: message.into() }]
}

/// Applies one client line and returns the replies.
pub fn handle_line(
    line: &str,
    config: &ServiceConfig,
    session: &mut Option<Session>,
    paused: &mut bool,
) -> Vec<ServerMessage> {
    let msg: ClientMessage = match serde_json::from_str(line) {
        Ok(m) => m,
        Err(e) => return error(format!("malformed message: {e}")),
    };
    match msg {
        ClientMessage::Hello => vec![ServerMessage::Scene {
            scene: config.scene.clone(),
            fps: config.policy.state_config().fps,
        }],
        ClientMessage::Start { object_id, action, seed } => {
            let Some(action) = Action::parse(&action) else {
                return error(Error::UnsupportedAction(action).to_string());
            };
            match Session::start(
                config.scene.clone(),
                &object_id,
                action,
                seed,
                config.policy.clone(),
                config.goals.clone(),
                config.options.clone(),
            ) {
                Ok(s) => {
                    *paused = false;
                    let reply = vec![status_message(&s, false, true)];
                    *session = Some(s);
                    reply
                }
                Err(e) => error(e.to_string()),
            }
        }
        ClientMessage::Resample { seed, goal } => match session.as_mut() {
            Some(s) => match s.resample_style(seed, goal) {
                Ok(()) => vec![status_message(s, *paused, goal)],
                Err(e) => error(e.to_string()),
            },
            None => error("no active session"),
        },
        ClientMessage::Pause | ClientMessage::Resume => {
            *paused = matches!(msg, ClientMessage::Pause);
            match session.as_ref() {
                Some(s) => vec![status_message(s, *paused, false)],
                None => error("no active session"),
            }
        }
    }
}
