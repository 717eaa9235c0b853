//! Project state as a fold over an append-only event log.
//!
//! Each project owns `<data_dir>/projects/<id>.jsonl`, one [`Event`] per
//! line. Every mutation is appended before it is applied, so replaying the
//! file on startup rebuilds the same state. A round that was still running
//! when the log ends is restored as failed.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use miatt_forge::uttl::{HistoryRecord, Model, TrainConfig, TrainHistory};
use miatt_forge::{
    assess_miatts, AssessmentReport, CellState, Coverage, Instance, MiattSet, PartialLabeling,
};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactLabel {
    Object,
    NonObject,
}

impl From<FactLabel> for CellState {
    fn from(l: FactLabel) -> Self {
        match l {
            FactLabel::Object => CellState::Object,
            FactLabel::NonObject => CellState::NonObject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFact {
    pub pixel: usize,
    pub label: FactLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ProjectCreated {
        id: String,
        name: Option<String>,
    },
    InstanceAdded {
        instance_id: String,
        width: usize,
        height: usize,
        pixels: Vec<f64>,
    },
    AnnotationSubmitted {
        instance_id: String,
        contributor_id: String,
        cells: Vec<CellFact>,
    },
    RoundStarted {
        token: String,
        config: TrainConfig,
    },
    RoundFinished {
        token: String,
        history: TrainHistory,
        model: Model,
    },
    RoundFailed {
        token: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RoundStatus {
    Idle,
    Running { epoch: usize, max_epochs: usize },
    Done { selected_epoch: Option<usize> },
    Failed { message: String },
}

/// Progress of one round, published by the training thread.
#[derive(Debug, Clone)]
pub struct RoundProgress {
    pub status: RoundStatus,
    pub history: TrainHistory,
}

#[derive(Debug)]
pub struct Round {
    pub token: String,
    pub config: TrainConfig,
    pub progress: RwLock<RoundProgress>,
}

impl Round {
    pub fn snapshot(&self) -> RoundProgress {
        self.progress.read().expect("round lock poisoned").clone()
    }

    pub fn is_running(&self) -> bool {
        matches!(self.progress.read().expect("round lock poisoned").status, RoundStatus::Running { .. })
    }

    pub fn publish_epoch(&self, epoch: usize, max_epochs: usize, record: Option<&HistoryRecord>) {
        let mut p = self.progress.write().expect("round lock poisoned");
        p.status = RoundStatus::Running { epoch, max_epochs };
        if let Some(r) = record {
            p.history.records.push(r.clone());
        }
    }

    pub fn finish(&self, history: TrainHistory) {
        let mut p = self.progress.write().expect("round lock poisoned");
        p.status = RoundStatus::Done { selected_epoch: history.selected_epoch };
        p.history = history;
    }

    pub fn fail(&self, message: String) {
        let mut p = self.progress.write().expect("round lock poisoned");
        p.status = RoundStatus::Failed { message };
    }
}

#[derive(Debug, Clone)]
pub struct Submission {
    pub contributor_id: String,
    pub target: PartialLabeling,
}

#[derive(Debug, Clone)]
pub struct InstanceEntry {
    pub id: String,
    pub instance: Instance,
    /// One target per contributor, in order of first submission.
    pub submissions: Vec<Submission>,
}

impl InstanceEntry {
    pub fn miatts(&self) -> MiattSet {
        MiattSet::new(self.submissions.iter().map(|s| s.target.clone()).collect())
            .expect("submissions share the instance shape")
    }

    pub fn assessment(&self) -> AssessmentReport {
        if self.submissions.is_empty() {
            return AssessmentReport {
                count_ok: false,
                partial_flags: Vec::new(),
                consistent: true,
                conflicts: Vec::new(),
                coverage: Coverage { determined: 0, domain: self.instance.len() },
                passed: false,
            };
        }
        assess_miatts(&self.miatts()).expect("non-empty set")
    }
}

#[derive(Debug)]
pub struct Project {
    pub id: String,
    pub name: Option<String>,
    pub instances: Vec<InstanceEntry>,
    pub rounds: Vec<Arc<Round>>,
    pub latest_model: Option<(String, Model)>,
}

impl Project {
    pub fn empty(id: String, name: Option<String>) -> Self {
        Self { id, name, instances: Vec::new(), rounds: Vec::new(), latest_model: None }
    }

    pub fn instance(&self, id: &str) -> ApiResult<&InstanceEntry> {
        self.instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| ApiError::NotFound(format!("instance {id} not found in project {}", self.id)))
    }

    pub fn round(&self, token: &str) -> ApiResult<&Arc<Round>> {
        self.rounds
            .iter()
            .find(|r| r.token == token)
            .ok_or_else(|| ApiError::NotFound(format!("round {token} not found in project {}", self.id)))
    }

    pub fn round_status(&self) -> RoundStatus {
        self.rounds.last().map_or(RoundStatus::Idle, |r| r.snapshot().status)
    }

    pub fn running_round(&self) -> Option<&Arc<Round>> {
        self.rounds.iter().find(|r| r.is_running())
    }

    /// Checks an event against the current state without applying it.
    pub fn validate(&self, event: &Event) -> ApiResult<()> {
        match event {
            Event::ProjectCreated { .. } => Err(ApiError::Conflict("project already exists".into())),
            Event::InstanceAdded { instance_id, width, height, pixels } => {
                if self.instances.iter().any(|i| &i.id == instance_id) {
                    return Err(ApiError::Conflict(format!("instance {instance_id} already exists")));
                }
                Instance::new(*width, *height, pixels.clone()).map_err(|e| ApiError::invalid(e.to_string()))?;
                Ok(())
            }
            Event::AnnotationSubmitted { instance_id, cells, .. } => {
                let entry = self.instance(instance_id)?;
                validate_cells(cells, entry.instance.len())
            }
            Event::RoundStarted { .. } => match self.running_round() {
                Some(r) => Err(ApiError::Conflict(format!("round {} is still running", r.token))),
                None => Ok(()),
            },
            Event::RoundFinished { token, .. } | Event::RoundFailed { token, .. } => self.round(token).map(|_| ()),
        }
    }

    /// Applies a validated event.
    pub fn apply(&mut self, event: Event) {
        match event {
            Event::ProjectCreated { .. } => {}
            Event::InstanceAdded { instance_id, width, height, pixels } => {
                self.instances.push(InstanceEntry {
                    id: instance_id,
                    instance: Instance::new(width, height, pixels).expect("validated instance"),
                    submissions: Vec::new(),
                });
            }
            Event::AnnotationSubmitted { instance_id, contributor_id, cells } => {
                let entry = self.instances.iter_mut().find(|i| i.id == instance_id).expect("validated instance id");
                let (w, h) = (entry.instance.width(), entry.instance.height());
                let target = PartialLabeling::from_facts(w, h, cells.iter().map(|c| (c.pixel, c.label.into())))
                    .expect("validated cells");
                match entry.submissions.iter_mut().find(|s| s.contributor_id == contributor_id) {
                    Some(s) => s.target = target,
                    None => entry.submissions.push(Submission { contributor_id, target }),
                }
            }
            Event::RoundStarted { token, config } => {
                let max_epochs = config.max_epochs;
                self.rounds.push(Arc::new(Round {
                    token,
                    config,
                    progress: RwLock::new(RoundProgress {
                        status: RoundStatus::Running { epoch: 0, max_epochs },
                        history: TrainHistory::default(),
                    }),
                }));
            }
            Event::RoundFinished { token, history, model } => {
                if let Ok(round) = self.round(&token) {
                    round.finish(history);
                }
                self.latest_model = Some((token, model));
            }
            Event::RoundFailed { token, message } => {
                if let Ok(round) = self.round(&token) {
                    round.fail(message);
                }
            }
        }
    }
}

/// Submission rules: every pixel in range, no pixel twice, at least one
/// fact, and at least one pixel left unknown.
pub fn validate_cells(cells: &[CellFact], domain: usize) -> ApiResult<()> {
    if cells.is_empty() {
        return Err(ApiError::invalid("submission has no cells"));
    }
    let mut seen = HashSet::with_capacity(cells.len());
    for c in cells {
        if c.pixel >= domain {
            return Err(ApiError::Invalid {
                message: format!("pixel {} outside the instance domain of {domain} pixels", c.pixel),
                details: serde_json::json!({ "pixel": c.pixel, "domain": domain }),
            });
        }
        if !seen.insert(c.pixel) {
            return Err(ApiError::Invalid {
                message: format!("pixel {} appears more than once", c.pixel),
                details: serde_json::json!({ "pixel": c.pixel }),
            });
        }
    }
    if cells.len() >= domain {
        return Err(ApiError::invalid(format!(
            "submission labels all {domain} pixels; an inaccurate true target must leave at least one unknown"
        )));
    }
    Ok(())
}

/// A project with its event log.
#[derive(Debug)]
pub struct ProjectHandle {
    pub state: RwLock<Project>,
    log: Mutex<File>,
}

impl ProjectHandle {
    /// Validates, appends and applies `event` under the project write lock.
    pub fn record(&self, event: Event) -> ApiResult<()> {
        let mut project = self.state.write().expect("project lock poisoned");
        self.record_locked(&mut project, event)
    }

    pub fn record_locked(&self, project: &mut Project, event: Event) -> ApiResult<()> {
        project.validate(&event)?;
        self.append(&event)?;
        project.apply(event);
        Ok(())
    }

    fn append(&self, event: &Event) -> ApiResult<()> {
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::Internal(e.to_string()))?;
        line.push('\n');
        let mut log = self.log.lock().expect("log lock poisoned");
        log.write_all(line.as_bytes())?;
        log.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Registry {
    dir: PathBuf,
    projects: RwLock<HashMap<String, Arc<ProjectHandle>>>,
}

impl Registry {
    /// Opens `data_dir`, replaying every project log found there.
    pub fn open(data_dir: &Path) -> std::io::Result<Self> {
        let dir = data_dir.join("projects");
        fs::create_dir_all(&dir)?;
        let mut projects = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let handle = replay(&path)?;
            let id = handle.state.read().expect("fresh lock").id.clone();
            projects.insert(id, Arc::new(handle));
        }
        Ok(Self { dir, projects: RwLock::new(projects) })
    }

    pub fn create(&self, id: String, name: Option<String>) -> ApiResult<Arc<ProjectHandle>> {
        let path = self.dir.join(format!("{id}.jsonl"));
        let log = OpenOptions::new().create_new(true).append(true).open(&path)?;
        let handle = Arc::new(ProjectHandle {
            state: RwLock::new(Project::empty(id.clone(), name.clone())),
            log: Mutex::new(log),
        });
        handle.append(&Event::ProjectCreated { id: id.clone(), name })?;
        self.projects.write().expect("registry lock poisoned").insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<ProjectHandle>> {
        self.projects
            .read()
            .expect("registry lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("project {id} not found")))
    }
}

fn invalid_data(path: &Path, line: usize, msg: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{line}: {msg}", path.display()))
}

fn replay(path: &Path) -> std::io::Result<ProjectHandle> {
    let reader = BufReader::new(File::open(path)?);
    let mut project: Option<Project> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| invalid_data(path, i + 1, e))?;
        match (&mut project, event) {
            (None, Event::ProjectCreated { id, name }) => {
                project = Some(Project::empty(id, name));
            }
            (None, _) => return Err(invalid_data(path, i + 1, "log does not start with project_created")),
            (Some(p), event) => {
                p.validate(&event).map_err(|e| invalid_data(path, i + 1, e))?;
                p.apply(event);
            }
        }
    }
    let mut project = project.ok_or_else(|| invalid_data(path, 0, "empty project log"))?;
    let log = OpenOptions::new().append(true).open(path)?;
    let handle = ProjectHandle { state: RwLock::new(Project::empty(String::new(), None)), log: Mutex::new(log) };
    let interrupted: Vec<String> =
        project.rounds.iter().filter(|r| r.is_running()).map(|r| r.token.clone()).collect();
    for token in interrupted {
        let event = Event::RoundFailed { token, message: "interrupted by a service restart".into() };
        handle.record_locked(&mut project, event).map_err(std::io::Error::other)?;
    }
    *handle.state.write().expect("fresh lock") = project;
    Ok(handle)
}
