//! Event control: creation, logging, prioritized polling and idle detection
//! on a logical millisecond clock.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_IDLE_TIMEOUT_MS: u64 = 300_000;
pub const DEFAULT_TIMEOUT_EVENT: &str = "Doing nothing (Time-out)";

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("`{name}` is not a {category} event in the scenario catalog")]
    UnknownEventName { category: EventCategory, name: String },
    #[error("batch limit must be at least 1")]
    ZeroBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    Dialogue,
    Time,
    TeachingFeedback,
    Practicability,
}

impl EventCategory {
    pub const ALL: [EventCategory; 4] = [
        EventCategory::Dialogue,
        EventCategory::Time,
        EventCategory::TeachingFeedback,
        EventCategory::Practicability,
    ];

    /// Lower ranks are processed first.
    pub fn priority(self) -> u8 {
        match self {
            EventCategory::TeachingFeedback => 0,
            EventCategory::Practicability => 1,
            EventCategory::Dialogue => 2,
            EventCategory::Time => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventCategory::Dialogue => "dialogue",
            EventCategory::Time => "time",
            EventCategory::TeachingFeedback => "teaching_feedback",
            EventCategory::Practicability => "practicability",
        }
    }
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Event names known to a scenario, per category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCatalog {
    #[serde(default)]
    pub dialogue: Vec<String>,
    #[serde(default)]
    pub time: Vec<String>,
    #[serde(default)]
    pub teaching_feedback: Vec<String>,
    #[serde(default)]
    pub practicability: Vec<String>,
}

impl EventCatalog {
    pub fn names(&self, category: EventCategory) -> &[String] {
        match category {
            EventCategory::Dialogue => &self.dialogue,
            EventCategory::Time => &self.time,
            EventCategory::TeachingFeedback => &self.teaching_feedback,
            EventCategory::Practicability => &self.practicability,
        }
    }

    pub fn contains(&self, category: EventCategory, name: &str) -> bool {
        self.names(category).iter().any(|n| n == name)
    }

    pub fn category_of(&self, name: &str) -> Option<EventCategory> {
        EventCategory::ALL.into_iter().find(|&c| self.contains(c, name))
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventCategory, &str)> {
        EventCategory::ALL
            .into_iter()
            .flat_map(move |c| self.names(c).iter().map(move |n| (c, n.as_str())))
    }

    pub fn len(&self) -> usize {
        EventCategory::ALL.iter().map(|&c| self.names(c).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Pending,
    Processed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: u64,
    pub category: EventCategory,
    pub name: String,
    pub at: u64,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
    pub status: EventStatus,
}

impl EventRecord {
    pub fn is_pending(&self) -> bool {
        self.status == EventStatus::Pending
    }
}

#[derive(Debug, Clone)]
pub struct EventLog {
    catalog: Arc<EventCatalog>,
    records: Vec<EventRecord>,
    next_id: u64,
    clock: u64,
    idle_timeout: u64,
    idle_deadline: Option<u64>,
    timeout_event: String,
}

impl EventLog {
    /// A log at clock 0 with the idle timer armed.
    pub fn new(catalog: Arc<EventCatalog>, idle_timeout: u64, timeout_event: &str) -> Self {
        assert!(idle_timeout > 0, "idle timeout must be positive");
        EventLog {
            catalog,
            records: Vec::new(),
            next_id: 1,
            clock: 0,
            idle_timeout,
            idle_deadline: Some(idle_timeout),
            timeout_event: timeout_event.to_string(),
        }
    }

    pub fn catalog(&self) -> &EventCatalog {
        &self.catalog
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn idle_deadline(&self) -> Option<u64> {
        self.idle_deadline
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&EventRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Appends a pending record stamped with the current clock. Dialogue
    /// resets the idle timer.
    pub fn emit_event(
        &mut self,
        category: EventCategory,
        name: &str,
        payload: BTreeMap<String, String>,
    ) -> Result<EventRecord, EventError> {
        if !self.catalog.contains(category, name) {
            return Err(EventError::UnknownEventName {
                category,
                name: name.to_string(),
            });
        }
        let at = self.clock;
        if category == EventCategory::Dialogue {
            self.idle_deadline = Some(at + self.idle_timeout);
        }
        Ok(self.push(category, name, at, payload))
    }

    fn push(&mut self, category: EventCategory, name: &str, at: u64, payload: BTreeMap<String, String>) -> EventRecord {
        let record = EventRecord {
            id: self.next_id,
            category,
            name: name.to_string(),
            at,
            payload,
            status: EventStatus::Pending,
        };
        self.next_id += 1;
        self.records.push(record.clone());
        record
    }

    /// Moves the clock forward. Each idle deadline strictly passed during the
    /// step emits one timeout event stamped at the deadline and re-arms the
    /// timer from there.
    pub fn advance_clock(&mut self, delta: u64) -> Vec<EventRecord> {
        let target = self.clock.saturating_add(delta);
        let mut emitted = Vec::new();
        while let Some(deadline) = self.idle_deadline {
            if deadline >= target {
                break;
            }
            self.clock = deadline;
            let name = self.timeout_event.clone();
            emitted.push(self.push(EventCategory::Time, &name, deadline, BTreeMap::new()));
            self.idle_deadline = Some(deadline + self.idle_timeout);
        }
        self.clock = target;
        emitted
    }

    /// Advances to `now` if it lies ahead of the clock.
    pub fn advance_to(&mut self, now: u64) -> Vec<EventRecord> {
        if now > self.clock {
            self.advance_clock(now - self.clock)
        } else {
            Vec::new()
        }
    }

    /// Pending records in processing order: category priority, then id.
    pub fn peek_due(&self, limit: usize) -> Vec<EventRecord> {
        let mut pending: Vec<&EventRecord> = self.records.iter().filter(|r| r.is_pending()).collect();
        pending.sort_by_key(|r| (r.category.priority(), r.id));
        pending.into_iter().take(limit).cloned().collect()
    }

    pub fn mark_processed(&mut self, ids: &[u64]) {
        for r in self.records.iter_mut().filter(|r| ids.contains(&r.id)) {
            r.status = EventStatus::Processed;
        }
    }

    /// Returns up to `limit` due records and marks them processed.
    pub fn poll_due(&mut self, limit: usize) -> Result<Vec<EventRecord>, EventError> {
        if limit == 0 {
            return Err(EventError::ZeroBatch);
        }
        let mut batch = self.peek_due(limit);
        let ids: Vec<u64> = batch.iter().map(|r| r.id).collect();
        self.mark_processed(&ids);
        for r in &mut batch {
            r.status = EventStatus::Processed;
        }
        Ok(batch)
    }

    pub fn pending_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_pending()).count()
    }

    /// Deletes processed records; ids are never reused.
    pub fn compact(&mut self) -> usize {
        let before = self.records.len();
        self.records.retain(EventRecord::is_pending);
        before - self.records.len()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        records_to_jsonl(&self.records)
    }

    pub fn to_csv(&self) -> String {
        records_to_csv(&self.records)
    }
}

pub fn records_to_jsonl(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("event records serialize"));
        out.push('\n');
    }
    out
}

/// Comma-separated summary; payload flattened as `key=value` pairs joined by `;`.
pub fn records_to_csv(records: &[EventRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "category", "name", "at", "status", "payload"])
        .expect("in-memory write");
    for r in records {
        let payload = r
            .payload
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let status = match r.status {
            EventStatus::Pending => "pending",
            EventStatus::Processed => "processed",
        };
        w.write_record([
            r.id.to_string(),
            r.category.to_string(),
            r.name.clone(),
            r.at.to_string(),
            status.to_string(),
            payload,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
