//! Name-keyed registries of interchangeable strategies.
//!
//! Replay buffering and split planning each have several variants behind a
//! common trait. The variants are registered here under one or more names so
//! that configuration and the command line can select them at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {kind} strategy {name:?} (available: {available})")]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Clone for Registry<T> {
    fn clone(&self) -> Self {
        Self { kind: self.kind, entries: self.entries.clone() }
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    /// Registers `strategy` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, strategy: Arc<T>) -> &mut Self {
        self.entries.insert(name.into().to_ascii_lowercase(), strategy);
        self
    }

    /// Registers one strategy under several names.
    pub fn register_aliases(&mut self, names: &[&str], strategy: Arc<T>) -> &mut Self {
        for name in names {
            self.register(*name, Arc::clone(&strategy));
        }
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        self.entries.get(&name.to_ascii_lowercase()).cloned().ok_or_else(|| UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(&name.to_ascii_lowercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
