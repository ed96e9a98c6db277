//! Dense encoding of (attribute name, value) pairs.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::point::{AttrId, NULL_ATTR};

pub const DEFAULT_CAPACITY: usize = 1 << 26;

/// Bijection between observed (name, value) pairs and `0..len()`.
///
/// Single writer on the ingestion path; call [`AttributeDictionary::snapshot`]
/// to hand a read-only copy to other threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDictionary {
    columns: HashMap<Arc<str>, HashMap<Arc<str>, AttrId>>,
    entries: Vec<(Arc<str>, Arc<str>)>,
    capacity: usize,
}

impl Default for AttributeDictionary {
    fn default() -> Self {
        Self::with_capacity_limit(DEFAULT_CAPACITY)
    }
}

impl AttributeDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_limit(capacity: usize) -> Self {
        Self {
            columns: HashMap::new(),
            entries: Vec::new(),
            capacity: capacity.min(NULL_ATTR as usize),
        }
    }

    pub fn encode(&mut self, name: &str, value: &str) -> Result<AttrId> {
        if let Some(id) = self.lookup(name, value) {
            return Ok(id);
        }
        if self.entries.len() >= self.capacity {
            return Err(Error::DictionaryOverflow {
                capacity: self.capacity,
            });
        }
        let name: Arc<str> = match self.columns.get_key_value(name) {
            Some((k, _)) => k.clone(),
            None => Arc::from(name),
        };
        let values = self.columns.entry(name.clone()).or_default();
        let value: Arc<str> = Arc::from(value);
        let id = self.entries.len() as AttrId;
        values.insert(value.clone(), id);
        self.entries.push((name, value));
        Ok(id)
    }

    pub fn lookup(&self, name: &str, value: &str) -> Option<AttrId> {
        self.columns.get(name)?.get(value).copied()
    }

    pub fn decode(&self, id: AttrId) -> Option<(&str, &str)> {
        self.entries
            .get(id as usize)
            .map(|(n, v)| (n.as_ref(), v.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn snapshot(&self) -> Arc<AttributeDictionary> {
        Arc::new(self.clone())
    }
}
