use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifecycle {
    Active,
    Suspended,
    Terminated,
}

impl Lifecycle {
    pub fn name(self) -> &'static str {
        match self {
            Lifecycle::Active => "active",
            Lifecycle::Suspended => "suspended",
            Lifecycle::Terminated => "terminated",
        }
    }
}

/// White pages (identity and lifecycle) and yellow pages (services).
/// Agent labels are unique across kinds since messages address labels.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    order: Vec<AgentId>,
    white_pages: HashMap<String, (usize, Lifecycle)>,
    yellow_pages: BTreeMap<String, Vec<AgentId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentEntry {
    pub id: AgentId,
    pub state: Lifecycle,
    pub services: Vec<String>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<S: Into<String>>(
        &mut self,
        id: AgentId,
        services: impl IntoIterator<Item = S>,
    ) -> Result<(), AgentError> {
        if self.white_pages.contains_key(&id.label) {
            return Err(AgentError::DuplicateAgent(id.label));
        }
        self.white_pages
            .insert(id.label.clone(), (self.order.len(), Lifecycle::Active));
        for s in services {
            self.yellow_pages
                .entry(s.into())
                .or_default()
                .push(id.clone());
        }
        self.order.push(id);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&AgentId> {
        self.white_pages.get(label).map(|&(i, _)| &self.order[i])
    }

    pub fn lifecycle(&self, label: &str) -> Option<Lifecycle> {
        self.white_pages.get(label).map(|&(_, s)| s)
    }

    pub fn is_active(&self, label: &str) -> bool {
        self.lifecycle(label) == Some(Lifecycle::Active)
    }

    /// Returns the previous state. Terminated agents stay terminated.
    pub fn set_lifecycle(
        &mut self,
        label: &str,
        state: Lifecycle,
    ) -> Result<Lifecycle, AgentError> {
        let entry = self
            .white_pages
            .get_mut(label)
            .ok_or_else(|| AgentError::UnknownAgent(label.to_owned()))?;
        let previous = entry.1;
        if previous == Lifecycle::Terminated && state != Lifecycle::Terminated {
            return Err(AgentError::Terminated(label.to_owned()));
        }
        entry.1 = state;
        Ok(previous)
    }

    /// Providers of a service in registration order, whatever their state.
    pub fn lookup_service(&self, service: &str) -> &[AgentId] {
        self.yellow_pages
            .get(service)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    /// Agents in registration order.
    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.order.iter()
    }

    pub fn entries(&self) -> Vec<AgentEntry> {
        let mut services: HashMap<&str, Vec<String>> = HashMap::new();
        for (name, ids) in &self.yellow_pages {
            for id in ids {
                services
                    .entry(id.label.as_str())
                    .or_default()
                    .push(name.clone());
            }
        }
        self.order
            .iter()
            .map(|id| AgentEntry {
                id: id.clone(),
                state: self.white_pages[&id.label].1,
                services: services.remove(id.label.as_str()).unwrap_or_default(),
            })
            .collect()
    }
}
