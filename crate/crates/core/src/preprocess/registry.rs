use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::drain::{LogTemplate, TemplateId};

/// Dense vocabulary index of a registered template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogKey {
    pub key_index: usize,
    pub template_id: TemplateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub key_index: usize,
    pub template_id: TemplateId,
    pub template: String,
    pub match_count: u64,
}

/// Maps template ids to dense key indices in registration order.
#[derive(Debug, Default, Clone)]
pub struct KeyRegistry {
    by_id: HashMap<TemplateId, usize>,
    entries: Vec<CatalogEntry>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent: a template id already present keeps its index (its match
    /// count is accumulated).
    pub fn register(&mut self, template: &LogTemplate) -> LogKey {
        let template_id = template.template_id();
        if let Some(&key_index) = self.by_id.get(&template_id) {
            return LogKey {
                key_index,
                template_id,
            };
        }
        let key_index = self.entries.len();
        self.by_id.insert(template_id, key_index);
        self.entries.push(CatalogEntry {
            key_index,
            template_id,
            template: template.text(),
            match_count: 0,
        });
        LogKey {
            key_index,
            template_id,
        }
    }

    pub(crate) fn add_matches(&mut self, key_index: usize, count: u64) {
        self.entries[key_index].match_count += count;
    }

    pub fn lookup(&self, id: TemplateId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn from_entries(entries: Vec<CatalogEntry>) -> Self {
        let by_id = entries.iter().map(|e| (e.template_id, e.key_index)).collect();
        KeyRegistry { by_id, entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(text: &str) -> LogTemplate {
        LogTemplate {
            cluster: 0,
            tokens: text.split(' ').map(String::from).collect(),
            match_count: 1,
        }
    }

    #[test]
    fn registration_is_idempotent() {
        let mut reg = KeyRegistry::new();
        let a = reg.register(&tpl("a <*> c"));
        let b = reg.register(&tpl("a <*> c"));
        assert_eq!(a, b);
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn indices_follow_registration_order() {
        let mut reg = KeyRegistry::new();
        assert_eq!(reg.register(&tpl("first")).key_index, 0);
        assert_eq!(reg.register(&tpl("second")).key_index, 1);
        assert_eq!(reg.register(&tpl("first")).key_index, 0);
        assert_eq!(reg.lookup(tpl("second").template_id()), Some(1));
    }
}
