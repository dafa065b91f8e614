//! The external notebook: compact task notes that outlive any context
//! deletion. Keys are unique; insertion order is preserved for rendering.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ToolError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEntry {
    pub text: String,
    pub created_round: u32,
    pub updated_round: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Notebook {
    entries: IndexMap<String, NoteEntry>,
}

impl Notebook {
    pub fn insert(&mut self, key: &str, text: &str, round: u32) -> Result<(), ToolError> {
        if self.entries.contains_key(key) {
            return Err(ToolError::DuplicateKey(key.to_string()));
        }
        self.entries.insert(
            key.to_string(),
            NoteEntry {
                text: text.to_string(),
                created_round: round,
                updated_round: round,
            },
        );
        Ok(())
    }

    pub fn update(&mut self, key: &str, text: &str, round: u32) -> Result<(), ToolError> {
        match self.entries.get_mut(key) {
            Some(entry) => {
                entry.text = text.to_string();
                entry.updated_round = round;
                Ok(())
            }
            None => Err(ToolError::UnknownKey(key.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> Option<&NoteEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NoteEntry)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_then_update_keeps_rounds() {
        let mut nb = Notebook::default();
        nb.insert("k1", "first", 3).unwrap();
        assert!(matches!(
            nb.insert("k1", "again", 4),
            Err(ToolError::DuplicateKey(_))
        ));
        nb.update("k1", "second", 7).unwrap();
        let e = nb.get("k1").unwrap();
        assert_eq!(e.text, "second");
        assert_eq!(e.created_round, 3);
        assert_eq!(e.updated_round, 7);
        assert!(e.updated_round > e.created_round);
    }

    #[test]
    fn update_missing_key_fails() {
        let mut nb = Notebook::default();
        assert!(matches!(
            nb.update("nope", "x", 1),
            Err(ToolError::UnknownKey(_))
        ));
    }

    #[test]
    fn iteration_preserves_insertion_order() {
        let mut nb = Notebook::default();
        nb.insert("z", "1", 0).unwrap();
        nb.insert("a", "2", 0).unwrap();
        nb.insert("m", "3", 0).unwrap();
        let keys: Vec<&String> = nb.iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["z", "a", "m"]);
    }
}
