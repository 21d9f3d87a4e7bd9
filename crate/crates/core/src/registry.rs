//! Name-keyed registries for interchangeable strategies.
//!
//! Collision-risk modes, scenario generators and optimizers are each a trait
//! object family; callers pick one by the name given on the command line or in
//! a config file.

use crate::error::{Error, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, item: Box<T>) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, item)| item.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Speak {
        fn say(&self) -> &'static str;
    }
    struct A;
    struct B;
    impl Speak for A {
        fn say(&self) -> &'static str {
            "a"
        }
    }
    impl Speak for B {
        fn say(&self) -> &'static str {
            "b"
        }
    }

    #[test]
    fn lookup_and_replace() {
        let mut reg: Registry<dyn Speak> = Registry::new("speaker");
        reg.register("x", Box::new(A));
        assert_eq!(reg.get("x").unwrap().say(), "a");
        reg.register("x", Box::new(B));
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.get("x").unwrap().say(), "b");
        let err = reg.get("y").err().unwrap().to_string();
        assert!(err.contains("speaker") && err.contains("`y`") && err.contains("x"));
    }
}
