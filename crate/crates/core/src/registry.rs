//! Name-keyed factories for runtime-selected strategies.

use std::collections::BTreeMap;
use std::fmt;

pub type Factory<T, C, E> = Box<dyn Fn(&C) -> Result<Box<T>, E> + Send + Sync>;

/// Maps strategy names to constructors taking a shared context `C`.
pub struct Registry<T: ?Sized, C, E> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T, C, E>>,
}

impl<T: ?Sized, C, E> Registry<T, C, E> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>, E> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    /// Builds the strategy registered as `name`; `None` when unknown.
    pub fn create(&self, name: &str, context: &C) -> Option<Result<Box<T>, E>> {
        self.factories.get(name).map(|f| f(context))
    }
}

impl<T: ?Sized, C, E> fmt::Debug for Registry<T, C, E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}
