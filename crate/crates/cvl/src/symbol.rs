use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

/// Interned identifier. Comparison and hashing are by index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(u32);

struct Interner {
    ids: HashMap<&'static str, u32>,
    names: Vec<&'static str>,
}

fn interner() -> &'static Mutex<Interner> {
    static INTERNER: OnceLock<Mutex<Interner>> = OnceLock::new();
    INTERNER.get_or_init(|| {
        Mutex::new(Interner {
            ids: HashMap::new(),
            names: Vec::new(),
        })
    })
}

impl Symbol {
    pub fn intern(name: &str) -> Symbol {
        let mut t = interner().lock().unwrap();
        if let Some(&id) = t.ids.get(name) {
            return Symbol(id);
        }
        let leaked: &'static str = Box::leak(name.to_string().into_boxed_str());
        let id = t.names.len() as u32;
        t.names.push(leaked);
        t.ids.insert(leaked, id);
        Symbol(id)
    }

    pub fn name(self) -> &'static str {
        interner().lock().unwrap().names[self.0 as usize]
    }

    /// Names starting with `#` cannot be written in source, so generated
    /// binders never capture user variables.
    pub fn is_generated(self) -> bool {
        self.name().starts_with('#')
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed internal names used by the interruption wrappers and CPS conversion.
pub struct Reserved {
    pub k: Symbol,
    pub n: Symbol,
    pub l: Symbol,
    pub x: Symbol,
    pub f: Symbol,
    pub z: Symbol,
    pub budget: Symbol,
    pub ignored: Symbol,
    pub v: Symbol,
}

pub fn reserved() -> &'static Reserved {
    static R: OnceLock<Reserved> = OnceLock::new();
    R.get_or_init(|| Reserved {
        k: Symbol::intern("#k"),
        n: Symbol::intern("#n"),
        l: Symbol::intern("#l"),
        x: Symbol::intern("#x"),
        f: Symbol::intern("#f"),
        z: Symbol::intern("#z"),
        budget: Symbol::intern("#budget"),
        ignored: Symbol::intern("#_"),
        v: Symbol::intern("#v"),
    })
}
