use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// A rooted tree of terms, read from `child TAB parent` lines. The single term that never
/// appears as a child is the root, at depth 1.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    ids: HashMap<String, usize>,
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl Taxonomy {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>, parent: &mut Vec<Option<usize>>| {
            *ids.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                parent.push(None);
                names.len() - 1
            })
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message,
            };
            let (child, par) = match line.split('\t').collect::<Vec<_>>()[..] {
                [c, p] if !c.trim().is_empty() && !p.trim().is_empty() => (c.trim(), p.trim()),
                _ => return Err(err("expected `child TAB parent`".into())),
            };
            if child == par {
                return Err(err(format!("`{child}` is its own parent")));
            }
            let c = intern(child, &mut names, &mut parent);
            let p = intern(par, &mut names, &mut parent);
            match parent[c] {
                Some(old) if old != p => {
                    return Err(err(format!(
                        "`{child}` already has parent `{}`",
                        names[old]
                    )))
                }
                _ => parent[c] = Some(p),
            }
        }
        let roots: Vec<&str> = (0..names.len())
            .filter(|&n| parent[n].is_none())
            .map(|n| names[n].as_str())
            .collect();
        if roots.len() != 1 && !names.is_empty() {
            return Err(Error::Taxonomy(format!(
                "{source}: expected exactly one root, found {roots:?}"
            )));
        }
        let mut depth = vec![0usize; names.len()];
        for n in 0..names.len() {
            let mut chain = vec![n];
            let mut cur = n;
            while depth[cur] == 0 {
                match parent[cur] {
                    None => {
                        depth[cur] = 1;
                        break;
                    }
                    Some(p) => {
                        if chain.len() > names.len() {
                            return Err(Error::Taxonomy(format!(
                                "{source}: cycle through `{}`",
                                names[n]
                            )));
                        }
                        chain.push(p);
                        cur = p;
                    }
                }
            }
            for &c in chain.iter().rev() {
                if depth[c] == 0 {
                    depth[c] = depth[parent[c].expect("non-root")] + 1;
                }
            }
        }
        Ok(Self {
            ids,
            names,
            parent,
            depth,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.ids.contains_key(term)
    }

    pub fn depth(&self, term: &str) -> Option<usize> {
        self.ids.get(term).map(|&i| self.depth[i])
    }

    pub fn root(&self) -> Option<&str> {
        (0..self.names.len())
            .find(|&n| self.parent[n].is_none())
            .map(|n| self.names[n].as_str())
    }

    /// Deepest common ancestor of two terms.
    pub fn lca(&self, a: &str, b: &str) -> Option<&str> {
        let (mut x, mut y) = (*self.ids.get(a)?, *self.ids.get(b)?);
        while self.depth[x] > self.depth[y] {
            x = self.parent[x]?;
        }
        while self.depth[y] > self.depth[x] {
            y = self.parent[y]?;
        }
        while x != y {
            x = self.parent[x]?;
            y = self.parent[y]?;
        }
        Some(&self.names[x])
    }

    /// `2·depth(lca) / (depth(a) + depth(b))`. Identical strings score 1 and terms outside the
    /// taxonomy otherwise score 0.
    pub fn wup(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        match (self.depth(a), self.depth(b), self.lca(a, b)) {
            (Some(da), Some(db), Some(l)) => {
                2.0 * self.depth(l).expect("lca is a term") as f64 / (da + db) as f64
            }
            _ => 0.0,
        }
    }
}
