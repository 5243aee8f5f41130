//! Shadow lineage metadata: per-symbol timestamps, dependency edges and staleness flags.
//!
//! A symbol is stale when some parent is newer than it or is itself stale, taking the least
//! fixed point over possibly cyclic dependency graphs. The flag is maintained incrementally.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::lang::QualifiedName;

pub type SymbolId = u64;
pub type ObjectId = u64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowSymbol {
    pub id: SymbolId,
    pub name: QualifiedName,
    pub ts: u64,
    pub parents: BTreeSet<SymbolId>,
    pub children: BTreeSet<SymbolId>,
    pub stale: bool,
    pub object: Option<ObjectId>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LineageError {
    #[error("name '{0}' is not defined")]
    UnknownSymbol(String),
    #[error("object {0} is not registered")]
    UnknownObject(ObjectId),
}

/// Object identity to the symbols currently bound to it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasRegistry {
    map: HashMap<ObjectId, BTreeSet<SymbolId>>,
}

impl AliasRegistry {
    pub fn aliases(&self, obj: ObjectId) -> Option<&BTreeSet<SymbolId>> {
        self.map.get(&obj)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, &BTreeSet<SymbolId>)> {
        self.map.iter()
    }

    fn bind(&mut self, obj: ObjectId, sym: SymbolId) {
        self.map.entry(obj).or_default().insert(sym);
    }

    fn unbind(&mut self, obj: ObjectId, sym: SymbolId) {
        if let Some(set) = self.map.get_mut(&obj) {
            set.remove(&sym);
            if set.is_empty() {
                self.map.remove(&obj);
            }
        }
    }
}

/// How an update treats the target's existing parents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParentMode {
    Replace,
    Augment,
}

#[derive(Clone, Debug, Default)]
pub struct LineageGraph {
    symbols: BTreeMap<SymbolId, ShadowSymbol>,
    by_name: BTreeMap<QualifiedName, SymbolId>,
    aliases: AliasRegistry,
    next_id: SymbolId,
    /// Nodes popped by the most recent staleness propagation.
    pub last_visits: usize,
}

#[derive(Serialize)]
struct DumpEntry {
    name: String,
    ts: u64,
    stale: bool,
    parents: Vec<String>,
}

#[derive(Serialize)]
struct Dump {
    symbols: Vec<DumpEntry>,
}

impl LineageGraph {
    pub fn new() -> LineageGraph {
        LineageGraph::default()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, id: SymbolId) -> Option<&ShadowSymbol> {
        self.symbols.get(&id)
    }

    pub fn id_of(&self, name: &QualifiedName) -> Option<SymbolId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, name: &QualifiedName) -> Option<&ShadowSymbol> {
        self.id_of(name).and_then(|id| self.symbols.get(&id))
    }

    pub fn symbols(&self) -> impl Iterator<Item = &ShadowSymbol> {
        self.symbols.values()
    }

    pub fn aliases(&self) -> &AliasRegistry {
        &self.aliases
    }

    pub fn stale_names(&self) -> BTreeSet<QualifiedName> {
        self.symbols.values().filter(|s| s.stale).map(|s| s.name.clone()).collect()
    }

    /// Names of the members of `name` (symbols strictly below it in the namespace).
    pub fn members_of(&self, name: &QualifiedName) -> Vec<QualifiedName> {
        self.by_name
            .range(name.clone()..)
            .skip(1)
            .take_while(|(q, _)| q.starts_with(name))
            .filter(|(q, _)| q.path.len() > name.path.len())
            .map(|(q, _)| q.clone())
            .collect()
    }

    fn resolve(&self, uses: &BTreeSet<QualifiedName>) -> BTreeSet<SymbolId> {
        uses.iter().filter_map(|q| self.id_of(q)).collect()
    }

    fn create(&mut self, name: QualifiedName, ts: u64) -> SymbolId {
        let id = self.next_id;
        self.next_id += 1;
        self.by_name.insert(name.clone(), id);
        self.symbols.insert(
            id,
            ShadowSymbol {
                id,
                name,
                ts,
                parents: BTreeSet::new(),
                children: BTreeSet::new(),
                stale: false,
                object: None,
            },
        );
        id
    }

    fn bind_object(&mut self, id: SymbolId, object: Option<ObjectId>) {
        let old = self.symbols[&id].object;
        if old == object {
            return;
        }
        if let Some(o) = old {
            self.aliases.unbind(o, id);
        }
        if let Some(o) = object {
            self.aliases.bind(o, id);
        }
        self.symbols.get_mut(&id).unwrap().object = object;
    }

    fn set_parents(&mut self, id: SymbolId, parents: BTreeSet<SymbolId>) {
        let old = std::mem::take(&mut self.symbols.get_mut(&id).unwrap().parents);
        for p in old.difference(&parents) {
            if let Some(ps) = self.symbols.get_mut(p) {
                ps.children.remove(&id);
            }
        }
        for p in parents.difference(&old) {
            self.symbols.get_mut(p).unwrap().children.insert(id);
        }
        self.symbols.get_mut(&id).unwrap().parents = parents;
    }

    /// Plain (re)binding of `target`. Parents are replaced, except that a right-hand side
    /// reading the target itself keeps the old parents.
    pub fn apply_assignment(
        &mut self,
        target: &QualifiedName,
        rhs_uses: &BTreeSet<QualifiedName>,
        counter: u64,
        object: Option<ObjectId>,
    ) -> SymbolId {
        let mode = match self.id_of(target) {
            Some(_) if rhs_uses.contains(target) => ParentMode::Augment,
            _ => ParentMode::Replace,
        };
        self.update(target, rhs_uses, counter, object, mode)
    }

    /// Updates `target`'s timestamp and dependencies, then propagates staleness.
    pub fn update(
        &mut self,
        target: &QualifiedName,
        uses: &BTreeSet<QualifiedName>,
        counter: u64,
        object: Option<ObjectId>,
        mode: ParentMode,
    ) -> SymbolId {
        let resolved = self.resolve(uses);
        let (id, was_stale) = match self.id_of(target) {
            Some(id) => (id, self.symbols[&id].stale),
            None => (self.create(target.clone(), counter), false),
        };
        let mut parents = match mode {
            ParentMode::Replace => BTreeSet::new(),
            ParentMode::Augment => self.symbols[&id].parents.clone(),
        };
        parents.extend(resolved);
        parents.remove(&id);
        self.set_parents(id, parents);
        let sym = self.symbols.get_mut(&id).unwrap();
        sym.ts = sym.ts.max(counter);
        self.bind_object(id, object);
        self.refresh(&[id], !was_stale);
        id
    }

    /// Bumps every alias of `object` to `counter` and adds `extra_parents` to each.
    pub fn record_mutation(
        &mut self,
        object: ObjectId,
        extra_parents: &BTreeSet<QualifiedName>,
        counter: u64,
    ) -> Result<Vec<SymbolId>, LineageError> {
        let aliases: Vec<SymbolId> = self
            .aliases
            .aliases(object)
            .ok_or(LineageError::UnknownObject(object))?
            .iter()
            .copied()
            .collect();
        let resolved = self.resolve(extra_parents);
        let all_fresh = aliases.iter().all(|a| !self.symbols[a].stale);
        for &a in &aliases {
            let mut parents = self.symbols[&a].parents.clone();
            parents.extend(resolved.iter().copied());
            parents.remove(&a);
            self.set_parents(a, parents);
            let sym = self.symbols.get_mut(&a).unwrap();
            sym.ts = sym.ts.max(counter);
        }
        self.refresh(&aliases, all_fresh);
        Ok(aliases)
    }

    /// Points an existing symbol at a different runtime object without touching its lineage.
    pub fn rebind_object(&mut self, name: &QualifiedName, object: Option<ObjectId>) {
        if let Some(id) = self.id_of(name) {
            self.bind_object(id, object);
        }
    }

    /// Member symbol for a read of `name`, created on first access with the container's
    /// timestamp and no parents.
    pub fn touch_member(&mut self, name: &QualifiedName, object: Option<ObjectId>) -> Option<SymbolId> {
        if let Some(id) = self.id_of(name) {
            self.bind_object(id, object);
            return Some(id);
        }
        let container = name.parent()?;
        let ts = self.lookup(&container)?.ts;
        let id = self.create(name.clone(), ts);
        self.bind_object(id, object);
        Some(id)
    }

    /// Removes a symbol and its namespace members.
    pub fn delete_symbol(&mut self, name: &QualifiedName) -> Result<(), LineageError> {
        if self.id_of(name).is_none() {
            return Err(LineageError::UnknownSymbol(name.to_string()));
        }
        let mut doomed = vec![name.clone()];
        doomed.extend(self.members_of(name));
        self.delete_many(&doomed);
        Ok(())
    }

    /// Drops the members of `name`, e.g. after the base is rebound to another object.
    pub fn delete_members(&mut self, name: &QualifiedName) {
        let members = self.members_of(name);
        if !members.is_empty() {
            self.delete_many(&members);
        }
    }

    fn delete_many(&mut self, names: &[QualifiedName]) {
        let ids: BTreeSet<SymbolId> = names.iter().filter_map(|n| self.id_of(n)).collect();
        let mut orphans = BTreeSet::new();
        for &id in &ids {
            self.bind_object(id, None);
            self.set_parents(id, BTreeSet::new());
        }
        for &id in &ids {
            let sym = self.symbols.remove(&id).unwrap();
            self.by_name.remove(&sym.name);
            for c in sym.children {
                if let Some(cs) = self.symbols.get_mut(&c) {
                    cs.parents.remove(&id);
                    orphans.insert(c);
                }
            }
        }
        let seeds: Vec<SymbolId> = orphans.into_iter().collect();
        self.refresh(&seeds, false);
    }

    /// Restores the staleness fixed point after `seeds` changed.
    ///
    /// When every seed was non-stale beforehand no flag can clear, so a depth-first walk that
    /// only adds marks suffices. Otherwise the seeds' descendant region is recomputed.
    fn refresh(&mut self, seeds: &[SymbolId], seeds_were_fresh: bool) {
        self.last_visits = 0;
        if seeds_were_fresh {
            let mut stack: Vec<SymbolId> = Vec::new();
            for &s in seeds {
                if !self.symbols[&s].stale && self.predicate(s, None) {
                    self.symbols.get_mut(&s).unwrap().stale = true;
                }
                stack.push(s);
            }
            // Every node is pushed once when marked; a seed may come back through a cycle.
            while let Some(n) = stack.pop() {
                self.last_visits += 1;
                let children: Vec<SymbolId> = self.symbols[&n].children.iter().copied().collect();
                for c in children {
                    if self.symbols[&c].stale {
                        continue;
                    }
                    if self.predicate(c, None) {
                        self.symbols.get_mut(&c).unwrap().stale = true;
                        stack.push(c);
                    }
                }
            }
            return;
        }

        let mut region = BTreeSet::new();
        let mut stack: Vec<SymbolId> = seeds.to_vec();
        while let Some(n) = stack.pop() {
            if region.insert(n) {
                stack.extend(self.symbols[&n].children.iter().copied());
            }
        }
        for n in &region {
            self.symbols.get_mut(n).unwrap().stale = false;
        }
        let mut work: Vec<SymbolId> = region.iter().copied().filter(|&n| self.predicate(n, Some(&region))).collect();
        for n in &work {
            self.symbols.get_mut(n).unwrap().stale = true;
        }
        while let Some(n) = work.pop() {
            self.last_visits += 1;
            let children: Vec<SymbolId> = self.symbols[&n].children.iter().copied().collect();
            for c in children {
                let cs = self.symbols.get_mut(&c).unwrap();
                if !cs.stale {
                    cs.stale = true;
                    work.push(c);
                }
            }
        }
    }

    /// Staleness predicate for one node given current parent flags. Parents inside
    /// `unsettled` are only consulted for their timestamps.
    fn predicate(&self, n: SymbolId, unsettled: Option<&BTreeSet<SymbolId>>) -> bool {
        let sym = &self.symbols[&n];
        sym.parents.iter().any(|p| {
            let ps = &self.symbols[p];
            ps.ts > sym.ts || (ps.stale && unsettled.map_or(true, |u| !u.contains(p)))
        })
    }

    /// Debug dump `{"symbols": [{"name", "ts", "stale", "parents"}]}` sorted by name.
    pub fn dump(&self) -> serde_json::Value {
        let symbols = self
            .by_name
            .values()
            .map(|id| {
                let s = &self.symbols[id];
                let mut parents: Vec<String> = s.parents.iter().map(|p| self.symbols[p].name.to_string()).collect();
                parents.sort();
                DumpEntry {
                    name: s.name.to_string(),
                    ts: s.ts,
                    stale: s.stale,
                    parents,
                }
            })
            .collect();
        serde_json::to_value(Dump { symbols }).expect("dump serializes")
    }

    /// Checks parent/child symmetry and registry consistency. Used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        for s in self.symbols.values() {
            for p in &s.parents {
                let ps = self.symbols.get(p).ok_or_else(|| format!("{}: dangling parent", s.name))?;
                if !ps.children.contains(&s.id) {
                    return Err(format!("{} -> {} not mirrored", ps.name, s.name));
                }
            }
            for c in &s.children {
                let cs = self.symbols.get(c).ok_or_else(|| format!("{}: dangling child", s.name))?;
                if !cs.parents.contains(&s.id) {
                    return Err(format!("{} -> {} not mirrored", s.name, cs.name));
                }
            }
            if let Some(o) = s.object {
                if !self.aliases.aliases(o).is_some_and(|a| a.contains(&s.id)) {
                    return Err(format!("{} missing from alias registry", s.name));
                }
            }
            if self.by_name.get(&s.name) != Some(&s.id) {
                return Err(format!("{} missing from name index", s.name));
            }
        }
        for (o, set) in self.aliases.iter() {
            if set.is_empty() {
                return Err(format!("empty registry entry for object {o}"));
            }
            for id in set {
                if self.symbols.get(id).and_then(|s| s.object) != Some(*o) {
                    return Err(format!("registry entry {o} points at a symbol bound elsewhere"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> QualifiedName {
        s.parse().unwrap()
    }

    fn uses(names: &[&str]) -> BTreeSet<QualifiedName> {
        names.iter().map(|n| q(n)).collect()
    }

    fn stale(g: &LineageGraph, n: &str) -> bool {
        g.lookup(&q(n)).unwrap().stale
    }

    #[test]
    fn assignment_replaces_parents() {
        let mut g = LineageGraph::new();
        for (i, n) in ["f", "foo", "bar"].iter().enumerate() {
            g.apply_assignment(&q(n), &uses(&[]), i as u64 + 1, None);
        }
        g.apply_assignment(&q("gen"), &uses(&["f", "foo", "bar"]), 4, None);
        assert_eq!(g.lookup(&q("gen")).unwrap().parents.len(), 3);
        g.apply_assignment(&q("gen"), &uses(&["nope"]), 5, None);
        assert!(g.lookup(&q("gen")).unwrap().parents.is_empty());
        assert!(g.lookup(&q("f")).unwrap().children.is_empty());
        g.check_invariants().unwrap();
    }

    #[test]
    fn chain_and_diamond_propagation() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("a"), &uses(&[]), 1, None);
        g.apply_assignment(&q("b"), &uses(&["a"]), 2, None);
        g.apply_assignment(&q("c"), &uses(&["a"]), 3, None);
        g.apply_assignment(&q("d"), &uses(&["b", "c"]), 4, None);
        g.apply_assignment(&q("a"), &uses(&[]), 5, None);
        assert!(stale(&g, "b") && stale(&g, "c") && stale(&g, "d"));
        assert!(!stale(&g, "a"));
        // a, b, c, d each popped once
        assert_eq!(g.last_visits, 4);
    }

    #[test]
    fn stale_parent_makes_new_child_stale() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("a"), &uses(&[]), 1, None);
        g.apply_assignment(&q("x"), &uses(&["a"]), 2, None);
        g.apply_assignment(&q("a"), &uses(&[]), 3, None);
        g.apply_assignment(&q("b"), &uses(&["x"]), 4, None);
        assert!(stale(&g, "b"));
        g.apply_assignment(&q("x"), &uses(&["a"]), 5, None);
        assert!(!stale(&g, "x"));
        assert!(stale(&g, "b"));
    }

    #[test]
    fn mutation_bumps_all_aliases() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("lst"), &uses(&[]), 1, Some(7));
        g.apply_assignment(&q("y"), &uses(&["lst"]), 2, Some(7));
        g.apply_assignment(&q("x"), &uses(&[]), 3, None);
        let bumped = g.record_mutation(7, &uses(&["x"]), 4).unwrap();
        assert_eq!(bumped.len(), 2);
        assert_eq!(g.lookup(&q("lst")).unwrap().ts, 4);
        assert_eq!(g.lookup(&q("y")).unwrap().ts, 4);
        g.apply_assignment(&q("x"), &uses(&[]), 5, None);
        assert!(stale(&g, "lst"));
        assert_eq!(g.record_mutation(99, &uses(&[]), 6), Err(LineageError::UnknownObject(99)));
    }

    #[test]
    fn delete_detaches_and_recomputes() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("x"), &uses(&[]), 1, Some(1));
        g.apply_assignment(&q("z"), &uses(&[]), 2, None);
        g.apply_assignment(&q("y"), &uses(&["x", "z"]), 3, None);
        g.delete_symbol(&q("x")).unwrap();
        assert!(g.lookup(&q("x")).is_none());
        assert_eq!(g.lookup(&q("y")).unwrap().parents.len(), 1);
        assert!(g.aliases().is_empty());
        assert!(matches!(g.delete_symbol(&q("x")), Err(LineageError::UnknownSymbol(_))));
        g.check_invariants().unwrap();
    }

    #[test]
    fn members_are_lazy_and_deleted_with_base() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("d"), &uses(&[]), 3, Some(1));
        g.touch_member(&q("d.k"), None).unwrap();
        assert_eq!(g.lookup(&q("d.k")).unwrap().ts, 3);
        assert_eq!(g.members_of(&q("d")), vec![q("d.k")]);
        g.delete_symbol(&q("d")).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn dump_shape() {
        let mut g = LineageGraph::new();
        g.apply_assignment(&q("a"), &uses(&[]), 1, None);
        g.apply_assignment(&q("b"), &uses(&["a"]), 2, None);
        let d = g.dump();
        assert_eq!(d["symbols"][1]["name"], "b");
        assert_eq!(d["symbols"][1]["parents"][0], "a");
        assert_eq!(d["symbols"][1]["stale"], false);
    }
}
