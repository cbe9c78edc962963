//! Loop and call copies: fresh renaming (`reL`, `reP` and their inverse
//! counterparts), harvesting and reinstalling identifier stacks (`getAI`,
//! `setAI`) and stack reflection (`refW`, `refC`).

use crate::error::{ExecError, ExecResult};
use crate::lang::{Annot, ConstructId, IdStack, Prog, Site, StmtKind};
use crate::state::{CopyEntry, CopyRecord};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Next free version per construct base. Versions start at 1 because the
/// original program uses 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RenameSupply(BTreeMap<String, u32>);

impl RenameSupply {
    /// Supply that will not reissue any version present in `p`.
    pub fn for_program<A: Annot>(p: &Prog<A>) -> Self {
        let mut s = RenameSupply::default();
        s.observe(p);
        s
    }

    pub fn observe<A: Annot>(&mut self, p: &Prog<A>) {
        for id in p.construct_ids() {
            self.observe_id(&id);
        }
    }

    pub fn observe_id(&mut self, id: &ConstructId) {
        let e = self.0.entry(id.base.clone()).or_insert(1);
        if *e <= id.version {
            *e = id.version + 1;
        }
    }

    pub fn fresh(&mut self, id: &ConstructId) -> ConstructId {
        let e = self.0.entry(id.base.clone()).or_insert(1);
        let v = *e;
        *e += 1;
        id.with_version(v)
    }
}

/// Give every construct defined in `body` a fresh version and rewrite paths
/// to match. Identifier stacks are kept.
pub fn rename_fresh<A: Annot>(body: &mut Prog<A>, supply: &mut RenameSupply) {
    let mut map: HashMap<ConstructId, ConstructId> = HashMap::new();
    for id in body.construct_ids() {
        if let std::collections::hash_map::Entry::Vacant(e) = map.entry(id) {
            let n = supply.fresh(e.key());
            e.insert(n);
        }
    }
    if !map.is_empty() {
        body.rename_all(&|id| map.get(id).cloned());
    }
}

/// `getAI`: names and stacks of the copy, preorder, without entering nested
/// loop, call or procedure bodies.
pub fn get_ai(body: &Prog<IdStack>) -> CopyRecord {
    let mut out = Vec::new();
    body.for_each_stmt(false, &mut |s| {
        out.push(CopyEntry { site: s.site, id: s.construct_id().cloned(), stack: s.stack().cloned() });
    });
    CopyRecord(out)
}

/// `setAI`: install the names and stacks of `rec` into `body`, matching
/// statements by site. The body may list statements in a different order
/// (an inverted body), but must have exactly the recorded statements.
pub fn set_ai(body: &mut Prog<IdStack>, rec: &CopyRecord) -> ExecResult<()> {
    let by_site: HashMap<Site, &CopyEntry> = rec.0.iter().map(|e| (e.site, e)).collect();
    if by_site.len() != rec.0.len() {
        return Err(ExecError::CopyMismatch("record lists a statement twice".into()));
    }
    let mut renames: HashMap<ConstructId, ConstructId> = HashMap::new();
    let mut seen = 0usize;
    let mut err: Option<ExecError> = None;
    body.for_each_stmt_mut(false, &mut |s| {
        if err.is_some() {
            return;
        }
        seen += 1;
        let Some(e) = by_site.get(&s.site) else {
            err = Some(ExecError::CopyMismatch(format!("no entry for statement at site {}", s.site.0)));
            return;
        };
        match (s.construct_id(), &e.id) {
            (Some(old), Some(new)) if old.base == new.base => {
                renames.insert(old.clone(), new.clone());
            }
            (None, None) => {}
            _ => {
                err = Some(ExecError::CopyMismatch(format!("construct mismatch at site {}", s.site.0)));
                return;
            }
        }
        if let Some(st) = &e.stack {
            match &mut s.kind {
                StmtKind::Skip { stack } => *stack = Some(st.clone()),
                _ => match s.stack_mut() {
                    Some(slot) => *slot = st.clone(),
                    None => err = Some(ExecError::CopyMismatch(format!("no stack slot at site {}", s.site.0))),
                },
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if seen != rec.0.len() {
        return Err(ExecError::CopyMismatch(format!("record has {} entries, body has {seen}", rec.0.len())));
    }
    if !renames.is_empty() {
        body.rename_all(&|id| renames.get(id).cloned());
    }
    Ok(())
}

/// Copy the stacks of `source` onto the statements of `target` with the same
/// site, without entering nested loop, call or procedure bodies. Used for
/// `refW`, `refC` and for keeping the whole-program record current.
pub fn reflect(target: &mut Prog<IdStack>, source: &Prog<IdStack>) {
    let mut stacks: HashMap<Site, &IdStack> = HashMap::new();
    source.for_each_stmt(false, &mut |s| {
        if s.site != Site::NONE {
            if let Some(st) = s.stack() {
                stacks.insert(s.site, st);
            }
        }
    });
    target.for_each_stmt_mut(false, &mut |s| {
        if let Some(st) = stacks.get(&s.site) {
            match &mut s.kind {
                StmtKind::Skip { stack } => *stack = Some((*st).clone()),
                _ => {
                    if let Some(slot) = s.stack_mut() {
                        if slot != *st {
                            *slot = (*st).clone();
                        }
                    }
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{ann, parse_program};
    use crate::lang::StmtKind;

    fn body() -> Prog<IdStack> {
        let p = ann(&parse_program("while w1 T do begin b2 var t = 0; if i3 t > 0 then t = 1 end end end").unwrap());
        match p.as_stmt().unwrap().kind.clone() {
            StmtKind::While { body, .. } => body,
            _ => unreachable!(),
        }
    }

    #[test]
    fn fresh_versions() {
        let mut b = body();
        let mut sup = RenameSupply::for_program(&b);
        rename_fresh(&mut b, &mut sup);
        let ids: Vec<String> = b.construct_ids().iter().map(|c| c.to_string()).collect();
        assert_eq!(ids, vec!["b2.1", "i3.1"]);
        rename_fresh(&mut b, &mut sup);
        let ids: Vec<String> = b.construct_ids().iter().map(|c| c.to_string()).collect();
        assert_eq!(ids, vec!["b2.2", "i3.2"]);
        // paths follow the block
        b.for_each_stmt(true, &mut |s| {
            if let Some(p) = s.path() {
                assert_eq!(p.to_string(), "b2.2");
            }
        });
        let mut plain = ann(&parse_program("X = 1").unwrap());
        let before = plain.clone();
        rename_fresh(&mut plain, &mut sup);
        assert_eq!(plain, before);
    }

    #[test]
    fn get_set_round_trip() {
        let mut b = body();
        let mut sup = RenameSupply::for_program(&b);
        rename_fresh(&mut b, &mut sup);
        let mut n = 10;
        b.for_each_stmt_mut(false, &mut |s| {
            if let Some(st) = s.stack_mut() {
                st.push(n);
                n += 1;
            }
        });
        let rec = get_ai(&b);
        assert_eq!(rec.0.len(), 6);
        let mut fresh = body();
        set_ai(&mut fresh, &rec).unwrap();
        assert_eq!(fresh, b);
        assert_eq!(get_ai(&fresh), rec);

        let mut wrong = ann(&parse_program("X = 1").unwrap());
        assert!(set_ai(&mut wrong, &rec).is_err());
        assert!(get_ai(&Prog::Empty).0.is_empty());
    }

    #[test]
    fn reflect_sync() {
        let target = body();
        let mut src = body();
        src.for_each_stmt_mut(false, &mut |s| {
            if let Some(st) = s.stack_mut() {
                st.push(4);
            }
        });
        let mut t = target.clone();
        reflect(&mut t, &src);
        assert_eq!(t, src);
        let again = t.clone();
        reflect(&mut t, &src);
        assert_eq!(t, again);
    }
}
