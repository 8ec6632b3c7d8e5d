use std::collections::{HashMap, HashSet};

use crate::diagnostic::{Diagnostic, DiagnosticCode};

use super::{HierarchyMode, StoreParts};

/// Warehouse-wide referential checks over parsed documents.
///
/// Returns an empty list iff every fact reference resolves to a base-level
/// member, every Roll-up/Drill-Down entry points at an existing member of the
/// adjacent level, the two link directions agree, and (in strict mode) every
/// non-top member has exactly one parent.
pub fn check_integrity(parts: &StoreParts, mode: HierarchyMode) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();
    // dimension -> member id -> (level index, position in member list)
    let mut resolved: HashMap<&str, HashMap<&str, (usize, usize)>> = HashMap::new();

    for dim in &parts.model.dimensions {
        let members = parts.members.get(&dim.id).map(Vec::as_slice).unwrap_or(&[]);
        let mut ids: HashMap<&str, (usize, usize)> = HashMap::with_capacity(members.len());
        for (pos, m) in members.iter().enumerate() {
            let path = format!("{}/{}", dim.id, m.member_id);
            let Some(level) = dim.level_index(&m.level) else {
                out.push(Diagnostic::new(
                    UnknownLevel,
                    path,
                    format!("member sits at undeclared level {:?}", m.level),
                ));
                continue;
            };
            if ids.insert(&m.member_id, (level, pos)).is_some() {
                out.push(Diagnostic::new(
                    DuplicateMemberId,
                    path,
                    "member id appears more than once in the dimension",
                ));
                // keep the first occurrence for reference checks
                let first = members.iter().position(|o| o.member_id == m.member_id).unwrap();
                let first_level = dim.level_index(&members[first].level).unwrap_or(level);
                ids.insert(&m.member_id, (first_level, first));
            }
        }

        let top = dim.top_index();
        for m in members {
            let Some(level) = dim.level_index(&m.level) else { continue };
            let path = format!("{}/{}", dim.id, m.member_id);

            for parent in &m.roll_up {
                match ids.get(parent.as_str()) {
                    Some(&(pl, pp)) if pl == level + 1 => {
                        if !members[pp].drill_down.iter().any(|c| c == &m.member_id) {
                            out.push(Diagnostic::new(
                                AsymmetricHierarchy,
                                &path,
                                format!(
                                    "({}, {parent}): {parent} lists no Drill-Down back to {}",
                                    m.member_id, m.member_id
                                ),
                            ));
                        }
                    }
                    Some(_) => out.push(Diagnostic::new(
                        DanglingRollup,
                        &path,
                        format!("Roll-up {parent:?} is not at the next coarser level"),
                    )),
                    None => out.push(Diagnostic::new(
                        DanglingRollup,
                        &path,
                        format!("Roll-up {parent:?} names no member"),
                    )),
                }
            }
            for child in &m.drill_down {
                match ids.get(child.as_str()) {
                    Some(&(cl, cp)) if level > 0 && cl == level - 1 => {
                        if !members[cp].roll_up.iter().any(|p| p == &m.member_id) {
                            out.push(Diagnostic::new(
                                AsymmetricHierarchy,
                                &path,
                                format!(
                                    "({child}, {}): {child} lists no Roll-up to {}",
                                    m.member_id, m.member_id
                                ),
                            ));
                        }
                    }
                    Some(_) => out.push(Diagnostic::new(
                        DanglingDrilldown,
                        &path,
                        format!("Drill-Down {child:?} is not at the next finer level"),
                    )),
                    None => out.push(Diagnostic::new(
                        DanglingDrilldown,
                        &path,
                        format!("Drill-Down {child:?} names no member"),
                    )),
                }
            }

            if level < top {
                match mode {
                    HierarchyMode::Strict if m.roll_up.len() != 1 => out.push(Diagnostic::new(
                        NonstrictRollup,
                        &path,
                        format!("member has {} Roll-up parents, strict mode requires 1", m.roll_up.len()),
                    )),
                    HierarchyMode::Lenient if m.roll_up.is_empty() => out.push(Diagnostic::new(
                        MissingRollup,
                        &path,
                        "member below the top level has no Roll-up parent",
                    )),
                    _ => {}
                }
            }
            if mode == HierarchyMode::Strict && level > 0 && m.drill_down.is_empty() {
                out.push(Diagnostic::new(
                    EmptyDrilldown,
                    &path,
                    "member above the base level has no Drill-Down children",
                ));
            }
        }
        resolved.insert(dim.id.as_str(), ids);
    }

    for class in &parts.model.fact_classes {
        let facts = parts.facts.get(&class.id).map(Vec::as_slice).unwrap_or(&[]);
        for (pos, fact) in facts.iter().enumerate() {
            let label = fact.label(pos);
            let declared: HashSet<&str> = class.dimension_refs.iter().map(String::as_str).collect();
            for dim in &class.dimension_refs {
                let path = format!("{}/{label}/{dim}", class.id);
                match fact.dim_refs.get(dim) {
                    None => out.push(Diagnostic::new(DanglingFactRef, path, "fact has no reference for this dimension")),
                    Some(member) => match resolved.get(dim.as_str()).and_then(|ids| ids.get(member.as_str())) {
                        Some((0, _)) => {}
                        Some(_) => out.push(Diagnostic::new(
                            DanglingFactRef,
                            path,
                            format!("{member:?} is not a base-level member"),
                        )),
                        None => out.push(Diagnostic::new(
                            DanglingFactRef,
                            path,
                            format!("{member:?} names no member"),
                        )),
                    },
                }
            }
            for extra in fact.dim_refs.keys().filter(|d| !declared.contains(d.as_str())) {
                out.push(Diagnostic::new(
                    DanglingFactRef,
                    format!("{}/{label}/{extra}", class.id),
                    "fact references a dimension its class does not declare",
                ));
            }
        }
    }
    out
}
