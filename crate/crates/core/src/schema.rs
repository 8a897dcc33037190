//! Label schema: which labels are synthesised, predicted, evaluated,
//! stripped or swapped under a left/right flip.
//!
//! The text format has one label per line with five comma-separated columns:
//! `id, name, flags, flip partner, lesion host`. Flags are `;`-separated
//! words from `predict`, `evaluate`, `extracerebral`, `csf`, `lesion` and
//! `fill`; `-` marks an empty column and `#` starts a comment. See
//! `data/brain_labels.txt` for the built-in schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::LabelPairTable;

const DEFAULT_BRAIN_SCHEMA: &str = include_str!("../data/brain_labels.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub id: i32,
    pub name: String,
    pub predict: bool,
    pub evaluate: bool,
    pub extracerebral: bool,
    pub csf: bool,
    pub lesion: bool,
    pub fill: bool,
    pub flip_partner: Option<i32>,
    pub lesion_host: Option<i32>,
}

impl LabelEntry {
    fn flags(&self) -> Vec<&'static str> {
        [
            (self.predict, "predict"),
            (self.evaluate, "evaluate"),
            (self.extracerebral, "extracerebral"),
            (self.csf, "csf"),
            (self.lesion, "lesion"),
            (self.fill, "fill"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    entries: BTreeMap<i32, LabelEntry>,
    /// Sub-label to parent label, for maps produced by label subdivision.
    parents: BTreeMap<i32, i32>,
}

fn optional_label(field: &str, line_no: usize) -> Result<Option<i32>> {
    if field == "-" || field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Schema(format!("line {line_no}: `{field}` is not a label id")))
}

impl LabelSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(Error::Schema(format!(
                    "line {line_no}: expected 5 columns, found {}",
                    cols.len()
                )));
            }
            let id: i32 = cols[0]
                .parse()
                .map_err(|_| Error::Schema(format!("line {line_no}: `{}` is not a label id", cols[0])))?;
            let mut entry = LabelEntry {
                id,
                name: cols[1].to_string(),
                predict: false,
                evaluate: false,
                extracerebral: false,
                csf: false,
                lesion: false,
                fill: false,
                flip_partner: optional_label(cols[3], line_no)?,
                lesion_host: optional_label(cols[4], line_no)?,
            };
            if cols[2] != "-" {
                for flag in cols[2].split(';').map(str::trim).filter(|f| !f.is_empty()) {
                    let slot = match flag {
                        "predict" => &mut entry.predict,
                        "evaluate" => &mut entry.evaluate,
                        "extracerebral" => &mut entry.extracerebral,
                        "csf" => &mut entry.csf,
                        "lesion" => &mut entry.lesion,
                        "fill" => &mut entry.fill,
                        other => {
                            return Err(Error::Schema(format!("line {line_no}: unknown flag `{other}`")));
                        }
                    };
                    *slot = true;
                }
            }
            if entries.insert(id, entry).is_some() {
                return Err(Error::Schema(format!("line {line_no}: label {id} declared twice")));
            }
        }
        let schema = LabelSchema {
            entries,
            parents: BTreeMap::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The built-in whole-head schema.
    pub fn default_brain() -> Self {
        Self::parse(DEFAULT_BRAIN_SCHEMA).expect("built-in schema is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Schema("no labels declared".into()));
        }
        let mut csf = None;
        for e in self.entries.values() {
            let exclusive = [e.extracerebral, e.csf, e.lesion].iter().filter(|&&b| b).count();
            if exclusive > 1 {
                return Err(Error::Schema(format!(
                    "label {} combines more than one of extracerebral, csf and lesion",
                    e.id
                )));
            }
            if e.evaluate && !e.predict {
                return Err(Error::Schema(format!("label {} is evaluated but not predicted", e.id)));
            }
            if e.csf {
                if let Some(other) = csf.replace(e.id) {
                    return Err(Error::Schema(format!("labels {other} and {} are both marked csf", e.id)));
                }
            }
            match (e.lesion, e.lesion_host) {
                (true, None) => {
                    return Err(Error::Schema(format!("lesion label {} has no host label", e.id)));
                }
                (false, Some(_)) => {
                    return Err(Error::Schema(format!("label {} has a host but is not a lesion", e.id)));
                }
                (true, Some(h)) => match self.entries.get(&h) {
                    Some(host) if !host.lesion => {}
                    _ => {
                        return Err(Error::Schema(format!(
                            "lesion label {} names host {h}, which is not a declared non-lesion label",
                            e.id
                        )));
                    }
                },
                (false, None) => {}
            }
            if let Some(p) = e.flip_partner {
                match self.entries.get(&p) {
                    Some(partner) if partner.flip_partner == Some(e.id) && p != e.id => {}
                    _ => {
                        return Err(Error::Schema(format!(
                            "flip partner {p} of label {} is missing or not reciprocal",
                            e.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Attaches a sub-label to parent mapping. Sub-labels inherit every
    /// property of their parent, and targets are built from parent ids.
    pub fn with_parent_mapping(mut self, parents: BTreeMap<i32, i32>) -> Result<Self> {
        let parent_ids: BTreeSet<i32> = parents.values().copied().collect();
        for (&sub, &parent) in &parents {
            if !self.entries.contains_key(&parent) {
                return Err(Error::Schema(format!("sub-label {sub} maps to undeclared parent {parent}")));
            }
            if sub != parent && parent_ids.contains(&sub) {
                return Err(Error::Schema(format!("sub-label {sub} collides with a parent label id")));
            }
            if sub != parent && self.entries.contains_key(&sub) && !parent_ids.contains(&sub) {
                // A sub-label reusing a declared id would be ambiguous in targets.
                if self.entries[&sub].predict {
                    return Err(Error::Schema(format!(
                        "sub-label {sub} reuses the id of predicted label {sub}"
                    )));
                }
            }
        }
        self.parents = parents;
        Ok(self)
    }

    pub fn parent_mapping(&self) -> &BTreeMap<i32, i32> {
        &self.parents
    }

    /// Parent label of `label`, or `label` itself when it is not a sub-label.
    pub fn parent_of(&self, label: i32) -> i32 {
        self.parents.get(&label).copied().unwrap_or(label)
    }

    pub fn entry(&self, label: i32) -> Option<&LabelEntry> {
        self.entries.get(&self.parent_of(label))
    }

    pub fn entries(&self) -> impl Iterator<Item = &LabelEntry> {
        self.entries.values()
    }

    fn with_flag(&self, flag: impl Fn(&LabelEntry) -> bool) -> BTreeSet<i32> {
        self.entries.values().filter(|e| flag(e)).map(|e| e.id).collect()
    }

    /// Every label id a synthesis map may contain.
    pub fn generation_labels(&self) -> BTreeSet<i32> {
        self.entries.keys().chain(self.parents.keys()).copied().collect()
    }

    pub fn target_labels(&self) -> BTreeSet<i32> {
        self.with_flag(|e| e.predict)
    }

    pub fn evaluate_labels(&self) -> BTreeSet<i32> {
        self.with_flag(|e| e.evaluate)
    }

    pub fn extracerebral_labels(&self) -> BTreeSet<i32> {
        self.with_flag(|e| e.extracerebral)
    }

    pub fn lesion_labels(&self) -> BTreeSet<i32> {
        self.with_flag(|e| e.lesion)
    }

    pub fn fillable_labels(&self) -> BTreeSet<i32> {
        self.with_flag(|e| e.fill)
    }

    pub fn csf_label(&self) -> Option<i32> {
        self.entries.values().find(|e| e.csf).map(|e| e.id)
    }

    pub fn is_extracerebral(&self, label: i32) -> bool {
        self.entry(label).is_some_and(|e| e.extracerebral)
    }

    pub fn is_csf(&self, label: i32) -> bool {
        self.entry(label).is_some_and(|e| e.csf)
    }

    pub fn lesion_host(&self, label: i32) -> Option<i32> {
        self.entry(label).filter(|e| e.lesion).and_then(|e| e.lesion_host)
    }

    /// Label kept in the target for `label`, or `None` if it becomes
    /// background.
    pub fn target_of(&self, label: i32) -> Option<i32> {
        let parent = self.parent_of(label);
        self.entries.get(&parent).filter(|e| e.predict).map(|e| e.id)
    }

    /// Pair table for left/right flips. A sub-label swaps with the sub-label
    /// of the same index under the partner parent; without such a partner it
    /// maps onto itself.
    pub fn flip_table(&self) -> LabelPairTable {
        let mut pairs = Vec::new();
        let mut neutral = BTreeSet::new();
        let mut paired = BTreeSet::new();
        for e in self.entries.values() {
            match e.flip_partner {
                Some(p) if e.id < p => pairs.push((e.id, p)),
                Some(_) => {}
                None => {
                    neutral.insert(e.id);
                }
            }
        }
        for &id in self.entries.keys() {
            if self.parents.contains_key(&id) {
                neutral.remove(&id);
                pairs.retain(|&(a, b)| a != id && b != id);
            }
        }
        for (&sub, &parent) in &self.parents {
            if paired.contains(&sub) {
                continue;
            }
            let partner_parent = self.entries[&parent].flip_partner;
            let partner_sub = partner_parent.and_then(|pp| {
                let index = sub - parent * 1000;
                let candidate = pp * 1000 + index;
                (candidate != sub && self.parents.get(&candidate) == Some(&pp)).then_some(candidate)
            });
            match partner_sub {
                Some(ps) => {
                    paired.insert(sub);
                    paired.insert(ps);
                    pairs.push((sub.min(ps), sub.max(ps)));
                }
                None => {
                    neutral.insert(sub);
                }
            }
        }
        // Parent ids that do not occur as sub-labels stay valid for maps
        // mixing subdivided and plain labels.
        let used: BTreeSet<i32> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        neutral.retain(|l| !used.contains(l));
        LabelPairTable::new(pairs, neutral).expect("schema validation guarantees a consistent pair table")
    }

    /// Canonical text form, including any parent mapping as comments.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# id, name, flags, flip partner, lesion host\n");
        for e in self.entries.values() {
            let flags = e.flags();
            let opt = |v: Option<i32>| v.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{}, {}, {}, {}, {}",
                e.id,
                e.name,
                if flags.is_empty() { "-".to_string() } else { flags.join(";") },
                opt(e.flip_partner),
                opt(e.lesion_host)
            );
        }
        for (sub, parent) in &self.parents {
            let _ = writeln!(out, "# sub-label {sub} -> {parent}");
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Reads a `sub,parent` mapping file as written by label subdivision.
pub fn parse_parent_mapping(text: &str) -> Result<BTreeMap<i32, i32>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("sub_label") {
            continue;
        }
        let parsed: Option<(i32, i32)> = line
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        let (sub, parent) = parsed.ok_or_else(|| Error::Schema(format!("mapping line {}: expected `sub,parent`", i + 1)))?;
        if map.insert(sub, parent).is_some() {
            return Err(Error::Schema(format!("mapping line {}: sub-label {sub} repeated", i + 1)));
        }
    }
    Ok(map)
}

/// Writes a mapping in the format read by [`parse_parent_mapping`].
pub fn format_parent_mapping(map: &BTreeMap<i32, i32>) -> String {
    let mut out = String::from("sub_label,parent_label\n");
    for (sub, parent) in map {
        let _ = writeln!(out, "{sub},{parent}");
    }
    out
}
